"""Laplacian pyramid decompose / reconstruct.

Binomial kernel [1 4 6 4 1]/16, mirror borders without edge duplication.
Downsampling keeps the even-index samples so an n-length axis becomes
ceil(n/2); upsampling zero-stuffs back to a recorded shape and blurs with
the doubled kernel, which makes reconstruction exact by construction.
"""

from dataclasses import dataclass, field

import numpy as np

from .filters import sepconv2d

KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def blur(img):
    return sepconv2d(img, KERNEL)


def downsample(img):
    """Blur then keep even-index rows/columns: n -> ceil(n/2)."""
    return blur(img)[0::2, 0::2]


def upsample(img, out_shape):
    """Zero-stuff to out_shape then blur with 2x kernel (gain restore)."""
    oh, ow = out_shape[:2]
    if img.ndim == 3:
        up = np.zeros((oh, ow, img.shape[2]), dtype=np.float64)
    else:
        up = np.zeros((oh, ow), dtype=np.float64)
    up[0::2, 0::2] = img
    return sepconv2d(up, 2.0 * KERNEL)


@dataclass
class Pyramid:
    """highpass[m] is level m+1 detail; lowpass is the final residual."""

    highpass: list = field(default_factory=list)
    lowpass: np.ndarray = None

    @property
    def levels(self):
        return len(self.highpass)


def decompose(img, levels):
    """Split img into `levels` highpass bands plus a lowpass residual."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    cur = np.asarray(img, dtype=np.float64)
    bands = []
    for _ in range(levels):
        if min(cur.shape[:2]) < 2:
            raise ValueError(
                f"image too small for {levels} pyramid levels "
                f"(reached {cur.shape[0]}x{cur.shape[1]})"
            )
        down = downsample(cur)
        bands.append(cur - upsample(down, cur.shape))
        cur = down
    return Pyramid(highpass=bands, lowpass=cur)


def reconstruct(pyr):
    """Invert decompose exactly (up to float rounding)."""
    cur = np.asarray(pyr.lowpass, dtype=np.float64)
    for band in reversed(pyr.highpass):
        cur = band + upsample(cur, band.shape)
    return cur
