"""Subband levels shared by training and scoring.

One encoder is trained per level. Levels are encoded as ints:
0 is the full-colour image, 1..M are the luma highpass bands, -1 is the
luma lowpass residual. Highpass values are signed, roughly in [-1, 1], and
are shifted by x/2 + 1/2 so every encoder sees inputs in [0, 1]. Single
channel bands are replicated to three channels so all encoders share one
input layout.
"""

import numpy as np

from .core import luma
from .pyramid import decompose

LEVEL_IMAGE = 0
LEVEL_LOWPASS = -1


def level_list(m):
    """Levels trained for pyramid depth m: image, hp1..hpm, lowpass."""
    if m < 0:
        raise ValueError(f"pyramid depth must be >= 0, got {m}")
    if m == 0:
        return [LEVEL_IMAGE]
    return [LEVEL_IMAGE] + list(range(1, m + 1)) + [LEVEL_LOWPASS]


def level_name(level):
    if level == LEVEL_IMAGE:
        return "image"
    if level == LEVEL_LOWPASS:
        return "low"
    if level > 0:
        return f"hp{level}"
    raise ValueError(f"unknown level {level}")


def level_bands(img, m):
    """Decompose an RGB float image into {level: 3-channel [0,1] array}.

    The pyramid runs on luma; the image level keeps colour. All encoders
    therefore receive HxWx3 arrays at the native resolution of their level.
    """
    img = np.asarray(img, dtype=np.float64)
    bands = {LEVEL_IMAGE: img}
    if m == 0:
        return bands
    pyr = decompose(luma(img), m)
    for i, hp in enumerate(pyr.highpass):
        shifted = np.clip(0.5 * hp + 0.5, 0.0, 1.0)
        bands[i + 1] = np.repeat(shifted[:, :, None], 3, axis=2)
    low = np.clip(pyr.lowpass, 0.0, 1.0)
    bands[LEVEL_LOWPASS] = np.repeat(low[:, :, None], 3, axis=2)
    return bands
