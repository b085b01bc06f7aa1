"""Separable filtering with mirror borders, shared by pyramid, pristine and NSS code.

Mirror reflection excludes the edge sample (numpy.pad mode="reflect"):
[a b c d] padded by 2 on the left reads [c b | a b c d]. All filters here are
odd-length, symmetric and applied per channel.
"""

import numpy as np


def sepconv2d(img, kernel):
    """Convolve rows then columns with a 1-D kernel, mirror border."""
    k = np.asarray(kernel, dtype=np.float64)
    r = len(k) // 2
    squeeze = img.ndim == 2
    a = img[:, :, None] if squeeze else img
    pad = ((r, r), (0, 0), (0, 0))
    ap = np.pad(a, pad, mode="reflect")
    out = np.zeros_like(a, dtype=np.float64)
    h = a.shape[0]
    for i, kv in enumerate(k):
        out += kv * ap[i : i + h]
    ap = np.pad(out, ((0, 0), (r, r), (0, 0)), mode="reflect")
    out = np.zeros_like(a, dtype=np.float64)
    w = a.shape[1]
    for i, kv in enumerate(k):
        out += kv * ap[:, i : i + w]
    return out[:, :, 0] if squeeze else out


def gaussian_kernel1d(sigma, radius):
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()

# 7x7 Gaussian window (sigma = 7/6), the local-statistics window used for both
# the sharpness field and MSCN moments.
WINDOW7 = gaussian_kernel1d(7.0 / 6.0, 3)


def local_mean_std(img2d, kernel=WINDOW7):
    """Gaussian-weighted local mean and standard deviation fields."""
    mu = sepconv2d(img2d, kernel)
    second = sepconv2d(img2d * img2d, kernel)
    var = np.maximum(second - mu * mu, 0.0)
    return mu, np.sqrt(var)


def gaussian_blur(img, sigma):
    """Isotropic Gaussian blur, mirror border; sigma 0 is the identity."""
    if sigma <= 0:
        return img.copy()
    radius = max(1, int(np.ceil(3.0 * sigma)))
    return sepconv2d(img, gaussian_kernel1d(sigma, radius))


def box_downsample2(img):
    """2x box downsample (average of 2x2 blocks, trailing odd row/col cropped)."""
    h, w = img.shape[:2]
    h2, w2 = h - h % 2, w - w % 2
    a = img[:h2, :w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])
