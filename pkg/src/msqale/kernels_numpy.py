"""Vectorized numpy implementations of the hot convolution kernels.

Reference/fallback path; `msqale.kernels` picks these when numba is missing
or MSQALE_PURE_NUMPY=1 is set. 3x3 convolution, stride 2, zero padding 1.
"""

import numpy as np


def _im2col(x, ho, wo):
    ci, h, w = x.shape
    xp = np.zeros((ci, h + 2, w + 2), dtype=np.float64)
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((ci, 3, 3, ho, wo), dtype=np.float64)
    for u in range(3):
        for v in range(3):
            cols[:, u, v] = xp[:, u : u + 2 * (ho - 1) + 1 : 2, v : v + 2 * (wo - 1) + 1 : 2]
    return cols


def conv2d_s2(x, w, b):
    ci, h, wd = x.shape
    ho = (h - 1) // 2 + 1
    wo = (wd - 1) // 2 + 1
    cols = _im2col(x, ho, wo)
    y = np.tensordot(w, cols, axes=([1, 2, 3], [0, 1, 2]))
    return y + b[:, None, None]


def conv2d_s2_grads(x, w, dy):
    ci, h, wd = x.shape
    ho, wo = dy.shape[1], dy.shape[2]
    cols = _im2col(x, ho, wo)
    dw = np.tensordot(dy, cols, axes=([1, 2], [3, 4]))
    db = dy.sum(axis=(1, 2))
    # scatter-add into the padded grid; disjoint strided slices keep it exact
    t = np.tensordot(w, dy, axes=(0, 0))  # (ci, 3, 3, ho, wo)
    dxp = np.zeros((ci, h + 2, wd + 2), dtype=np.float64)
    for u in range(3):
        for v in range(3):
            dxp[:, u : u + 2 * (ho - 1) + 1 : 2, v : v + 2 * (wo - 1) + 1 : 2] += t[:, u, v]
    return dw, db, dxp[:, 1:-1, 1:-1]
