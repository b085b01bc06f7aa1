"""numba fast path for the hot convolution kernels (3x3, stride 2, zero pad 1).

Each output element is accumulated by exactly one thread in a fixed order, so
results are reproducible regardless of thread count. Tap loops hoist the
weight and precompute the index range that stays inside the image, keeping
the innermost loop branch-free.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _tap_range(offset, size, out_size):
    """Output indices i for which 2*i + offset - 1 lands inside [0, size)."""
    lo = 1 if offset == 0 else 0
    hi = min(out_size - 1, (size - offset) // 2)
    return lo, hi + 1


@njit(cache=True, parallel=True)
def conv2d_s2(x, w, b):
    ci, h, wd = x.shape
    co = w.shape[0]
    ho = (h - 1) // 2 + 1
    wo = (wd - 1) // 2 + 1
    y = np.empty((co, ho, wo))
    for o in prange(co):
        for i in range(ho):
            for j in range(wo):
                y[o, i, j] = b[o]
        for c in range(ci):
            for u in range(3):
                i0, i1 = _tap_range(u, h, ho)
                for v in range(3):
                    j0, j1 = _tap_range(v, wd, wo)
                    wv = w[o, c, u, v]
                    for i in range(i0, i1):
                        ii = 2 * i + u - 1
                        for j in range(j0, j1):
                            y[o, i, j] += wv * x[c, ii, 2 * j + v - 1]
    return y


@njit(cache=True, parallel=True)
def conv2d_s2_grads(x, w, dy):
    ci, h, wd = x.shape
    co = w.shape[0]
    ho = dy.shape[1]
    wo = dy.shape[2]
    dw = np.zeros_like(w)
    db = np.zeros(co)
    dx = np.zeros_like(x)
    for o in prange(co):
        s = 0.0
        for i in range(ho):
            for j in range(wo):
                g = dy[o, i, j]
                s += g
                for c in range(ci):
                    for u in range(3):
                        ii = 2 * i + u - 1
                        if ii < 0 or ii >= h:
                            continue
                        for v in range(3):
                            jj = 2 * j + v - 1
                            if jj < 0 or jj >= wd:
                                continue
                            dw[o, c, u, v] += g * x[c, ii, jj]
        db[o] = s
    for c in prange(ci):
        for o in range(co):
            for i in range(ho):
                for j in range(wo):
                    g = dy[o, i, j]
                    for u in range(3):
                        ii = 2 * i + u - 1
                        if ii < 0 or ii >= h:
                            continue
                        for v in range(3):
                            jj = 2 * j + v - 1
                            if jj < 0 or jj >= wd:
                                continue
                            dx[c, ii, jj] += g * w[o, c, u, v]
    return dw, db, dx
