"""Independent reference implementations used to cross-check the package.

Everything here is deliberately naive (double loops, explicit index
mirroring) so a bug in the vectorized production code cannot hide in a
shared helper.
"""

import numpy as np


def mirror_index(i, n):
    """Reflect an out-of-range index without duplicating the edge sample:
    [-2,-1,0,1] maps to [2,1,0,1] for n >= 3."""
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def conv2d_mirror(img2d, kernel2d):
    """Direct 2-D convolution with mirrored borders, double loop."""
    h, w = img2d.shape
    kh, kw = kernel2d.shape
    rh, rw = kh // 2, kw // 2
    out = np.zeros((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(kh):
                for v in range(kw):
                    yy = mirror_index(y + u - rh, h)
                    xx = mirror_index(x + v - rw, w)
                    acc += kernel2d[u, v] * img2d[yy, xx]
            out[y, x] = acc
    return out


def local_moments_mirror(img2d, kernel1d):
    """Gaussian-windowed local mean and std via the naive convolution."""
    k2 = np.outer(kernel1d, kernel1d)
    mu = conv2d_mirror(img2d, k2)
    second = conv2d_mirror(img2d * img2d, k2)
    var = np.maximum(second - mu * mu, 0.0)
    return mu, np.sqrt(var)


def conv3x3_s2_zero(x, w, b):
    """Loop 3x3 stride-2 zero-pad-1 convolution, one output at a time."""
    ci, h, wd = x.shape
    co = w.shape[0]
    ho = (h - 1) // 2 + 1
    wo = (wd - 1) // 2 + 1
    y = np.zeros((co, ho, wo), dtype=np.float64)
    for o in range(co):
        for i in range(ho):
            for j in range(wo):
                acc = b[o]
                for c in range(ci):
                    for u in range(3):
                        for v in range(3):
                            ii = 2 * i + u - 1
                            jj = 2 * j + v - 1
                            if 0 <= ii < h and 0 <= jj < wd:
                                acc += w[o, c, u, v] * x[c, ii, jj]
                y[o, i, j] = acc
    return y


def softmax_ce(sims, tau):
    """Cross-entropy of index 0 under softmax(sims / tau), brute force."""
    a = np.asarray(sims, dtype=np.float64) / tau
    p = np.exp(a) / np.exp(a).sum()
    return -float(np.log(p[0]))


def two_pass_mean_cov(x):
    """Textbook mean then (n-1)-normalized covariance, explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    mu = np.zeros(d)
    for row in x:
        mu += row
    mu /= n
    cov = np.zeros((d, d))
    for row in x:
        c = row - mu
        cov += np.outer(c, c)
    return mu, cov / (n - 1)
