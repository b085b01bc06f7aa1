"""Dispatch for the hot convolution kernels.

Default is the numba-jitted path. Set MSQALE_PURE_NUMPY=1 to force the
vectorized numpy fallback (also used automatically when numba is absent).
`benchmarks/bench_kernels.py` times the two side by side.
"""

import os

PURE_NUMPY = os.environ.get("MSQALE_PURE_NUMPY", "0") not in ("", "0")

if PURE_NUMPY:
    from .kernels_numpy import conv2d_s2, conv2d_s2_grads

    USING_NUMBA = False
else:
    try:
        from .kernels_numba import conv2d_s2, conv2d_s2_grads

        USING_NUMBA = True
    except ImportError:  # numba unavailable: degrade silently
        from .kernels_numpy import conv2d_s2, conv2d_s2_grads

        USING_NUMBA = False

__all__ = ["conv2d_s2", "conv2d_s2_grads", "USING_NUMBA", "PURE_NUMPY"]
