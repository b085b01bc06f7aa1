"""Time the jitted convolution kernels against the pure-numpy fallback.

The numba path is imported directly; the numpy path is what
MSQALE_PURE_NUMPY=1 selects. Run:

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from msqale.kernels_numpy import conv2d_s2 as np_fwd
from msqale.kernels_numpy import conv2d_s2_grads as np_grads

try:
    from msqale.kernels_numba import conv2d_s2 as nb_fwd
    from msqale.kernels_numba import conv2d_s2_grads as nb_grads
except ImportError:
    nb_fwd = nb_grads = None

CASES = [
    ("encoder block 1", 3, 16, 64),
    ("encoder block 2", 16, 32, 32),
    ("encoder block 3", 32, 64, 16),
    ("large input", 3, 16, 160),
]


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    header = f"{'case':<16} {'shape':<16} {'numpy fwd':>11} {'numba fwd':>11} {'x':>6}   {'numpy bwd':>11} {'numba bwd':>11} {'x':>6}"
    print(header)
    print("-" * len(header))
    for name, ci, co, side in CASES:
        x = rng.standard_normal((ci, side, side))
        w = rng.standard_normal((co, ci, 3, 3))
        b = rng.standard_normal(co)
        ho = (side - 1) // 2 + 1
        dy = rng.standard_normal((co, ho, ho))
        t_np_f = best_of(lambda: np_fwd(x, w, b), args.repeats)
        t_np_b = best_of(lambda: np_grads(x, w, dy), args.repeats)
        if nb_fwd is not None:
            nb_fwd(x, w, b)  # compile outside the timed region
            nb_grads(x, w, dy)
            t_nb_f = best_of(lambda: nb_fwd(x, w, b), args.repeats)
            t_nb_b = best_of(lambda: nb_grads(x, w, dy), args.repeats)
            fwd_x = t_np_f / t_nb_f
            bwd_x = t_np_b / t_nb_b
            print(
                f"{name:<16} {f'{ci}->{co} @{side}':<16} {t_np_f * 1e3:>9.3f}ms {t_nb_f * 1e3:>9.3f}ms {fwd_x:>5.1f}x"
                f"   {t_np_b * 1e3:>9.3f}ms {t_nb_b * 1e3:>9.3f}ms {bwd_x:>5.1f}x"
            )
        else:
            print(
                f"{name:<16} {f'{ci}->{co} @{side}':<16} {t_np_f * 1e3:>9.3f}ms {'n/a':>11} {'':>6}"
                f"   {t_np_b * 1e3:>9.3f}ms {'n/a':>11}"
            )
    if nb_fwd is None:
        print("\nnumba unavailable: only the fallback path was timed")


if __name__ == "__main__":
    main()
