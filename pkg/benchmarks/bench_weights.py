"""Compare the numba and pure-numpy kernels behind ``batch_weights``.

Usage: ``python3 benchmarks/bench_weights.py [--repeat N]``

Each case is timed after one warm-up call, so numba compilation is excluded.
The two backends are also checked for agreement.
"""

import argparse
import time

import numpy as np

from lpigrad import InterpolationConfig, batch_weights, grid_points
from lpigrad._accel import HAVE_NUMBA

CASES = [
    ("d=1 m=500 l=1 (reference)", InterpolationConfig(d=1, m=500, h=0.01, l=1), 1000),
    ("d=1 m=2000 l=2 epanechnikov", InterpolationConfig(d=1, m=2000, h=0.005, l=2, kernel="epanechnikov"), 20000),
    ("d=2 m=40 l=2", InterpolationConfig(d=2, m=40, h=0.08, l=2), 5000),
    ("d=3 m=12 l=1", InterpolationConfig(d=3, m=12, h=0.2, l=1), 2000),
]


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'case':32s} {'points':>7s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, cfg, n_pts in CASES:
        xs = rng.uniform(cfg.h, 1 - cfg.h, size=(n_pts, cfg.d))
        grid = grid_points(cfg)
        t_np = best_time(lambda: batch_weights(xs, grid, cfg, use_numba=False), args.repeat)
        if HAVE_NUMBA:
            t_nb = best_time(lambda: batch_weights(xs, grid, cfg, use_numba=True), args.repeat)
            a = batch_weights(xs, grid, cfg, use_numba=True).values
            b = batch_weights(xs, grid, cfg, use_numba=False).values
            diff = float(np.max(np.abs(a - b)))
            print(f"{name:32s} {n_pts:7d} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.2f} {diff:9.1e}")
        else:
            print(f"{name:32s} {n_pts:7d} {t_np:10.4f} {'-':>10s} {'-':>8s} {'-':>9s}")


if __name__ == "__main__":
    main()
