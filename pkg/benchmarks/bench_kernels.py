"""Timing comparison of the compiled kernels against the numpy fallbacks.

Run twice to compare paths:

    python benchmarks/bench_kernels.py
    LRDLIMITS_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py

Both paths draw from the same counter-based stream, so the value columns
must agree to float tolerance; only the timings differ.
"""

import argparse
import time

import numpy as np

from lrdlimits._accel import HAS_NUMBA
from lrdlimits import rng
from lrdlimits.rosenblatt import sample_quadratic_form


def _time(fn, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def bench_normals(n_rep, count):
    reps = np.arange(n_rep, dtype=np.uint64)
    z, dt = _time(lambda: rng.normals_batch(1, rng.DOM_TEST, reps, count))
    rate = n_rep * count / dt / 1e6
    print(f"normals_batch  {n_rep} x {count}: {dt * 1e3:8.1f} ms "
          f"({rate:7.1f} M/s)  checksum {z.sum():.6f}")


def bench_quadratic(n_rep, n_weights):
    w = 1.0 / (1.0 + np.arange(n_weights, dtype=np.float64))
    s, dt = _time(lambda: sample_quadratic_form(w, n_rep, seed=1))
    rate = n_rep * n_weights / dt / 1e6
    print(f"quadratic_form {n_rep} x {n_weights}: {dt * 1e3:8.1f} ms "
          f"({rate:7.1f} M/s)  checksum {s.sum():.6f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", type=float, default=1.0,
                    help="multiply workload sizes")
    args = ap.parse_args()
    k = args.scale
    print(f"kernel path: {'numba' if HAS_NUMBA else 'numpy fallback'}")
    bench_normals(int(200 * k), 10_000)
    bench_normals(int(2000 * k), 1_000)
    bench_quadratic(int(2000 * k), 10_000)
    bench_quadratic(int(20000 * k), 1_000)


if __name__ == "__main__":
    main()
