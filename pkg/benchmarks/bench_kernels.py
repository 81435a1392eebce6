"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--realizations R] [--steps T] [--n N] [--repeat K]

Both backends run the same batch and their outputs are checked for equality
before timing. The numba timings exclude compilation.
"""
import argparse
import time

import numpy as np

from spinrisk import kernels
from spinrisk._accel import HAS_NUMBA


def batch(R, T, N, seed=0):
    rng = np.random.default_rng(seed)
    J = rng.normal(size=(R, N, N)) / np.sqrt(N)
    theta = rng.normal(size=(R, N))
    noise = rng.standard_normal((R, T, N))
    sites = rng.integers(0, N, size=(R, T))
    s0 = -np.ones((R, N), dtype=np.int8)
    return J, theta, noise, sites, s0


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--realizations", type=int, default=100)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    J, theta, noise, sites, s0 = batch(args.realizations, args.steps, args.n)
    anoise = noise[:, :, 0].copy()
    cases = {
        "sync": lambda nb: kernels.run_sync(J, theta, noise, s0, use_numba=nb),
        "async": lambda nb: kernels.run_async(J, theta, sites, anoise, s0, use_numba=nb),
    }
    print(f"R={args.realizations} T={args.steps} N={args.n}, best of {args.repeat}")
    print(f"{'kernel':<8}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, run in cases.items():
        for a, b in zip(run(True), run(False)):  # also compiles
            if a is not None:
                np.testing.assert_array_equal(a, b)
        t_nb = best_of(lambda: run(True), args.repeat)
        t_np = best_of(lambda: run(False), args.repeat)
        print(f"{name:<8}{1e3 * t_nb:>12.2f}{1e3 * t_np:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
