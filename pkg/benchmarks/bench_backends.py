"""Benchmark the numba kernels against their pure-numpy twins.

Usage:  python benchmarks/bench_backends.py [--paths N] [--repeat K]

Each workload is run on both backends with identical pre-drawn random
blocks; the outputs are asserted bitwise equal before timing, so the table
compares two implementations of the same computation.
"""

import argparse
import time

import numpy as np

from driftbound import _accel, _rng
from driftbound._backend import NUMBA_AVAILABLE, use_backend


def timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return out, best


def workloads(n_paths):
    P = np.array([[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.0, 0.25, 0.75]])
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    U_chain = _rng.uniform_block(1, 1, n_paths, 200)

    y_cum = cum
    z_cums = np.repeat(cum[None, ::-1, :], 200, axis=0)
    member = np.array([True, False, False])

    As = np.stack([0.5 * np.eye(2), np.array([[0.0, -0.5], [0.5, 0.0]])])
    pi0 = np.array([0.5, 1.0])
    U_modes = _rng.uniform_block(2, 2, n_paths, 101)
    x0 = np.array([3.0, 4.0])

    normals = _rng.normal_block(3, 4, min(n_paths, 20_000), 1000)
    no_snap = np.asarray([], dtype=np.int64)

    return [
        ("finite-chain 200 steps", lambda: _accel.chain_sim(cum, 0, U_chain)),
        ("hybrid 200 steps", lambda: _accel.hybrid_sim(y_cum, z_cums, member, 0, U_chain)),
        ("walk 200 steps", lambda: _accel.walk_sim(0.25, 0, None, 8, U_chain)),
        (
            "switched linear T=100",
            lambda: _accel.switched_linear_sim(As, pi0, np.cumsum(
                np.array([[0.6, 0.4], [0.4, 0.6]]), axis=1), x0, U_modes),
        ),
        (
            f"besq {normals.shape[0]}x1000 steps",
            lambda: _accel.besq_chunk(1.0, 2.0, 1e-3, normals, no_snap),
        ),
    ]


def flatten(out):
    if isinstance(out, tuple):
        return [np.asarray(o) for o in out]
    return [np.asarray(out)]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--paths", type=int, default=10_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if not NUMBA_AVAILABLE:
        print("numba not importable; nothing to compare")
        return

    print(f"{'workload':<28} {'numba':>10} {'numpy':>10} {'speedup':>8}  equal")
    for name, fn in workloads(args.paths):
        with use_backend("numba"):
            fn()  # warm the JIT outside the timing
            out_nb, t_nb = timed(fn, args.repeat)
        with use_backend("numpy"):
            out_np, t_np = timed(fn, args.repeat)
        equal = all(
            np.array_equal(a, b) for a, b in zip(flatten(out_nb), flatten(out_np))
        )
        print(
            f"{name:<28} {t_nb * 1e3:>8.1f}ms {t_np * 1e3:>8.1f}ms "
            f"{t_np / t_nb:>7.1f}x  {equal}"
        )


if __name__ == "__main__":
    main()
