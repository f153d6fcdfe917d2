#!/usr/bin/env python3
"""Timing comparison of the compiled and pure-numpy stepping kernels.

Two representative workloads:
  * the sparse truncated-signature system at benchmark size
    (m_ch = 3, N = 4 or 5) over a batch of sinusoidal controls;
  * a small dense reduced-order model over the same batch.

Run:  python3 benchmarks/bench_backends.py [--batch 64] [--repeats 3]
"""

import argparse
import time

import numpy as np

from sigmor._kernels import available_backends, get_backend
from sigmor.grids import uniform_grid
from sigmor.signature import build_generator_matrices, signature_dimension


def csr_args(mats):
    indptr = np.vstack([M.indptr.astype(np.int64) for M in mats])
    indices = np.concatenate([M.indices.astype(np.int64) for M in mats])
    data = np.concatenate([M.data.astype(float) for M in mats])
    return indptr, indices, data, mats[0].shape[0]


def sinusoid_batch(grid, K):
    ks = np.arange(1, K + 1)
    u = np.empty((grid.shape[0], 2, K))
    u[:, 0, :] = np.cos(np.outer(grid, ks))
    u[:, 1, :] = np.sin(np.outer(grid, ks))
    return u


def run_case(label, fn, args, repeats):
    best = {}
    for name in available_backends():
        backend = getattr(get_backend(name), fn)
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            backend(*args)
            times.append(time.perf_counter() - t0)
        best[name] = min(times)
    line = f"{label:<44s}"
    for name in available_backends():
        line += f"  {name}: {best[name] * 1e3:9.1f} ms"
    if "compiled" in best and "python" in best:
        line += f"  speedup: {best['python'] / best['compiled']:5.1f}x"
    print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    grid = uniform_grid(1.0, 1001)
    dt = grid[1] - grid[0]
    K = args.batch
    u = sinusoid_batch(grid, K)
    print(f"backends: {available_backends()}   batch K = {K}, "
          f"grid = {grid.shape[0]} points\n")

    for N in (4, 5):
        n = signature_dimension(3, N)
        mats = build_generator_matrices(3, N)
        s0 = np.zeros((n, K))
        s0[0] = 1.0
        run_case(f"signature system csr  n={n:4d}  rk4", "simulate_csr",
                 (*csr_args(mats), s0, u, dt, 1, 4, 1e12), args.repeats)
        run_case(f"signature system csr  n={n:4d}  euler", "simulate_csr",
                 (*csr_args(mats), s0, u, dt, 1, 1, 1e12), args.repeats)

    rng = np.random.default_rng(0)
    for r in (17, 40):
        A = 0.3 * rng.standard_normal((3, r, r))
        s0 = rng.standard_normal((r, K))
        run_case(f"reduced model dense   r={r:4d}  rk4", "simulate_dense",
                 (A, s0, u, dt, 1, 4, 1e12), args.repeats)


if __name__ == "__main__":
    main()
