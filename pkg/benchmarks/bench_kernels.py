"""Timing comparison of the compiled and pure-numpy kernel backends.

Run after installing the package:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from dual_enkf import ExperimentConfig, TimeGrid, kernels, mass_spring_damper, run_offline


def time_call(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    problem = mass_spring_damper(4)
    grid = TimeGrid(T=10.0, dt=0.02)
    sizes = [(200, 4), (1000, 4), (1000, 10), (4000, 10)]

    print(f"available backends: {kernels.available_backends()}")
    header = f"{'kernel':<28}{'shape':<14}" + "".join(
        f"{name:>12}" for name in kernels.available_backends()
    )
    print(header)
    print("-" * len(header))

    for n, d in sizes:
        Y = rng.standard_normal((n, d))
        eta = rng.standard_normal((n, 1))
        A = rng.standard_normal((d, d))
        B = rng.standard_normal((d, 1))
        C = np.eye(d)
        G = rng.standard_normal((d, d))
        cn = rng.standard_normal(d)
        rows = {
            "mean_and_cov": lambda: kernels.mean_and_cov(Y),
            "linear_backward_step": lambda: kernels.linear_backward_step(
                Y, eta, A, B, C, G, cn, 0.02
            ),
        }
        for name, fn in rows.items():
            cells = []
            for backend in kernels.available_backends():
                kernels.use_backend(backend)
                cells.append(f"{time_call(fn) * 1e6:>10.1f}us")
            print(f"{name:<28}{f'N={n}, d={d}':<14}" + "".join(cells))

    print()
    cfg = ExperimentConfig(grid=grid, num_particles=1000, seed=0)
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        elapsed = time_call(lambda: run_offline(problem, cfg), repeats=3)
        print(f"run_offline (msd d=4, N=1000, 500 steps) [{backend}]: {elapsed * 1e3:.1f} ms")
    kernels.use_backend("auto")


if __name__ == "__main__":
    main()
