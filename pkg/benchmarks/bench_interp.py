"""Compare the compiled and numpy interpolation backends.

Run with ``python3 benchmarks/bench_interp.py [--n 64 128 256] [--repeat 5]``.
Prints one row per grid size with the best wall time of each backend and
the largest pointwise difference between them.
"""
import argparse
import timeit

import numpy as np

from inhomns.interp import BACKEND, hermite_data, hermite_kernel
from inhomns.spectral import TorusGrid


def bench(n: int, repeat: int, clip: bool) -> dict:
    grid = TorusGrid(n)
    rng = np.random.default_rng(n)
    values = np.sin(grid.X) * np.cos(2 * grid.Y) + 0.1 * rng.standard_normal((n, n))
    data = hermite_data(grid, values)
    xq = grid.X + 0.37 * grid.h
    yq = grid.Y - 0.61 * grid.h
    row = {"n": n}
    results = {}
    for backend in ("compiled", "numpy"):
        if backend == "compiled" and BACKEND != "compiled":
            row[backend] = float("nan")
            continue

        def call(backend=backend):
            return hermite_kernel(data, xq, yq, grid.h, clip=clip, backend=backend)

        results[backend] = call()
        row[backend] = min(timeit.repeat(call, number=1, repeat=repeat))
    if len(results) == 2:
        row["max_diff"] = float(np.abs(results["compiled"] - results["numpy"]).max())
        row["speedup"] = row["numpy"] / row["compiled"]
    return row


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, nargs="+", default=[64, 128, 256])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--clip", action="store_true", help="use the clipped (monotone) variant")
    args = parser.parse_args(argv)
    print(f"default backend: {BACKEND}")
    print(f"{'n':>6} {'compiled [s]':>14} {'numpy [s]':>12} {'speedup':>9} {'max diff':>10}")
    for n in args.n:
        row = bench(n, args.repeat, args.clip)
        print(
            f"{row['n']:>6} {row['compiled']:>14.5f} {row['numpy']:>12.5f} "
            f"{row.get('speedup', float('nan')):>9.2f} {row.get('max_diff', float('nan')):>10.1e}"
        )


if __name__ == "__main__":
    main()
