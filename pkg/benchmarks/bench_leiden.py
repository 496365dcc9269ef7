"""Time the compiled and pure-Python Leiden kernels on the same graphs.

Both backends must produce identical memberships; the script exits non-zero
otherwise.

    python3 benchmarks/bench_leiden.py [--sizes 200 1000 4000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from hetrag.community import CSRGraph, kernels, leiden, modularity


def planted_partition(n: int, groups: int, p_in: float, p_out: float, seed: int) -> CSRGraph:
    rng = np.random.default_rng(seed)
    label = np.arange(n) % groups
    a, b = np.triu_indices(n, 1)
    # sample only the candidate pairs to keep memory flat for a few thousand nodes
    same = label[a] == label[b]
    keep = rng.random(a.size) < np.where(same, p_in, p_out)
    edges = [(int(x), int(y), 1.0) for x, y in zip(a[keep], b[keep])]
    return CSRGraph.from_edges(n, edges)


def time_backend(g: CSRGraph, backend: str, repeat: int, seed: int):
    best, result = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = leiden(g, seed=seed, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.compiled_kernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 2

    print(f"{'nodes':>7} {'edges':>8} {'python s':>10} {'cython s':>10} {'speedup':>8} {'Q':>8}  match")
    status = 0
    for n in args.sizes:
        g = planted_partition(n, max(2, n // 25), p_in=0.3, p_out=4.0 / n, seed=args.seed)
        t_py, m_py = time_backend(g, "python", args.repeat, args.seed)
        t_cy, m_cy = time_backend(g, "cython", args.repeat, args.seed)
        same = np.array_equal(m_py, m_cy)
        status |= not same
        edges = g.indices.size // 2
        print(f"{n:>7} {edges:>8} {t_py:>10.3f} {t_cy:>10.3f} {t_py / t_cy:>7.1f}x {modularity(g, m_cy):>8.4f}  {'yes' if same else 'NO'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
