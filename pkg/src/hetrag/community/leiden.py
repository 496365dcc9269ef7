"""Leiden community detection on weighted undirected graphs.

The driver here owns randomness, relabelling, and aggregation; the per-node
inner loops (local moving and refinement) live in :mod:`.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels

# fine-tuning costs O(n * (n + edges)) per sweep
FINE_TUNE_LIMIT = 1000


@dataclass(frozen=True)
class CSRGraph:
    """Symmetric adjacency in CSR form. Each undirected edge is stored in both rows."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @classmethod
    def from_edges(cls, n: int, edges) -> CSRGraph:
        rows, cols, data = [], [], []
        for u, v, w in edges:
            if u == v:
                continue
            rows += [u, v]
            cols += [v, u]
            data += [float(w), float(w)]
        return cls.from_coo(n, rows, cols, data)

    @classmethod
    def from_coo(cls, n, rows, cols, data) -> CSRGraph:
        m = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(n, n),
        )
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(np.float64))


def relabel(membership: np.ndarray) -> np.ndarray:
    """Renumber communities 0..k-1 in order of first appearance."""
    mapping: dict[int, int] = {}
    out = np.empty(len(membership), dtype=np.int64)
    for i, c in enumerate(membership.tolist()):
        out[i] = mapping.setdefault(c, len(mapping))
    return out


def modularity(g: CSRGraph, membership, resolution: float = 1.0) -> float:
    """Weighted modularity with resolution: sum_c L_c/m - resolution * (K_c / 2m)^2."""
    membership = np.asarray(membership)
    deg = _degrees(g)
    two_m = deg.sum()
    if two_m == 0:
        return 0.0
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    internal = g.weights[membership[rows] == membership[g.indices]].sum()
    k = np.bincount(membership, weights=deg)
    return float(internal / two_m - resolution * np.sum((k / two_m) ** 2))


def _degrees(g: CSRGraph) -> np.ndarray:
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    return np.bincount(rows, weights=g.weights, minlength=g.n).astype(np.float64)


def _aggregate(g: CSRGraph, groups: np.ndarray, k: int) -> CSRGraph:
    rows = np.repeat(np.arange(g.n), np.diff(g.indptr))
    return CSRGraph.from_coo(k, groups[rows], groups[g.indices], g.weights)


def _one_pass(g, deg, two_m, membership, resolution, rng, kern):
    cur, cur_deg = g, deg
    part = relabel(membership)
    node_map = np.arange(g.n, dtype=np.int64)
    while True:
        order = rng.permutation(cur.n).astype(np.int64)
        part, _ = kern.move_nodes(cur.indptr, cur.indices, cur.weights, cur_deg, part, order, resolution, two_m)
        part = relabel(part)
        n_comms = int(part.max()) + 1
        if n_comms == cur.n:
            break
        order = rng.permutation(cur.n).astype(np.int64)
        refined = relabel(kern.refine(cur.indptr, cur.indices, cur.weights, cur_deg, part, order, resolution, two_m))
        n_ref = int(refined.max()) + 1
        if n_ref == cur.n:
            # refinement merged nothing; aggregate on the coarse partition instead
            refined, n_ref = part, n_comms
        agg_part = np.empty(n_ref, dtype=np.int64)
        agg_part[refined] = part
        cur_deg = np.bincount(refined, weights=cur_deg, minlength=n_ref).astype(np.float64)
        cur = _aggregate(cur, refined, n_ref)
        node_map = refined[node_map]
        part = relabel(agg_part)
    return relabel(part[node_map])


def leiden(
    g: CSRGraph,
    resolution: float = 1.0,
    seed: int | np.random.SeedSequence = 0,
    initial: np.ndarray | None = None,
    max_iterations: int = 50,
    backend: str | None = None,
    fine_tune_limit: int = FINE_TUNE_LIMIT,
) -> np.ndarray:
    """Community membership per node, deterministic for a given ``seed``.

    Whole Leiden passes are repeated, each starting from the previous result,
    until the partition stops changing. On graphs of at most
    ``fine_tune_limit`` nodes a converged partition then gets a
    Kernighan-Lin sweep, which can escape optima that no single move
    improves, and the passes resume from the result.
    """
    n = g.n
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    deg = _degrees(g)
    two_m = float(deg.sum())
    if two_m == 0.0:
        return np.arange(n, dtype=np.int64)
    kern = kernels.get(backend)
    rng = np.random.default_rng(seed)
    membership = relabel(np.asarray(initial, dtype=np.int64)) if initial is not None else np.arange(n, dtype=np.int64)
    for _ in range(max_iterations):
        new = _one_pass(g, deg, two_m, membership, resolution, rng, kern)
        if np.array_equal(new, membership):
            if n > fine_tune_limit:
                break
            tuned, improved = kern.fine_tune(g.indptr, g.indices, g.weights, deg, membership, resolution, two_m)
            tuned = relabel(tuned)
            if not improved or modularity(g, tuned, resolution) <= modularity(g, membership, resolution):
                break
            new = tuned
        membership = new
    return membership


def best_of_restarts(
    g: CSRGraph,
    resolution: float = 1.0,
    seed: int = 0,
    restarts: int = 8,
    backend: str | None = None,
) -> np.ndarray:
    """Highest-modularity partition over ``restarts`` independently seeded runs.

    Ties keep the earliest run, so the result is a function of ``seed``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best, best_q = None, -np.inf
    for child in np.random.SeedSequence(seed).spawn(restarts):
        membership = leiden(g, resolution=resolution, seed=child, backend=backend)
        q = modularity(g, membership, resolution)
        if q > best_q:
            best, best_q = membership, q
    return best
