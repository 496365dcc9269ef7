"""Entity co-occurrence graph and size-bounded hierarchical clustering."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..extraction import TripletRecord, entity_key
from .leiden import CSRGraph, best_of_restarts

DEFAULT_MAX_CLUSTER_SIZE = 5
DEFAULT_RESTARTS = 8


@dataclass(frozen=True)
class CommunityRecord:
    community_id: str
    level: int
    members: tuple[str, ...]
    summary: str = ""
    parent: str | None = None


@dataclass
class CoOccurrenceGraph:
    nodes: list[str] = field(default_factory=list)
    weights: dict[tuple[str, str], int] = field(default_factory=dict)

    def to_csr(self) -> tuple[CSRGraph, dict[str, int]]:
        index = {name: i for i, name in enumerate(self.nodes)}
        edges = [(index[a], index[b], w) for (a, b), w in sorted(self.weights.items())]
        return CSRGraph.from_edges(len(self.nodes), edges), index

    def induced(self, members: Iterable[str]) -> CoOccurrenceGraph:
        keep = set(members)
        return CoOccurrenceGraph(
            sorted(keep),
            {pair: w for pair, w in self.weights.items() if pair[0] in keep and pair[1] in keep},
        )


def build_cooccurrence_graph(triplets: Iterable[TripletRecord]) -> CoOccurrenceGraph:
    """Entities weighted by how many triplets join each unordered pair."""
    display: dict[str, str] = {}
    counts: Counter[tuple[str, str]] = Counter()
    for t in triplets:
        a = display.setdefault(entity_key(t.subject), t.subject)
        b = display.setdefault(entity_key(t.object), t.object)
        if entity_key(a) == entity_key(b):
            continue
        counts[tuple(sorted((a, b)))] += 1
    return CoOccurrenceGraph(sorted(display.values()), dict(counts))


def cluster_once(
    g: CoOccurrenceGraph,
    resolution: float = 1.0,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    backend: str | None = None,
) -> list[tuple[str, ...]]:
    """One flat Leiden partition, as sorted member tuples in sorted order."""
    if not g.nodes:
        return []
    csr, _ = g.to_csr()
    membership = best_of_restarts(csr, resolution=resolution, seed=seed, restarts=restarts, backend=backend)
    groups: dict[int, list[str]] = {}
    for name, c in zip(g.nodes, membership.tolist()):
        groups.setdefault(c, []).append(name)
    return sorted(tuple(sorted(v)) for v in groups.values())


def leiden_cluster(
    g: CoOccurrenceGraph,
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE,
    resolution: float = 1.0,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    backend: str | None = None,
) -> list[CommunityRecord]:
    """Hierarchical Leiden: clusters above ``max_cluster_size`` are re-clustered
    on their induced subgraph one level down, and split by sorted name when
    Leiden cannot break them up."""
    if max_cluster_size < 1:
        raise ValueError("max_cluster_size must be >= 1")
    records: list[CommunityRecord] = []
    level = 0
    pending: list[tuple[tuple[str, ...], str | None]] = [
        (members, None) for members in cluster_once(g, resolution, seed, restarts, backend)
    ]
    while pending:
        next_pending = []
        for i, (members, parent) in enumerate(pending):
            cid = f"L{level}-{i:04d}"
            records.append(CommunityRecord(cid, level, members, parent=parent))
            if len(members) <= max_cluster_size:
                continue
            children = cluster_once(g.induced(members), resolution, seed, restarts, backend)
            if len(children) < 2:
                ordered = sorted(members)
                children = [tuple(ordered[j : j + max_cluster_size]) for j in range(0, len(ordered), max_cluster_size)]
            next_pending.extend((child, cid) for child in children)
        pending = next_pending
        level += 1
    return records


def leaves(records: list[CommunityRecord]) -> list[CommunityRecord]:
    parents = {r.parent for r in records if r.parent is not None}
    return [r for r in records if r.community_id not in parents]


def membership_vector(names: list[str], groups: list[tuple[str, ...]]) -> np.ndarray:
    where = {name: i for i, group in enumerate(groups) for name in group}
    return np.asarray([where[n] for n in names], dtype=np.int64)
