"""Hybrid retrieval: exact cosine top-k over chunk, triplet and community
vectors, then one hop along typed edges."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyIndex
from .extraction import canonical_name, expand_keywords
from .graph import CHUNK, COMMUNITY, RETRIEVABLE, TRIPLET, HeteroGraph, node_kind
from .ingest import count_tokens
from .llm import Backend, embed
from .prompts import PromptSet

DEFAULT_TOP_K = 5
DEFAULT_EVIDENCE_BUDGET = 4096
DEFAULT_MAX_KEYWORDS = 5


@dataclass(frozen=True)
class ScoredNode:
    node_id: str
    node_kind: str
    score: float


@dataclass(frozen=True, order=True)
class InferredTriple:
    """A triple introduced by subgraph refinement; never written to the index."""

    subject: str
    predicate: str
    object: str

    def line(self) -> str:
        return f"{self.subject} -> {self.predicate} -> {self.object}"


@dataclass(frozen=True)
class EvidenceSubgraph:
    seeds: tuple[ScoredNode, ...] = ()
    expansion: frozenset[str] = frozenset()
    rendered_evidence: str = ""
    inferred: tuple[InferredTriple, ...] = ()
    dropped: frozenset[str] = frozenset()
    budget: int = DEFAULT_EVIDENCE_BUDGET

    @property
    def seed_ids(self) -> list[str]:
        return [s.node_id for s in self.seeds]

    def node_ids(self) -> set[str]:
        return set(self.seed_ids) | set(self.expansion)

    def triplet_ids(self) -> list[str]:
        """Visible triplet nodes: retrieved and not removed by refinement."""
        return sorted(n for n in self.node_ids() if node_kind(n) == TRIPLET and n not in self.dropped)

    def triplet_lines(self, g: HeteroGraph) -> list[str]:
        lines = {g.triplets[t].line() for t in self.triplet_ids()}
        lines.update(t.line() for t in self.inferred)
        return sorted(lines)


def _check_query(query_vectors: np.ndarray, g: HeteroGraph) -> np.ndarray:
    q = np.atleast_2d(np.asarray(query_vectors, dtype=np.float64))
    if q.shape[1] != g.dim:
        raise DimensionMismatch(f"query has dimension {q.shape[1]}, index has {g.dim}")
    norms = np.linalg.norm(q, axis=1, keepdims=True)
    return q / np.where(norms == 0, 1.0, norms)


def _pooled_scores(query_vectors, g: HeteroGraph, kinds) -> tuple[list[str], np.ndarray]:
    ids, mat = g.vector_matrix(kinds)
    if not ids:
        raise EmptyIndex("no embedded nodes of the requested kinds")
    q = _check_query(query_vectors, g)
    scores = np.clip((mat @ q.T).max(axis=1), -1.0, 1.0)
    return ids, scores


def _top(ids: list[str], scores: np.ndarray, top_k: int) -> list[ScoredNode]:
    # ids are sorted, so lexsort's secondary key (position) breaks ties by node id
    order = np.lexsort((np.arange(len(ids)), -scores))[:top_k]
    return [ScoredNode(ids[i], node_kind(ids[i]), float(scores[i])) for i in order]


def vector_search(
    query_vector, g: HeteroGraph, top_k: int = DEFAULT_TOP_K, kinds: Iterable[str] = RETRIEVABLE
) -> list[ScoredNode]:
    """Exact cosine top-k; ties go to the smaller node id."""
    ids, scores = _pooled_scores(query_vector, g, tuple(kinds))
    return _top(ids, scores, top_k)


def expand_one_hop(g: HeteroGraph, seed_ids: Iterable[str]) -> set[str]:
    out: set[str] = set()
    for nid in seed_ids:
        kind = node_kind(nid)
        if kind == TRIPLET:
            out.add(g.chunk_of_triplet(nid))
            for eid in g.triplet_entities(nid):
                out.update(g.triplets_of_entity(eid))
        elif kind == COMMUNITY:
            for eid in g.community_member_ids(nid):
                out.update(g.triplets_of_entity(eid))
        elif kind == CHUNK:
            out.update(g.triplets_of_chunk(nid))
    return out


def render_evidence(
    g: HeteroGraph,
    seeds: Sequence[ScoredNode],
    expansion: Iterable[str],
    inferred: Iterable[InferredTriple] = (),
    dropped: Iterable[str] = (),
    budget: int = DEFAULT_EVIDENCE_BUDGET,
) -> str:
    """Community summaries, then triplet lines, then chunk texts, each sorted.

    Chunks are dropped lowest score first (expansion chunks before seeds)
    until the text fits ``budget`` tokens.
    """
    dropped = set(dropped)
    score = {s.node_id: s.score for s in seeds}
    nodes = set(score) | set(expansion)
    communities = sorted(n for n in nodes if node_kind(n) == COMMUNITY)
    lines = {g.triplets[n].line() for n in nodes if node_kind(n) == TRIPLET and n not in dropped}
    inferred_lines = {t.line() for t in inferred} - lines
    triplet_lines = sorted([*lines, *(f"{l} [inferred]" for l in inferred_lines)])
    chunks = sorted(n for n in nodes if node_kind(n) == CHUNK)

    def build(keep_chunks: list[str]) -> str:
        parts = []
        if communities:
            parts.append(
                "Community summaries:\n"
                + "\n".join(f"[{g.communities[c].community_id}] {g.communities[c].summary}" for c in communities)
            )
        if triplet_lines:
            parts.append("Knowledge triplets:\n" + "\n".join(triplet_lines))
        if keep_chunks:
            parts.append(
                "Text chunks:\n" + "\n".join(f"[{g.chunks[c].chunk_id}] {g.chunks[c].text}" for c in keep_chunks)
            )
        return "\n\n".join(parts)

    drop_order = sorted(chunks, key=lambda c: (score.get(c, -np.inf), c))
    keep = list(chunks)
    text = build(keep)
    for victim in drop_order:
        if count_tokens(text) <= budget:
            break
        keep.remove(victim)
        text = build(keep)
    return text


def make_subgraph(
    g: HeteroGraph,
    seeds: Sequence[ScoredNode],
    expansion: Iterable[str],
    inferred: Iterable[InferredTriple] = (),
    dropped: Iterable[str] = (),
    budget: int = DEFAULT_EVIDENCE_BUDGET,
) -> EvidenceSubgraph:
    seeds = tuple(sorted(seeds, key=lambda s: (-s.score, s.node_id)))
    expansion = frozenset(expansion) - {s.node_id for s in seeds}
    inferred = tuple(sorted(set(inferred)))
    dropped = frozenset(dropped)
    text = render_evidence(g, seeds, expansion, inferred, dropped, budget)
    return EvidenceSubgraph(seeds, expansion, text, inferred, dropped, budget)


@dataclass
class Retriever:
    """Query-time retrieval settings bound to one graph and backend."""

    graph: HeteroGraph
    backend: Backend
    top_k: int = DEFAULT_TOP_K
    evidence_budget: int = DEFAULT_EVIDENCE_BUDGET
    max_keywords: int = DEFAULT_MAX_KEYWORDS
    per_kind: bool = False
    prompts: PromptSet = field(default_factory=PromptSet)

    def retrieve(self, query: str, use_keyword_expansion: bool = False) -> EvidenceSubgraph:
        return retrieve_subgraph(
            query,
            self.graph,
            self.backend,
            top_k=self.top_k,
            use_keyword_expansion=use_keyword_expansion,
            max_keywords=self.max_keywords,
            per_kind=self.per_kind,
            evidence_budget=self.evidence_budget,
            prompts=self.prompts,
        )


def retrieve_subgraph(
    query: str,
    g: HeteroGraph,
    backend: Backend,
    top_k: int = DEFAULT_TOP_K,
    use_keyword_expansion: bool = False,
    max_keywords: int = DEFAULT_MAX_KEYWORDS,
    per_kind: bool = False,
    evidence_budget: int = DEFAULT_EVIDENCE_BUDGET,
    prompts: PromptSet | None = None,
) -> EvidenceSubgraph:
    """Seed nodes for ``query`` plus their one-hop neighbourhood, rendered as evidence.

    With keyword expansion each node scores the best cosine over the query
    and its expansion terms. ``per_kind`` takes ``top_k`` of each node kind
    instead of ``top_k`` overall.
    """
    if not g.embeddings:
        raise EmptyIndex("index has no embedded nodes")
    terms = expand_keywords(query, max_keywords, backend, prompts) if use_keyword_expansion else [query]
    vectors = np.stack([embed(t, backend) for t in terms])
    if per_kind:
        seeds = []
        for kind in RETRIEVABLE:
            ids, _ = g.vector_matrix((kind,))
            if ids:
                seeds.extend(_top(*_pooled_scores(vectors, g, (kind,)), top_k))
    else:
        seeds = _top(*_pooled_scores(vectors, g, RETRIEVABLE), top_k)
    expansion = expand_one_hop(g, [s.node_id for s in seeds])
    return make_subgraph(g, seeds, expansion, budget=evidence_budget)


def union_subgraphs(g: HeteroGraph, current: EvidenceSubgraph, fresh: EvidenceSubgraph, top_k: int) -> EvidenceSubgraph:
    """Merge two subgraphs. Seeds past ``top_k`` become expansion; triplets the
    current subgraph had dropped stay dropped unless ``fresh`` retrieved them."""
    best: dict[str, ScoredNode] = {}
    for s in (*current.seeds, *fresh.seeds):
        if s.node_id not in best or s.score > best[s.node_id].score:
            best[s.node_id] = s
    ranked = sorted(best.values(), key=lambda s: (-s.score, s.node_id))
    seeds, overflow = ranked[:top_k], [s.node_id for s in ranked[top_k:]]
    expansion = set(current.expansion) | set(fresh.expansion) | set(overflow)
    dropped = set(current.dropped) - fresh.node_ids()
    inferred = set(current.inferred) | set(fresh.inferred)
    return make_subgraph(g, seeds, expansion, inferred, dropped, current.budget)


_TRIPLE_LINE = re.compile(r"^\s*(?:[-*•]\s*|\d+[.)]\s*)?(.+?)\s*->\s*(.+?)\s*->\s*(.+?)\s*$")


def parse_triple_lines(text: str) -> list[InferredTriple]:
    out = []
    for line in text.splitlines():
        line = line.replace("[inferred]", "").replace("[Added]", "").strip()
        m = _TRIPLE_LINE.match(line)
        if not m or "->" in m.group(3):
            continue
        parts = [canonical_name(p) for p in m.groups()]
        if all(parts):
            out.append(InferredTriple(*parts))
    return out


def _line_key(line: str) -> str:
    return " -> ".join(canonical_name(p).casefold() for p in line.split("->"))


def apply_refinement(g: HeteroGraph, sub: EvidenceSubgraph, kept: Sequence[InferredTriple]) -> EvidenceSubgraph:
    """Keep only the triples listed in ``kept``; listed triples absent from the
    subgraph are added as inferred evidence. Chunks and communities are untouched."""
    wanted = {_line_key(t.line()): t for t in kept}
    visible = sub.triplet_ids()
    dropped = set(sub.dropped) | {t for t in visible if _line_key(g.triplets[t].line()) not in wanted}
    known = {_line_key(g.triplets[t].line()) for t in visible}
    inferred = [t for key, t in wanted.items() if key not in known]
    return make_subgraph(g, sub.seeds, sub.expansion, inferred, dropped, sub.budget)


def drop_all_triplets(g: HeteroGraph, sub: EvidenceSubgraph) -> EvidenceSubgraph:
    return make_subgraph(g, sub.seeds, sub.expansion, (), set(sub.dropped) | set(sub.triplet_ids()), sub.budget)
