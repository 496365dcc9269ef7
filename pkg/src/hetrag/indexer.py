"""Offline construction of the heterogeneous index from a corpus."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .community import build_cooccurrence_graph, leiden_cluster
from .community.hierarchy import DEFAULT_RESTARTS
from .errors import ExtractionParseFailure
from .extraction import extract_triplets, summarize_community
from .graph import HeteroGraph, community_node_id, entity_node_id
from .ingest import DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP, Document, split_into_chunks
from .llm import Backend, embed
from .prompts import PromptSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IndexConfig:
    chunk_size: int = DEFAULT_CHUNK_SIZE
    overlap: int = DEFAULT_OVERLAP
    snap_to_sentence: bool = False
    max_triplets: int = 2
    max_cluster_size: int = 5
    resolution: float = 1.0
    seed: int = 0
    restarts: int = DEFAULT_RESTARTS
    workers: int = 1
    prompt_dir: str | None = None


@dataclass
class BuildReport:
    config: dict
    counts: dict[str, int] = field(default_factory=dict)
    chunks_attempted: int = 0
    chunks_extracted: int = 0
    chunks_skipped: int = 0
    skipped_chunk_ids: list[str] = field(default_factory=list)
    community_levels: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def build_index(
    corpus: Sequence[Document],
    backend: Backend,
    config: IndexConfig = IndexConfig(),
    embed_backend: Backend | None = None,
) -> tuple[HeteroGraph, BuildReport]:
    """Chunk, extract, cluster, summarize and embed ``corpus``.

    Per-chunk extraction failures are counted and skipped. Results are merged
    in chunk order, so the graph does not depend on ``config.workers``.
    """
    embed_backend = embed_backend or backend
    prompts = PromptSet(config.prompt_dir)
    g = HeteroGraph(dim=embed_backend.dim)
    report = BuildReport(config=asdict(config))

    chunks = [c for doc in corpus for c in split_into_chunks(doc, config.chunk_size, config.overlap, snap_to_sentence=config.snap_to_sentence)]
    for c in chunks:
        g.upsert_chunk(c)

    def extract(chunk):
        try:
            return extract_triplets(chunk, backend, config.max_triplets, prompts)
        except ExtractionParseFailure as exc:
            log.warning("skipping chunk: %s", exc)
            return None

    report.chunks_attempted = len(chunks)
    for chunk, result in zip(chunks, _map(extract, chunks, config.workers)):
        if result is None:
            report.chunks_skipped += 1
            report.skipped_chunk_ids.append(chunk.chunk_id)
            continue
        report.chunks_extracted += 1
        for t in result.relationships:
            g.upsert_triplet(t)
        # enrich auto-inserted endpoints with extracted types and descriptions
        for ent in result.entities:
            if entity_node_id(ent.name) in g.entities:
                g.upsert_entity(ent)

    cooc = build_cooccurrence_graph(g.triplets[k] for k in sorted(g.triplets))
    records = leiden_cluster(cooc, config.max_cluster_size, config.resolution, config.seed, config.restarts)
    report.community_levels = 1 + max((r.level for r in records), default=-1)

    for rec in records:
        g.upsert_community(rec)

    def summarize(nid):
        members = [g.triplets[t] for t in g.community_triplets(nid)]
        return summarize_community(members, backend, prompts)

    community_ids = [community_node_id(r.community_id) for r in records]
    for nid, summary in zip(community_ids, _map(summarize, community_ids, config.workers)):
        rec = g.communities[nid]
        g.communities[nid] = type(rec)(rec.community_id, rec.level, rec.members, summary, rec.parent)

    texts = (
        [(nid, c.text) for nid, c in sorted(g.chunks.items())]
        + [(nid, t.embedding_text()) for nid, t in sorted(g.triplets.items())]
        + [(nid, m.summary) for nid, m in sorted(g.communities.items())]
    )
    vectors = _map(lambda item: embed(item[1], embed_backend), texts, config.workers)
    for (nid, _), vec in zip(texts, vectors):
        g.set_embedding(nid, vec)

    report.counts = g.counts()
    return g, report
