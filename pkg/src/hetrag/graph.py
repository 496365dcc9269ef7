"""Heterogeneous graph store: chunk, entity, triplet and community nodes joined
by OpenRel, MentionedIn and SummaryFor edges."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .community import CommunityRecord
from .errors import DanglingReference
from .extraction import EntityRecord, TripletRecord, entity_key
from .ingest import Chunk

CHUNK, ENTITY, TRIPLET, COMMUNITY = "chunk", "entity", "triplet", "community"
RETRIEVABLE = (CHUNK, TRIPLET, COMMUNITY)
OPEN_REL, MENTIONED_IN, SUMMARY_FOR = "OpenRel", "MentionedIn", "SummaryFor"
_PREFIX = {"c": CHUNK, "e": ENTITY, "t": TRIPLET, "m": COMMUNITY}


@dataclass(frozen=True, order=True)
class Edge:
    kind: str
    source: str
    target: str
    label: str = ""


def chunk_node_id(chunk_id: str) -> str:
    return f"c:{chunk_id}"


def entity_node_id(name: str) -> str:
    return f"e:{entity_key(name)}"


def triplet_node_id(t: TripletRecord) -> str:
    raw = "\x1f".join([t.source_chunk, entity_key(t.subject), t.predicate, entity_key(t.object)])
    return "t:" + hashlib.sha1(raw.encode("utf-8")).hexdigest()[:16]


def community_node_id(community_id: str) -> str:
    return f"m:{community_id}"


def node_kind(node_id: str) -> str:
    try:
        return _PREFIX[node_id[0]]
    except (IndexError, KeyError):
        raise ValueError(f"not a node id: {node_id!r}") from None


@dataclass
class HeteroGraph:
    dim: int = 1024
    chunks: dict[str, Chunk] = field(default_factory=dict)
    entities: dict[str, EntityRecord] = field(default_factory=dict)
    triplets: dict[str, TripletRecord] = field(default_factory=dict)
    communities: dict[str, CommunityRecord] = field(default_factory=dict)
    edges: set[Edge] = field(default_factory=set)
    embeddings: dict[str, np.ndarray] = field(default_factory=dict)
    _entity_triplets: dict[str, set[str]] = field(default_factory=dict, repr=False)
    _chunk_triplets: dict[str, set[str]] = field(default_factory=dict, repr=False)
    _vector_cache: dict = field(default_factory=dict, repr=False)

    # -- mutation ----------------------------------------------------------

    def upsert_chunk(self, chunk: Chunk) -> str:
        nid = chunk_node_id(chunk.chunk_id)
        self.chunks.setdefault(nid, chunk)
        return nid

    def upsert_entity(self, record: EntityRecord) -> str:
        nid = entity_node_id(record.name)
        existing = self.entities.get(nid)
        self.entities[nid] = existing.merged(record) if existing else record
        return nid

    def upsert_triplet(self, t: TripletRecord) -> str:
        cid = chunk_node_id(t.source_chunk)
        if cid not in self.chunks:
            raise DanglingReference(f"triplet references unknown chunk {t.source_chunk!r}")
        s_id = self.upsert_entity(EntityRecord(t.subject, t.subject_type))
        o_id = self.upsert_entity(EntityRecord(t.object, t.object_type))
        # store endpoints under the graph-wide display names
        t = TripletRecord(
            self.entities[s_id].name, t.predicate, self.entities[o_id].name,
            t.source_chunk, t.subject_type, t.object_type, t.description,
        )
        nid = triplet_node_id(t)
        if nid in self.triplets:
            return nid
        self.triplets[nid] = t
        self.edges.add(Edge(MENTIONED_IN, nid, cid))
        self.edges.add(Edge(OPEN_REL, s_id, o_id, t.predicate))
        self._chunk_triplets.setdefault(cid, set()).add(nid)
        for eid in (s_id, o_id):
            self._entity_triplets.setdefault(eid, set()).add(nid)
        return nid

    def upsert_community(self, record: CommunityRecord) -> str:
        member_ids = [entity_node_id(m) for m in record.members]
        missing = [m for m, eid in zip(record.members, member_ids) if eid not in self.entities]
        if missing:
            raise DanglingReference(f"community {record.community_id} has unknown members {missing}")
        if record.parent is not None and community_node_id(record.parent) not in self.communities:
            raise DanglingReference(f"community {record.community_id} has unknown parent {record.parent}")
        nid = community_node_id(record.community_id)
        self.communities[nid] = record
        for eid in member_ids:
            self.edges.add(Edge(SUMMARY_FOR, nid, eid))
        return nid

    def set_embedding(self, node_id: str, vector) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"embedding for {node_id} has shape {vec.shape}, expected ({self.dim},)")
        self.embeddings[node_id] = vec
        self._vector_cache.clear()

    def rebuild_indexes(self) -> None:
        self._vector_cache.clear()
        self._entity_triplets = {}
        self._chunk_triplets = {}
        for tid, t in self.triplets.items():
            self._chunk_triplets.setdefault(chunk_node_id(t.source_chunk), set()).add(tid)
            for eid in (entity_node_id(t.subject), entity_node_id(t.object)):
                self._entity_triplets.setdefault(eid, set()).add(tid)

    # -- queries -----------------------------------------------------------

    def vector_matrix(self, kinds) -> tuple[list[str], np.ndarray]:
        """Sorted node ids of ``kinds`` with embeddings, and their unit-normalized rows."""
        key = tuple(sorted(kinds))
        if key not in self._vector_cache:
            ids = sorted(nid for nid in self.embeddings if node_kind(nid) in key)
            if ids:
                mat = np.stack([self.embeddings[i] for i in ids]).astype(np.float64)
                norms = np.linalg.norm(mat, axis=1, keepdims=True)
                mat = mat / np.where(norms == 0, 1.0, norms)
            else:
                mat = np.zeros((0, self.dim))
            self._vector_cache[key] = (ids, mat)
        return self._vector_cache[key]

    def has_node(self, node_id: str) -> bool:
        return any(node_id in store for store in (self.chunks, self.entities, self.triplets, self.communities))

    def triplets_of_entity(self, entity_id: str) -> set[str]:
        return self._entity_triplets.get(entity_id, set())

    def triplets_of_chunk(self, chunk_node: str) -> set[str]:
        return self._chunk_triplets.get(chunk_node, set())

    def chunk_of_triplet(self, triplet_id: str) -> str:
        return chunk_node_id(self.triplets[triplet_id].source_chunk)

    def triplet_entities(self, triplet_id: str) -> tuple[str, str]:
        t = self.triplets[triplet_id]
        return entity_node_id(t.subject), entity_node_id(t.object)

    def community_member_ids(self, community_node: str) -> list[str]:
        return [entity_node_id(m) for m in self.communities[community_node].members]

    def community_triplets(self, community_node: str) -> list[str]:
        """Triplets with both endpoints inside the community, or touching it when none do."""
        members = set(self.community_member_ids(community_node))
        touching = sorted({tid for eid in members for tid in self.triplets_of_entity(eid)})
        inside = [tid for tid in touching if set(self.triplet_entities(tid)) <= members]
        return inside or touching

    def counts(self) -> dict[str, int]:
        by_kind = {OPEN_REL: 0, MENTIONED_IN: 0, SUMMARY_FOR: 0}
        for e in self.edges:
            by_kind[e.kind] += 1
        return {
            "chunks": len(self.chunks),
            "entities": len(self.entities),
            "triplets": len(self.triplets),
            "communities": len(self.communities),
            "edges": len(self.edges),
            "edges_open_rel": by_kind[OPEN_REL],
            "edges_mentioned_in": by_kind[MENTIONED_IN],
            "edges_summary_for": by_kind[SUMMARY_FOR],
            "embeddings": len(self.embeddings),
        }

    def canonical_bytes(self) -> bytes:
        """Order-independent serialization used for equality and immutability checks."""
        doc = {
            "dim": self.dim,
            "chunks": {k: asdict(v) for k, v in sorted(self.chunks.items())},
            "entities": {
                k: {**asdict(v), "aliases": sorted(v.aliases)} for k, v in sorted(self.entities.items())
            },
            "triplets": {k: asdict(v) for k, v in sorted(self.triplets.items())},
            "communities": {k: asdict(v) for k, v in sorted(self.communities.items())},
            "edges": [asdict(e) for e in sorted(self.edges)],
        }
        h = hashlib.sha256(json.dumps(doc, sort_keys=True, ensure_ascii=False).encode("utf-8"))
        for k in sorted(self.embeddings):
            h.update(k.encode("utf-8"))
            h.update(np.ascontiguousarray(self.embeddings[k], dtype="<f4").tobytes())
        return h.digest()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HeteroGraph):
            return NotImplemented
        return self.canonical_bytes() == other.canonical_bytes()

    __hash__ = None  # mutable


def validate(g: HeteroGraph, require_embeddings: bool = False) -> list[str]:
    """Every referential-integrity problem in ``g``; an empty list means sound."""
    problems: list[str] = []
    mentioned: dict[str, int] = {}
    for e in g.edges:
        if e.kind == MENTIONED_IN:
            if e.source not in g.triplets or e.target not in g.chunks:
                problems.append(f"MentionedIn {e.source}->{e.target} has a missing endpoint")
            mentioned[e.source] = mentioned.get(e.source, 0) + 1
        elif e.kind == SUMMARY_FOR:
            if e.source not in g.communities or e.target not in g.entities:
                problems.append(f"SummaryFor {e.source}->{e.target} has a missing endpoint")
        elif e.kind == OPEN_REL:
            if e.source not in g.entities or e.target not in g.entities:
                problems.append(f"OpenRel {e.source}->{e.target} has a missing endpoint")
        else:
            problems.append(f"unknown edge kind {e.kind}")

    for tid, t in g.triplets.items():
        if not t.subject or not t.object:
            problems.append(f"triplet {tid} has an empty endpoint")
        if mentioned.get(tid, 0) != 1:
            problems.append(f"triplet {tid} has {mentioned.get(tid, 0)} MentionedIn edges")
        s_id, o_id = g.triplet_entities(tid)
        if Edge(OPEN_REL, s_id, o_id, t.predicate) not in g.edges:
            problems.append(f"triplet {tid} has no OpenRel edge")

    for cid, c in g.communities.items():
        if not c.members:
            problems.append(f"community {cid} is empty")
        for eid in g.community_member_ids(cid):
            if Edge(SUMMARY_FOR, cid, eid) not in g.edges:
                problems.append(f"community {cid} lacks SummaryFor to {eid}")
        if c.parent is not None:
            pid = community_node_id(c.parent)
            parent = g.communities.get(pid)
            if parent is None:
                problems.append(f"community {cid} has unknown parent {c.parent}")
            elif not set(c.members) <= set(parent.members):
                problems.append(f"community {cid} members are not a subset of its parent's")

    for nid, vec in g.embeddings.items():
        if not g.has_node(nid):
            problems.append(f"embedding for unknown node {nid}")
        elif vec.shape != (g.dim,) or not np.all(np.isfinite(vec)):
            problems.append(f"embedding for {nid} is malformed")
    if require_embeddings:
        for nid in (*g.chunks, *g.triplets, *g.communities):
            if nid not in g.embeddings:
                problems.append(f"node {nid} has no embedding")
    return problems
