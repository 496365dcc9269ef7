"""On-disk index format.

An index directory holds line-delimited JSON record files (``nodes.chunks``,
``nodes.entities``, ``nodes.triplets``, ``nodes.communities``, ``edges``),
a ``manifest`` JSON document, and ``embeddings.bin``:

    8 bytes   magic ``HRGEMB1\\n``
    4 bytes   little-endian uint32 header length H
    H bytes   UTF-8 JSON header {"dim": d, "entries": [[node_id, offset], ...]}
    rest      little-endian float32 values; a vector starts at ``offset`` floats

Records are written in sorted order, so saving the same graph twice yields
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .community import CommunityRecord
from .errors import IndexFormatError
from .extraction import EntityRecord, TripletRecord
from .graph import Edge, HeteroGraph, validate
from .ingest import Chunk

FORMAT_VERSION = 1
MAGIC = b"HRGEMB1\n"
RECORD_FILES = ("nodes.chunks", "nodes.entities", "nodes.triplets", "nodes.communities", "edges")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _write_lines(path: Path, records) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def save_index(g: HeteroGraph, path: str | Path, build: dict | None = None) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    _write_lines(path / "nodes.chunks", ({"id": k, **asdict(v)} for k, v in sorted(g.chunks.items())))
    _write_lines(
        path / "nodes.entities",
        ({"id": k, **asdict(v), "aliases": sorted(v.aliases)} for k, v in sorted(g.entities.items())),
    )
    _write_lines(path / "nodes.triplets", ({"id": k, **asdict(v)} for k, v in sorted(g.triplets.items())))
    _write_lines(
        path / "nodes.communities",
        ({"id": k, **asdict(v), "members": list(v.members)} for k, v in sorted(g.communities.items())),
    )
    _write_lines(path / "edges", (asdict(e) for e in sorted(g.edges)))

    ids = sorted(g.embeddings)
    header = _dumps({"dim": g.dim, "entries": [[nid, i * g.dim] for i, nid in enumerate(ids)]}).encode("utf-8")
    with (path / "embeddings.bin").open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for nid in ids:
            fh.write(np.ascontiguousarray(g.embeddings[nid], dtype="<f4").tobytes())

    manifest = {
        "format_version": FORMAT_VERSION,
        "dim": g.dim,
        "counts": g.counts(),
        "build": build or {},
    }
    (path / "manifest").write_text(json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _read_lines(path: Path):
    if not path.exists():
        raise IndexFormatError(f"missing {path.name}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                raise IndexFormatError(f"{path.name}:{lineno}: truncated record {line[:80]!r}")
            try:
                yield lineno, json.loads(line)
            except ValueError as exc:
                raise IndexFormatError(f"{path.name}:{lineno}: invalid record {line[:80]!r} ({exc})") from None


def _build(path: Path, name: str, factory):
    out = {}
    for lineno, rec in _read_lines(path / name):
        try:
            nid = rec.pop("id")
            out[nid] = factory(rec)
        except (KeyError, TypeError, AttributeError) as exc:
            raise IndexFormatError(f"{name}:{lineno}: bad record ({exc})") from None
    return out


def read_manifest(path: str | Path) -> dict:
    try:
        return json.loads((Path(path) / "manifest").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IndexFormatError(f"unreadable manifest: {exc}") from None


def load_index(path: str | Path) -> HeteroGraph:
    path = Path(path)
    if not path.is_dir():
        raise IndexFormatError(f"{path} is not an index directory")
    if not any(path.iterdir()):
        return HeteroGraph()
    manifest = read_manifest(path)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported format version {manifest.get('format_version')}")
    g = HeteroGraph(dim=int(manifest["dim"]))
    g.chunks = _build(path, "nodes.chunks", lambda r: Chunk(**r))
    g.entities = _build(
        path, "nodes.entities", lambda r: EntityRecord(**{**r, "aliases": frozenset(r["aliases"])})
    )
    g.triplets = _build(path, "nodes.triplets", lambda r: TripletRecord(**r))
    g.communities = _build(
        path, "nodes.communities", lambda r: CommunityRecord(**{**r, "members": tuple(r["members"])})
    )
    for lineno, rec in _read_lines(path / "edges"):
        try:
            g.edges.add(Edge(**rec))
        except TypeError as exc:
            raise IndexFormatError(f"edges:{lineno}: bad record ({exc})") from None
    g.embeddings = _read_embeddings(path / "embeddings.bin", g.dim)
    g.rebuild_indexes()

    expected = manifest.get("counts", {})
    actual = g.counts()
    for key, value in expected.items():
        if actual.get(key) != value:
            raise IndexFormatError(f"manifest says {key}={value}, found {actual.get(key)}")
    problems = validate(g)
    if problems:
        raise IndexFormatError(f"index fails integrity checks: {problems[0]}")
    return g


def _read_embeddings(path: Path, dim: int) -> dict[str, np.ndarray]:
    if not path.exists():
        raise IndexFormatError("missing embeddings.bin")
    data = path.read_bytes()
    if data[: len(MAGIC)] != MAGIC or len(data) < len(MAGIC) + 4:
        raise IndexFormatError("embeddings.bin: bad magic")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    start = len(MAGIC) + 4
    try:
        header = json.loads(data[start : start + hlen].decode("utf-8"))
    except ValueError as exc:
        raise IndexFormatError(f"embeddings.bin: bad header ({exc})") from None
    if header.get("dim") != dim:
        raise IndexFormatError(f"embeddings.bin: dimension {header.get('dim')} != manifest {dim}")
    body = data[start + hlen :]
    if len(body) % 4:
        raise IndexFormatError("embeddings.bin: payload is not whole float32 values")
    values = np.frombuffer(body, dtype="<f4")
    out = {}
    for nid, offset in header["entries"]:
        if offset + dim > len(values):
            raise IndexFormatError(f"embeddings.bin: vector for {nid} is truncated")
        out[nid] = values[offset : offset + dim].astype(np.float32)
    return out
