"""Corpus loading and token-window chunking."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .errors import CorpusReadError, DuplicateDocId, InvalidChunkParams

DEFAULT_CHUNK_SIZE = 1024
DEFAULT_OVERLAP = 20
_SENTENCE_END = frozenset(".!?")


@dataclass(frozen=True)
class Document:
    doc_id: str
    body: str
    title: str = ""


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    text: str
    token_start: int
    token_count: int


class Tokenizer(Protocol):
    def spans(self, text: str) -> list[tuple[int, int]]: ...

    def tokens(self, text: str) -> list[str]: ...


class RegexTokenizer:
    """Splits on whitespace and treats every punctuation mark as its own token."""

    pattern = re.compile(r"\w+|[^\w\s]")

    def spans(self, text: str) -> list[tuple[int, int]]:
        return [m.span() for m in self.pattern.finditer(text)]

    def tokens(self, text: str) -> list[str]:
        return self.pattern.findall(text)


DEFAULT_TOKENIZER = RegexTokenizer()


def count_tokens(text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> int:
    return len(tokenizer.spans(text))


def expected_chunk_count(total: int, chunk_size: int, overlap: int) -> int:
    if total == 0:
        return 0
    if total <= chunk_size:
        return 1
    return 1 + math.ceil((total - chunk_size) / (chunk_size - overlap))


def window_starts(total: int, chunk_size: int, overlap: int) -> list[int]:
    """Start offsets of fixed windows: window k begins at k * (chunk_size - overlap)."""
    if not 0 <= overlap < chunk_size:
        raise InvalidChunkParams(f"need 0 <= overlap < chunk_size, got {overlap=} {chunk_size=}")
    if total == 0:
        return []
    step = chunk_size - overlap
    starts = [0]
    while starts[-1] + chunk_size < total:
        starts.append(starts[-1] + step)
    return starts


def split_into_chunks(
    doc: Document,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    overlap: int = DEFAULT_OVERLAP,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    snap_to_sentence: bool = False,
) -> list[Chunk]:
    """Cut ``doc`` into windows of ``chunk_size`` tokens sharing ``overlap`` tokens.

    With ``snap_to_sentence`` a window end moves back to the closest sentence
    terminator, by at most ``overlap`` tokens, and the next window starts
    ``overlap`` tokens before that end.
    """
    if not 0 <= overlap < chunk_size:
        raise InvalidChunkParams(f"need 0 <= overlap < chunk_size, got {overlap=} {chunk_size=}")
    spans = tokenizer.spans(doc.body)
    total = len(spans)
    if snap_to_sentence:
        bounds = _snapped_windows(doc.body, spans, chunk_size, overlap)
    else:
        bounds = [(s, min(s + chunk_size, total)) for s in window_starts(total, chunk_size, overlap)]
    chunks = []
    for k, (start, end) in enumerate(bounds):
        text = doc.body[spans[start][0] : spans[end - 1][1]]
        chunks.append(Chunk(f"{doc.doc_id}#{k:04d}", doc.doc_id, text, start, end - start))
    return chunks


def _snapped_windows(body, spans, chunk_size, overlap):
    total = len(spans)
    out = []
    start = 0
    while True:
        end = min(start + chunk_size, total)
        if end < total:
            # window must stay longer than the overlap so starts keep increasing
            floor = max(end - overlap, start + overlap + 1)
            for cand in range(end, floor - 1, -1):
                a, b = spans[cand - 1]
                if body[a:b] in _SENTENCE_END:
                    end = cand
                    break
        out.append((start, end))
        if end >= total:
            return out
        start = end - overlap


def reassemble(chunks: Iterable[Chunk], overlap: int, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> list[str]:
    """Token stream rebuilt from chunks by dropping each later chunk's leading overlap."""
    tokens: list[str] = []
    for i, chunk in enumerate(chunks):
        toks = tokenizer.tokens(chunk.text)
        tokens.extend(toks if i == 0 else toks[overlap:])
    return tokens


def load_corpus(path: str | Path) -> list[Document]:
    """Read a directory of ``.txt`` files or a line-delimited JSON corpus.

    Line records carry ``id``, ``title`` and ``text``. Documents come back
    sorted by ``doc_id``.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusReadError(f"corpus path {path} does not exist")
    docs: dict[str, Document] = {}

    def add(doc: Document, origin: str) -> None:
        if doc.doc_id in docs:
            raise DuplicateDocId(f"doc_id {doc.doc_id!r} appears twice ({origin})")
        docs[doc.doc_id] = doc

    if path.is_dir():
        for f in sorted(path.iterdir()):
            if not f.is_file() or f.suffix.lower() != ".txt":
                continue
            try:
                body = f.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError) as exc:
                raise CorpusReadError(f"{f}: {exc}") from exc
            add(Document(f.stem, body, f.stem), str(f))
    else:
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise CorpusReadError(f"{path}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc = Document(str(rec["id"]), rec["text"], rec.get("title") or "")
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusReadError(f"{path}:{lineno}: bad record ({exc})") from exc
            add(doc, f"{path}:{lineno}")
    for doc in docs.values():
        if not doc.body.strip():
            raise CorpusReadError(f"document {doc.doc_id!r} has an empty body")
    return [docs[k] for k in sorted(docs)]
