"""Chat-completion and embedding backends.

Two implementations share one surface: :class:`OpenAICompatibleBackend` talks
to any server exposing ``/chat/completions`` and ``/embeddings``, and
:class:`ScriptedBackend` answers from a lookup table so whole pipelines can be
replayed deterministically.

Script format (UTF-8)::

    # comment lines are ignored outside responses
    MATCH: a substring of the rendered prompt
    RESPONSE: first response line
    further response lines
    ---
    MATCH-RE: a regular expression searched in the prompt
    RESPONSE: ...
    ---
    DEFAULT: text returned when nothing matches

Blocks are separated by lines consisting of ``---``; the first matching block
wins.
"""

from __future__ import annotations

import functools
import hashlib
import logging
import re
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, EmptyCompletion, ScriptParseError, TransportError

log = logging.getLogger(__name__)

DEFAULT_DIM = 1024
ROLES = ("system", "user", "assistant")
_WORD = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Message:
    role: str
    text: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must come from system or user")
        for m in self.messages:
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def rendered(self) -> str:
        """The prompt as one string; scripted matchers search this."""
        return "\n\n".join(m.text for m in self.messages)


class Backend(Protocol):
    dim: int

    def complete(self, request: ChatRequest) -> str: ...

    def embed(self, text: str) -> np.ndarray: ...


def complete(request: ChatRequest, backend: Backend) -> str:
    text = backend.complete(request).rstrip()
    if not text.strip():
        raise EmptyCompletion("backend returned a blank completion")
    return text


def embed(text: str, backend: Backend) -> np.ndarray:
    collapsed = " ".join(text.split())
    if not collapsed:
        raise ValueError("cannot embed blank text")
    vec = np.asarray(backend.embed(collapsed), dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != backend.dim:
        raise DimensionMismatch(f"expected dimension {backend.dim}, got {vec.shape}")
    if not np.all(np.isfinite(vec)) or not np.any(vec):
        raise DimensionMismatch("embedding has non-finite or all-zero values")
    return vec


def chat(prompt_messages: Sequence[Message], backend: Backend, **kwargs) -> str:
    return complete(ChatRequest(tuple(prompt_messages), **kwargs), backend)


# -- mock embeddings -----------------------------------------------------------


@functools.lru_cache(maxsize=65536)
def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.shake_256(f"{seed}\x00{token}".encode("utf-8")).digest(4 * dim)
    raw = np.frombuffer(digest, dtype="<u4").astype(np.float64)
    vec = raw / 2.0**31 - 1.0
    vec.setflags(write=False)
    return vec


def hash_embedding(text: str, dim: int = DEFAULT_DIM, seed: int = 0) -> np.ndarray:
    """Unit vector built from a seeded hash of the lower-cased token multiset."""
    counts = Counter(tok.lower() for tok in _WORD.findall(text))
    if not counts:
        raise ValueError("cannot embed text without tokens")
    vec = np.zeros(dim)
    for tok in sorted(counts):
        vec += counts[tok] * _token_vector(tok, dim, seed)
    return vec / np.linalg.norm(vec)


# -- scripted backend ----------------------------------------------------------


@dataclass(frozen=True)
class ScriptEntry:
    matcher: str
    response: str
    regex: bool = False

    def matches(self, prompt: str) -> bool:
        if self.regex:
            return re.search(self.matcher, prompt, re.DOTALL) is not None
        return self.matcher in prompt


@dataclass(frozen=True)
class ScriptedBackendTable:
    entries: tuple[ScriptEntry, ...] = ()
    default_response: str = "Unknown"

    def lookup(self, prompt: str) -> tuple[int | None, str]:
        for i, entry in enumerate(self.entries):
            if entry.matches(prompt):
                return i, entry.response
        return None, self.default_response

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, str]], default: str = "Unknown", regex: bool = False):
        return cls(tuple(ScriptEntry(m, r, regex) for m, r in pairs), default)


def parse_script(text: str) -> ScriptedBackendTable:
    entries: list[ScriptEntry] = []
    default = "Unknown"
    lines = text.split("\n")
    i = 0
    n = len(lines)

    while i < n:
        # seek the header of the next block
        line = lines[i]
        if not line.strip() or line.lstrip().startswith("#") or line.strip() == "---":
            i += 1
            continue
        header_no = i + 1
        if line.startswith("DEFAULT:"):
            body = [line[len("DEFAULT:"):].lstrip(" ")]
            i += 1
            while i < n and lines[i].strip() != "---":
                body.append(lines[i])
                i += 1
            default = "\n".join(body).rstrip("\n")
            continue
        if line.startswith("MATCH-RE:"):
            matcher, regex = line[len("MATCH-RE:"):].strip(), True
            try:
                re.compile(matcher)
            except re.error as exc:
                raise ScriptParseError(header_no, f"bad pattern: {exc}") from None
        elif line.startswith("MATCH:"):
            matcher, regex = line[len("MATCH:"):].strip(), False
        else:
            raise ScriptParseError(header_no, f"expected MATCH:, MATCH-RE: or DEFAULT:, got {line!r}")
        if not matcher:
            raise ScriptParseError(header_no, "empty matcher")
        i += 1
        if i >= n or not lines[i].startswith("RESPONSE:"):
            raise ScriptParseError(min(i + 1, n), "expected RESPONSE: after matcher")
        body = [lines[i][len("RESPONSE:"):].lstrip(" ")]
        i += 1
        while i < n and lines[i].strip() != "---":
            body.append(lines[i])
            i += 1
        entries.append(ScriptEntry(matcher, "\n".join(body).rstrip("\n"), regex))
    return ScriptedBackendTable(tuple(entries), default)


def load_script(path: str | Path) -> ScriptedBackendTable:
    return parse_script(Path(path).read_text(encoding="utf-8"))


@dataclass
class CallRecord:
    kind: str
    prompt: str
    entry: int | None


class ScriptedBackend:
    """Deterministic backend: chat answers come from a table, embeddings from hashing.

    Every call is recorded in :attr:`calls`, which tests use to count agent
    invocations.
    """

    def __init__(
        self,
        table: ScriptedBackendTable | None = None,
        dim: int = DEFAULT_DIM,
        seed: int = 0,
        embedding_overrides: dict[str, np.ndarray] | None = None,
    ):
        self.table = table or ScriptedBackendTable()
        self.dim = dim
        self.seed = seed
        self.embedding_overrides = dict(embedding_overrides or {})
        self.calls: list[CallRecord] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        prompt = request.rendered()
        idx, response = self.table.lookup(prompt)
        with self._lock:
            self.calls.append(CallRecord("chat", prompt, idx))
        return response

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            self.calls.append(CallRecord("embed", text, None))
        if text in self.embedding_overrides:
            v = np.asarray(self.embedding_overrides[text], dtype=np.float64)
            return v / np.linalg.norm(v)
        return hash_embedding(text, self.dim, self.seed)

    def chat_prompts(self) -> list[str]:
        return [c.prompt for c in self.calls if c.kind == "chat"]


# -- live backend --------------------------------------------------------------


@dataclass
class OpenAICompatibleBackend:
    """Client for an OpenAI-compatible HTTP server.

    Transport failures (network errors and HTTP status >= 400) are retried
    ``retries`` times with exponential backoff; in-flight requests are capped by
    ``max_in_flight``.
    """

    base_url: str
    chat_model: str
    embedding_model: str = ""
    api_key: str | None = None
    dim: int = DEFAULT_DIM
    retries: int = 2
    backoff: float = 0.5
    timeout: float = 120.0
    max_in_flight: int = 8
    transport: httpx.BaseTransport | None = None
    sleep: Callable[[float], None] = time.sleep
    _client: httpx.Client = field(init=False, repr=False)
    _slots: threading.BoundedSemaphore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(
            base_url=self.base_url.rstrip("/"),
            headers=headers,
            timeout=self.timeout,
            transport=self.transport,
        )
        self._slots = threading.BoundedSemaphore(self.max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(path, json=payload)
            except httpx.HTTPError as exc:
                last = exc
                log.warning("%s attempt %d failed: %s", path, attempt + 1, exc)
                continue
            if resp.status_code >= 400:
                last = TransportError(f"HTTP {resp.status_code} from {path}: {resp.text[:200]}")
                log.warning("%s attempt %d returned HTTP %d", path, attempt + 1, resp.status_code)
                continue
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"non-JSON reply from {path}") from exc
        raise TransportError(f"{path} failed after {self.retries + 1} attempts: {last}")

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": self.chat_model,
            "messages": [{"role": m.role, "content": m.text} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post("/chat/completions", payload)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed chat completion payload") from exc
        return content or ""

    def embed(self, text: str) -> np.ndarray:
        data = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        try:
            values = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("malformed embedding payload") from exc
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DimensionMismatch(f"expected dimension {self.dim}, got {vec.shape[0]}")
        return vec

    def close(self) -> None:
        self._client.close()
