"""LLM-driven construction steps: triplet extraction, community summaries,
keyword expansion, and the parsing that makes their output usable."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import EmptyCompletion, ExtractionParseFailure
from .ingest import Chunk
from .llm import Backend, ChatRequest, Message, complete
from .prompts import PromptSet

log = logging.getLogger(__name__)

DEFAULT_MAX_TRIPLETS = 2
STRUCTURE_REMINDER = (
    "Your previous reply could not be parsed. Respond with valid structure only: "
    'a single JSON object of the form { "entities": [...], "relationships": [...] }.'
)


def canonical_name(name: str) -> str:
    """Display form of an entity name: trimmed, internal whitespace collapsed."""
    return " ".join(str(name).split())


def entity_key(name: str) -> str:
    """Identity of an entity; names differing only in case or spacing collide."""
    return canonical_name(name).casefold()


@dataclass(frozen=True)
class EntityRecord:
    name: str
    entity_type: str = ""
    description: str = ""
    aliases: frozenset[str] = frozenset()

    @property
    def key(self) -> str:
        return entity_key(self.name)

    def merged(self, other: EntityRecord) -> EntityRecord:
        aliases = set(self.aliases) | set(other.aliases)
        if other.name != self.name:
            aliases.add(other.name)
        return EntityRecord(
            self.name,
            self.entity_type or other.entity_type,
            self.description or other.description,
            frozenset(aliases),
        )


@dataclass(frozen=True)
class TripletRecord:
    subject: str
    predicate: str
    object: str
    source_chunk: str
    subject_type: str = ""
    object_type: str = ""
    description: str = ""

    def line(self) -> str:
        return f"{self.subject} -> {self.predicate} -> {self.object}"

    def embedding_text(self) -> str:
        return f"{self.subject} | {self.predicate} | {self.object} | {self.description}"

    def member_line(self) -> str:
        """Rendering used by the community summary prompt."""
        return f"{self.subject} -> {self.object} -> {self.predicate} -> {self.description}"


@dataclass(frozen=True)
class ExtractionResult:
    entities: tuple[EntityRecord, ...]
    relationships: tuple[TripletRecord, ...]
    parse_attempts: int = 1


def find_json_object(text: str):
    """Parse the outermost ``{...}`` span of ``text``; None when there is none or it is invalid."""
    start = text.find("{")
    end = text.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        return json.loads(text[start : end + 1])
    except ValueError:
        return None


def _field(rec: dict, key: str) -> str:
    value = rec.get(key, "")
    return "" if value is None else str(value).strip()


def parse_extraction(text: str, chunk_id: str, max_triplets: int = DEFAULT_MAX_TRIPLETS) -> ExtractionResult:
    """Validate an extraction reply. Raises ``ValueError`` when it has no usable structure."""
    obj = find_json_object(text)
    if not isinstance(obj, dict):
        raise ValueError("no JSON object in completion")
    raw_entities = obj.get("entities", [])
    raw_rels = obj.get("relationships")
    if not isinstance(raw_entities, list) or not isinstance(raw_rels, list):
        raise ValueError("'entities' and 'relationships' must be lists")

    entities: dict[str, EntityRecord] = {}

    def add_entity(rec: EntityRecord) -> None:
        if rec.key in entities:
            entities[rec.key] = entities[rec.key].merged(rec)
        else:
            entities[rec.key] = rec

    for item in raw_entities:
        if not isinstance(item, dict):
            continue
        name = canonical_name(_field(item, "entity_name"))
        if name:
            add_entity(EntityRecord(name, _field(item, "entity_type"), _field(item, "entity_description")))

    triplets: list[TripletRecord] = []
    for item in raw_rels:
        if len(triplets) >= max_triplets:
            break
        if not isinstance(item, dict):
            continue
        subj = canonical_name(_field(item, "source_entity"))
        obj_ = canonical_name(_field(item, "target_entity"))
        pred = " ".join(_field(item, "relation").split())
        if not subj or not obj_ or not pred:
            continue
        # unlisted endpoints become bare entities; other casings become aliases
        for name in (subj, obj_):
            add_entity(EntityRecord(name))
        s_rec, o_rec = entities[entity_key(subj)], entities[entity_key(obj_)]
        triplets.append(
            TripletRecord(
                s_rec.name,
                pred,
                o_rec.name,
                chunk_id,
                s_rec.entity_type,
                o_rec.entity_type,
                _field(item, "relationship_description"),
            )
        )
    return ExtractionResult(tuple(entities.values()), tuple(triplets))


def extract_triplets(
    chunk: Chunk,
    backend: Backend,
    max_triplets: int = DEFAULT_MAX_TRIPLETS,
    prompts: PromptSet | None = None,
    max_retries: int = 2,
) -> ExtractionResult:
    if not chunk.text.strip():
        raise ValueError(f"chunk {chunk.chunk_id} is empty")
    prompts = prompts or PromptSet()
    messages = prompts["extract_triplets"].render(max_knowledge_triplets=max_triplets, text=chunk.text)
    for attempt in range(1, max_retries + 2):
        try:
            reply = complete(ChatRequest(tuple(messages)), backend)
            return replace(parse_extraction(reply, chunk.chunk_id, max_triplets), parse_attempts=attempt)
        except (ValueError, EmptyCompletion) as exc:
            log.debug("extraction attempt %d for %s failed: %s", attempt, chunk.chunk_id, exc)
        messages = [*messages[:-1], Message(messages[-1].role, messages[-1].text + "\n\n" + STRUCTURE_REMINDER)]
    raise ExtractionParseFailure(chunk.chunk_id, max_retries + 1)


def render_community_info(members: Sequence[TripletRecord]) -> str:
    ordered = sorted(members, key=lambda t: (t.subject, t.predicate, t.object, t.description, t.source_chunk))
    return "\n".join(t.member_line() for t in ordered)


def summarize_community(
    members: Sequence[TripletRecord], backend: Backend, prompts: PromptSet | None = None
) -> str:
    """Summary text for a community; falls back to the member lines on a blank reply."""
    if not members:
        raise ValueError("community has no member triplets")
    prompts = prompts or PromptSet()
    info = render_community_info(members)
    messages = prompts["community_summary"].render(community_info=info)
    try:
        return complete(ChatRequest(tuple(messages)), backend)
    except EmptyCompletion:
        return info


def parse_keywords(reply: str, query: str, max_keywords: int) -> list[str]:
    text = reply.strip()
    if text.upper().startswith("KEYWORDS:"):
        text = text[len("KEYWORDS:"):]
    text = " ".join(text.splitlines())
    seen = {query.strip().casefold()}
    terms: list[str] = []
    for part in text.split("^"):
        term = part.strip()
        if term and term.casefold() not in seen:
            seen.add(term.casefold())
            terms.append(term)
    return [query.strip(), *terms[:max_keywords]]


def expand_keywords(
    query: str, max_keywords: int, backend: Backend, prompts: PromptSet | None = None
) -> list[str]:
    """Query followed by up to ``max_keywords`` distinct expansion terms."""
    if not query.strip():
        raise ValueError("query is empty")
    prompts = prompts or PromptSet()
    messages = prompts["keyword_expansion"].render(max_keywords=max_keywords, query_str=query)
    try:
        reply = complete(ChatRequest(tuple(messages)), backend)
    except EmptyCompletion:
        return [query.strip()]
    return parse_keywords(reply, query, max_keywords)
