"""Prompt templates used by every LLM-driven step.

Templates are plain text files. A line of the form ``<<system>>`` or
``<<user>>`` opens a message section; a file without markers is one user
message. Placeholders look like ``{name}`` and are substituted verbatim in a
single pass, so substituted values are never re-expanded.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..llm import Message

_MARKER = re.compile(r"^<<(system|user|assistant)>>$")
_PLACEHOLDER = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

TEMPLATE_NAMES = (
    "extract_triplets",
    "community_summary",
    "keyword_expansion",
    "query_evolution",
    "subgraph_refinement",
    "answer_synthesis",
    "sufficiency_judge",
    "answer_evaluator",
)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    sections: tuple[tuple[str, str], ...]

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(
            m.group(1) for _, text in self.sections for m in _PLACEHOLDER.finditer(text)
        )

    def render(self, **values: object) -> list[Message]:
        missing = self.placeholders - values.keys()
        if missing:
            raise KeyError(f"template {self.name!r} missing values for {sorted(missing)}")

        def sub(m: re.Match[str]) -> str:
            key = m.group(1)
            return str(values[key]) if key in values else m.group(0)

        return [Message(role, _PLACEHOLDER.sub(sub, text)) for role, text in self.sections]


def parse_template(name: str, text: str) -> PromptTemplate:
    sections: list[tuple[str, list[str]]] = []
    for line in text.split("\n"):
        m = _MARKER.match(line)
        if m:
            sections.append((m.group(1), []))
        elif sections:
            sections[-1][1].append(line)
        else:
            sections.append(("user", [line]))
    out = []
    for role, lines in sections:
        body = "\n".join(lines)
        if body.endswith("\n"):
            body = body[:-1]
        out.append((role, body))
    return PromptTemplate(name, tuple(out))


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    """Load ``name`` from ``directory`` if it holds an override, else the packaged copy."""
    if directory is not None:
        path = Path(directory) / f"{name}.txt"
        if path.exists():
            return parse_template(name, path.read_text(encoding="utf-8"))
    text = resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
    return parse_template(name, text)


class PromptSet:
    """Lazily loaded, cached set of templates rooted at an optional override directory."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = directory
        self._cache: dict[str, PromptTemplate] = {}

    def __getitem__(self, name: str) -> PromptTemplate:
        if name not in self._cache:
            self._cache[name] = load_template(name, self.directory)
        return self._cache[name]
