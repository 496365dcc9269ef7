"""The online retrieve / respond / reflect loop with evolving query and subgraph.

Each iteration answers the original question from the current evidence,
asks the judge whether evidence and answer suffice, and if not derives a
sub-query and rebuilds the evidence around it. A trajectory step records the
iteration's answer and reward together with the subgraph it ended on and
the query that produced that subgraph.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import EmptyCompletion, TransportError
from .graph import HeteroGraph
from .llm import Backend, ChatRequest, complete
from .prompts import PromptSet
from .retrieval import (
    DEFAULT_EVIDENCE_BUDGET,
    DEFAULT_MAX_KEYWORDS,
    DEFAULT_TOP_K,
    EvidenceSubgraph,
    Retriever,
    apply_refinement,
    drop_all_triplets,
    parse_triple_lines,
    union_subgraphs,
)

log = logging.getLogger(__name__)

UNKNOWN = "Unknown"
_VERDICT = re.compile(r"^\W*(?:verdict\W*)?(yes|no)\b", re.IGNORECASE)
_VERDICT_ANYWHERE = re.compile(r"verdict\s*[:=-]\s*\W*(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class TrajectoryStep:
    sub_query: str
    answer: str
    reward: int
    subgraph: EvidenceSubgraph


@dataclass
class Trajectory:
    original_query: str
    steps: list[TrajectoryStep] = field(default_factory=list)
    final_answer: str | None = None
    stop_reason: str = ""

    def audit_records(self) -> list[dict]:
        records = [
            {
                "type": "step",
                "step": i,
                "sub_query": s.sub_query,
                "answer": s.answer,
                "reward": s.reward,
                "seed_ids": s.subgraph.seed_ids,
                "inferred": [[t.subject, t.predicate, t.object] for t in s.subgraph.inferred],
            }
            for i, s in enumerate(self.steps)
        ]
        records.append(
            {
                "type": "final",
                "query": self.original_query,
                "final_answer": self.final_answer,
                "stop_reason": self.stop_reason,
                "steps": len(self.steps),
            }
        )
        return records


@dataclass(frozen=True)
class MacerConfig:
    horizon: int = 3
    top_k: int = DEFAULT_TOP_K
    evidence_budget: int = DEFAULT_EVIDENCE_BUDGET
    max_keywords: int = DEFAULT_MAX_KEYWORDS
    expand_subqueries: bool = True
    per_kind: bool = False
    always_synthesize: bool = False
    prompt_dir: str | None = None

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


def render_reasoning(history: Trajectory) -> str:
    if not history.steps:
        return "None"
    return "\n" + "\n".join(f"  - {s.sub_query}\n  - {s.answer}" for s in history.steps)


def _ask(messages, backend: Backend) -> str:
    return complete(ChatRequest(tuple(messages)), backend)


def is_unknown(answer: str) -> bool:
    return re.sub(r"[\W_]+", "", answer).casefold() == "unknown"


def respond(q: str, evidence: EvidenceSubgraph, history: Trajectory, backend: Backend, prompts: PromptSet | None = None) -> str:
    prompts = prompts or PromptSet()
    context = evidence.rendered_evidence
    if history.steps:
        context += "\n\nPrevious reasoning:" + render_reasoning(history)
    messages = prompts["answer_synthesis"].render(context_str=context, query_str=q)
    try:
        return _ask(messages, backend)
    except EmptyCompletion:
        return UNKNOWN


def parse_verdict(text: str) -> int:
    m = _VERDICT.match(text) or _VERDICT_ANYWHERE.search(text)
    return int(bool(m) and m.group(1).lower() == "yes")


def judge_sufficiency(q: str, evidence: EvidenceSubgraph, answer: str, backend: Backend, prompts: PromptSet | None = None) -> int:
    """1 when the judge says YES and the answer is not 'Unknown'; unparsable verdicts count as 0."""
    if is_unknown(answer):
        return 0
    prompts = prompts or PromptSet()
    messages = prompts["sufficiency_judge"].render(
        query_str=q, context_str=evidence.rendered_evidence, answer=answer
    )
    try:
        return parse_verdict(_ask(messages, backend))
    except EmptyCompletion:
        return 0


def _strip_wrapping(text: str) -> str:
    return text.strip().strip("'\"`").strip()


def evolve_query(q: str, evidence: EvidenceSubgraph, history: Trajectory, backend: Backend, prompts: PromptSet | None = None) -> str | None:
    """Next sub-query, or None when the reflector has nothing left to ask."""
    prompts = prompts or PromptSet()
    messages = prompts["query_evolution"].render(
        query_str=q, context_str=evidence.rendered_evidence, prev_reasoning=render_reasoning(history)
    )
    try:
        reply = _ask(messages, backend)
    except EmptyCompletion:
        return None
    lines = [l for l in reply.splitlines() if l.strip()]
    line = _strip_wrapping(lines[0]) if lines else ""
    if line.lower().startswith("next question:"):
        line = _strip_wrapping(line[len("next question:"):])
    if not line or line.casefold() == "none":
        return None
    return line


def evolve_subgraph(
    sub_query: str,
    current: EvidenceSubgraph,
    retriever: Retriever,
    use_keyword_expansion: bool = True,
) -> EvidenceSubgraph:
    """Union the current evidence with a fresh retrieval for ``sub_query`` and
    let the LLM prune and complete the union's triples."""
    g = retriever.graph
    fresh = retriever.retrieve(sub_query, use_keyword_expansion=use_keyword_expansion)
    union = union_subgraphs(g, current, fresh, retriever.top_k)
    lines = union.triplet_lines(g)
    if not lines:
        return union
    messages = retriever.prompts["subgraph_refinement"].render(
        query_str=sub_query, subgraph_triples="\n".join(lines)
    )
    try:
        reply = _ask(messages, retriever.backend)
    except EmptyCompletion:
        return union
    if _strip_wrapping(reply).rstrip(".").casefold() == "none":
        return drop_all_triplets(g, union)
    kept = parse_triple_lines(reply)
    if not kept:
        log.debug("unparsable refinement for %r; keeping union", sub_query)
        return union
    return apply_refinement(g, union, kept)


def render_trajectory(trajectory: Trajectory) -> str:
    parts = ["Reasoning trajectory:"]
    for i, s in enumerate(trajectory.steps, 1):
        parts.append(f"Step {i}\nSub-query: {s.sub_query}\nAnswer: {s.answer}")
    if trajectory.steps:
        parts.append("Final evidence:\n" + trajectory.steps[-1].subgraph.rendered_evidence)
    return "\n\n".join(parts)


def synthesize_final(q: str, trajectory: Trajectory, backend: Backend, prompts: PromptSet | None = None) -> str:
    if not trajectory.steps:
        raise ValueError("cannot synthesize from an empty trajectory")
    prompts = prompts or PromptSet()
    messages = prompts["answer_synthesis"].render(context_str=render_trajectory(trajectory), query_str=q)
    try:
        return _ask(messages, backend)
    except EmptyCompletion:
        return UNKNOWN


def _norm_query(text: str) -> str:
    return " ".join(re.sub(r"[^\w\s]", " ", text).split()).casefold()


def run_macer(q: str, g: HeteroGraph, config: MacerConfig, backend: Backend) -> tuple[str, Trajectory]:
    """Answer ``q`` against ``g``; returns the final answer and the trajectory.

    A ``TransportError`` from any agent propagates with the partial
    trajectory attached as ``exc.trajectory``.
    """
    prompts = PromptSet(config.prompt_dir)
    retriever = Retriever(
        g, backend, config.top_k, config.evidence_budget, config.max_keywords, config.per_kind, prompts
    )
    traj = Trajectory(q)
    try:
        evidence = retriever.retrieve(q, use_keyword_expansion=False)
        producer = q
        asked = {_norm_query(q)}
        for _ in range(config.horizon):
            answer = respond(q, evidence, traj, backend, prompts)
            reward = judge_sufficiency(q, evidence, answer, backend, prompts)
            if reward == 1:
                traj.steps.append(TrajectoryStep(producer, answer, 1, evidence))
                traj.stop_reason = "sufficient"
                break
            sub_query = evolve_query(q, evidence, traj, backend, prompts)
            if sub_query is None or _norm_query(sub_query) in asked:
                traj.steps.append(TrajectoryStep(producer, answer, 0, evidence))
                traj.stop_reason = "stop"
                break
            asked.add(_norm_query(sub_query))
            evidence = evolve_subgraph(sub_query, evidence, retriever, config.expand_subqueries)
            producer = sub_query
            traj.steps.append(TrajectoryStep(sub_query, answer, 0, evidence))
        else:
            traj.stop_reason = "horizon"

        last = traj.steps[-1]
        if last.reward == 1 and not config.always_synthesize:
            traj.final_answer = last.answer
        else:
            traj.final_answer = synthesize_final(q, traj, backend, prompts)
    except TransportError as exc:
        exc.trajectory = traj
        raise
    return traj.final_answer, traj
