"""Answer-quality metrics, debiased pairwise judging and ELO aggregation."""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DomainError, EmptyCompletion, NoValidComparisons
from .extraction import find_json_object
from .llm import Backend, ChatRequest, complete
from .prompts import PromptSet

REFERENCE_RATING = 1600.0
DIMENSIONS = ("Comprehensiveness", "Diversity", "Empowerment", "Overall Winner")

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


# ---- extractive metrics ---------------------------------------------------

@dataclass(frozen=True)
class QAPair:
    question: str
    gold_answers: tuple[str, ...]
    prediction: str
    qid: str = ""

    def __post_init__(self) -> None:
        if not self.gold_answers:
            raise ValueError("gold_answers must be non-empty")


def normalize_answer(text: str) -> str:
    text = text.lower().translate(_PUNCT)
    return " ".join(_ARTICLES.sub(" ", text).split())


def exact_match(pred: str, golds: Sequence[str]) -> int:
    if not golds:
        raise ValueError("golds must be non-empty")
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in golds))


def _prf(pred_tokens: list[str], gold_tokens: list[str]) -> tuple[float, float, float]:
    if not pred_tokens and not gold_tokens:
        return 1.0, 1.0, 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0, 0.0, 0.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0, 0.0, 0.0
    p = overlap / len(pred_tokens)
    r = overlap / len(gold_tokens)
    return 2 * p * r / (p + r), p, r


def f1_prf(pred: str, golds: Sequence[str]) -> tuple[float, float, float]:
    """(f1, precision, recall) against the gold with the highest F1; first gold wins ties."""
    if not golds:
        raise ValueError("golds must be non-empty")
    pt = normalize_answer(pred).split()
    return max((_prf(pt, normalize_answer(g).split()) for g in golds), key=lambda t: t[0])


@dataclass(frozen=True)
class ItemScore:
    qid: str
    em: int
    f1: float
    precision: float
    recall: float


def score_items(items: Iterable[QAPair]) -> tuple[list[ItemScore], dict]:
    scores = []
    for it in items:
        f1, p, r = f1_prf(it.prediction, it.gold_answers)
        scores.append(ItemScore(it.qid, exact_match(it.prediction, it.gold_answers), f1, p, r))
    n = len(scores)
    summary = {"count": n}
    for name in ("em", "f1", "precision", "recall"):
        summary[name] = math.fsum(getattr(s, name) for s in scores) / n if n else 0.0
    return scores, summary


# ---- pairwise judging -----------------------------------------------------

@dataclass(frozen=True)
class PairwiseVerdict:
    """Per-dimension outcome: "A", "B" or "tie". ``winners`` is empty when invalid."""

    winners: dict[str, str] = field(default_factory=dict)
    explanations: dict[str, str] = field(default_factory=dict)
    invalid_reason: str = ""

    @property
    def valid(self) -> bool:
        return not self.invalid_reason

    def credit(self, dimension: str) -> float:
        """Wins credited to side A on ``dimension``."""
        return {"A": 1.0, "B": 0.0, "tie": 0.5}[self.winners[dimension]]

    def mirrored(self) -> "PairwiseVerdict":
        flip = {"A": "B", "B": "A", "tie": "tie"}
        return PairwiseVerdict({k: flip[v] for k, v in self.winners.items()}, dict(self.explanations), self.invalid_reason)


def _position(value) -> int | None:
    if isinstance(value, dict):
        value = next((v for k, v in value.items() if k.lower() == "winner"), None)
    if not isinstance(value, str):
        return None
    m = re.fullmatch(r"\s*(?:answer\s*)?([12])\s*\.?\s*", value, re.IGNORECASE)
    return int(m.group(1)) if m else None


def parse_evaluator(text: str) -> tuple[dict[str, int], dict[str, str]] | None:
    """Map each dimension to the winning position (1 or 2); None when any is missing."""
    obj = find_json_object(text)
    if not isinstance(obj, dict):
        return None
    lowered = {k.strip().lower(): v for k, v in obj.items()}
    positions, notes = {}, {}
    for dim in DIMENSIONS:
        raw = lowered.get(dim.lower())
        pos = _position(raw)
        if pos is None:
            return None
        positions[dim] = pos
        if isinstance(raw, dict):
            notes[dim] = str(next((v for k, v in raw.items() if k.lower() == "explanation"), ""))
    return positions, notes


def judge_pairwise(question: str, answer_a: str, answer_b: str, backend: Backend, prompts: PromptSet | None = None) -> PairwiseVerdict:
    """Ask the evaluator twice with the answers swapped and keep only agreed winners."""
    if not answer_a.strip() or not answer_b.strip():
        raise ValueError("both answers must be non-empty")
    prompts = prompts or PromptSet()
    runs = []
    for first, second in ((answer_a, answer_b), (answer_b, answer_a)):
        messages = prompts["answer_evaluator"].render(query=question, answer1=first, answer2=second)
        try:
            reply = complete(ChatRequest(tuple(messages)), backend)
        except EmptyCompletion:
            reply = ""
        parsed = parse_evaluator(reply)
        if parsed is None:
            return PairwiseVerdict(invalid_reason=f"unparsable evaluator output in ordering {len(runs) + 1}")
        runs.append(parsed)
    (fwd, fwd_notes), (rev, _) = runs
    winners = {}
    for dim in DIMENSIONS:
        a = "A" if fwd[dim] == 1 else "B"
        b = "A" if rev[dim] == 2 else "B"
        winners[dim] = a if a == b else "tie"
    return PairwiseVerdict(winners, fwd_notes)


# ---- ELO ------------------------------------------------------------------

def elo_from_winrate(w: float, r_ref: float = REFERENCE_RATING) -> float:
    """Rating of a method that beats the reference with probability ``w``."""
    if not 0.0 < w < 1.0:
        raise DomainError(f"win rate must lie strictly inside (0, 1), got {w!r}")
    return r_ref - 400.0 * math.log10(1.0 / w - 1.0)


def win_probability(r_i: float, r_j: float) -> float:
    # the favourite's probability lies in [0.5, 1], where 1 - p is exact,
    # so p(i, j) + p(j, i) == 1 holds bit for bit
    if r_i < r_j:
        return 1.0 - win_probability(r_j, r_i)
    return 1.0 / (1.0 + 10.0 ** ((r_j - r_i) / 400.0))


@dataclass(frozen=True)
class Comparison:
    method_a: str
    method_b: str
    verdict: PairwiseVerdict
    question: str = ""

    def __post_init__(self) -> None:
        if self.method_a == self.method_b:
            raise ValueError("a method cannot be compared with itself")


@dataclass
class EloTable:
    reference: str
    ratings: dict[str, float | None]
    reference_rating: float = REFERENCE_RATING
    saturated: list[str] = field(default_factory=list)


@dataclass
class WinRateReport:
    methods: list[str]
    matrix: dict[str, list[list[float | None]]]
    elo: EloTable
    valid: int
    invalid: int


def aggregate_winrates(comparisons: Sequence[Comparison], reference: str, dimension: str = "Overall Winner") -> WinRateReport:
    """Win-rate matrices per dimension (row beats column) and ELO against ``reference`` on ``dimension``.

    Ratings for methods that always win or always lose are None and listed
    in ``saturated``; the formula has no finite value there.
    """
    methods = sorted({c.method_a for c in comparisons} | {c.method_b for c in comparisons} | {reference})
    index = {m: i for i, m in enumerate(methods)}
    n = len(methods)
    wins = {d: [[0.0] * n for _ in range(n)] for d in DIMENSIONS}
    totals = [[0] * n for _ in range(n)]
    seen = set()
    valid = invalid = 0
    for c in comparisons:
        i, j = index[c.method_a], index[c.method_b]
        seen.add((min(i, j), max(i, j)))
        if not c.verdict.valid:
            invalid += 1
            continue
        valid += 1
        totals[i][j] += 1
        totals[j][i] += 1
        for d in DIMENSIONS:
            credit = c.verdict.credit(d)
            wins[d][i][j] += credit
            wins[d][j][i] += 1.0 - credit
    for i, j in sorted(seen):
        if totals[i][j] == 0:
            raise NoValidComparisons(f"no valid comparisons between {methods[i]!r} and {methods[j]!r}")
    matrix = {}
    for d in DIMENSIONS:
        matrix[d] = [
            [0.5 if i == j else (wins[d][i][j] / totals[i][j] if totals[i][j] else None) for j in range(n)]
            for i in range(n)
        ]
    ref = index[reference]
    ratings: dict[str, float | None] = {reference: REFERENCE_RATING}
    saturated = []
    for m in methods:
        if m == reference:
            continue
        w = matrix[dimension][index[m]][ref]
        if w is None:
            raise NoValidComparisons(f"{m!r} was never compared with reference {reference!r}")
        if 0.0 < w < 1.0:
            ratings[m] = elo_from_winrate(w)
        else:
            ratings[m] = None
            saturated.append(m)
    return WinRateReport(methods, matrix, EloTable(reference, ratings, saturated=saturated), valid, invalid)


def format_matrix(report: WinRateReport, dimension: str = "Overall Winner") -> str:
    width = max(8, *(len(m) for m in report.methods))
    head = " " * width + "".join(f"{m:>{width + 2}}" for m in report.methods)
    rows = [head]
    for m, row in zip(report.methods, report.matrix[dimension]):
        cells = "".join(f"{'-' if v is None else f'{v:.3f}':>{width + 2}}" for v in row)
        rows.append(f"{m:<{width}}{cells}")
    return "\n".join(rows)
