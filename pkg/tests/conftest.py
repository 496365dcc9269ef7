from __future__ import annotations

from pathlib import Path

import pytest

from hetrag.indexer import IndexConfig, build_index
from hetrag.ingest import load_corpus
from hetrag.llm import ScriptedBackend, ScriptedBackendTable, load_script

FIXTURES = Path(__file__).parent / "fixtures"
TOY_CORPUS = FIXTURES / "toy_corpus"
CASE_SCRIPT = FIXTURES / "ryan_adams.script"
CASE_QUESTION = "What nationality is the performer of the song When The Stars Go Blue?"


def scripted(pairs=(), default="Unknown", regex=False, **kw) -> ScriptedBackend:
    return ScriptedBackend(ScriptedBackendTable.from_pairs(list(pairs), default, regex), **kw)


def case_backend(dim: int = 1024) -> ScriptedBackend:
    return ScriptedBackend(load_script(CASE_SCRIPT), dim=dim)


def build_toy(dim: int = 1024):
    return build_index(load_corpus(TOY_CORPUS), case_backend(dim), IndexConfig())


# PASS/FAIL lines from the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy():
    """(graph, report) for the 3-document toy corpus. Treat as read-only."""
    return build_toy()


def call_kinds(backend: ScriptedBackend) -> list[str]:
    """Classify each recorded chat call by the template that produced it."""
    kinds = []
    for call in backend.calls:
        if call.kind != "chat":
            continue
        p = call.prompt
        if p.startswith("Context information"):
            kinds.append("synthesize" if "Reasoning trajectory:" in p else "respond")
        elif p.startswith("You judge"):
            kinds.append("judge")
        elif p.startswith("The original question"):
            kinds.append("evolve")
        elif p.startswith("You are given a sub-graph"):
            kinds.append("refine")
        elif p.startswith("Given some initial query"):
            kinds.append("keywords")
        else:
            kinds.append("other")
    return kinds


# Sub-queries advance "Follow-up step 1" -> "step 2" -> "step 3"; the answer
# names the round it was produced in.
_ROUND_PAIRS = [
    (r"(?s)^The original question.*Previous reasoning:.*Follow-up step 2", "Follow-up step 3"),
    (r"(?s)^The original question.*Previous reasoning:.*Follow-up step 1", "Follow-up step 2"),
    (r"^The original question", "Follow-up step 1"),
    (r"(?s)^Context information.*Previous reasoning:.*Follow-up step 2", "round3"),
    (r"(?s)^Context information.*Previous reasoning:.*Follow-up step 1", "round2"),
    (r"^Context information", "round1"),
]


def never_sufficient_backend(dim: int = 1024) -> ScriptedBackend:
    return ScriptedBackend(ScriptedBackendTable.from_pairs(_ROUND_PAIRS, "NO", regex=True), dim=dim)


def iteration_mix_backend(dim: int = 1024) -> ScriptedBackend:
    """Judge says YES once the answer's round equals the round the question asks for."""
    judge = (r"(?s)^You judge.*Question: Question \d+ needs (\d)\?.*Candidate answer: round\1\s*\n", "YES")
    return ScriptedBackend(ScriptedBackendTable.from_pairs([judge] + _ROUND_PAIRS, "NO", regex=True), dim=dim)


def iteration_mix_questions(counts=(20, 32, 48), seed: int = 7) -> list[tuple[str, int]]:
    import random

    rounds = [r for r, c in enumerate(counts, 1) for _ in range(c)]
    random.Random(seed).shuffle(rounds)
    return [(f"Question {i:03d} needs {r}?", r) for i, r in enumerate(rounds)]


# (prediction, golds, em, f1, precision, recall), worked out by hand
METRIC_FIXTURE = [
    ("Paris", ["Paris"], 1, 1.0, 1.0, 1.0),
    ("the Paris", ["Paris"], 1, 1.0, 1.0, 1.0),
    ("ryan adams is american.", ["america"], 0, 0.0, 0.0, 0.0),
    ("the city of Paris", ["Paris"], 0, 1 / 2, 1 / 3, 1.0),
    ("London", ["Paris"], 0, 0.0, 0.0, 0.0),
    ("", [""], 1, 1.0, 1.0, 1.0),
    ("", ["Paris"], 0, 0.0, 0.0, 0.0),
    ("The Theory of Relativity!", ["theory of general relativity"], 0, 6 / 7, 1.0, 3 / 4),
    ("New York City", ["NYC", "new york"], 0, 4 / 5, 2 / 3, 1.0),
    ("a b b c", ["b b b"], 0, 2 / 3, 2 / 3, 2 / 3),
]


def evaluator_reply(positions, explanation="because") -> str:
    """JSON evaluator output naming ``Answer n`` per dimension (Comp, Div, Emp, Overall)."""
    import json

    from hetrag.evaluation import DIMENSIONS

    return json.dumps({d: {"Winner": f"Answer {p}", "Explanation": explanation} for d, p in zip(DIMENSIONS, positions)})


QUESTIONS = FIXTURES / "questions.jsonl"
GOLD = FIXTURES / "gold.jsonl"


def run_cli(*argv) -> tuple[int, str, str]:
    """Run the CLI in-process; returns (exit code, stdout, stderr)."""
    import contextlib
    import io

    from hetrag.cli import main

    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()


def run_pipeline(workdir: Path) -> dict[str, bytes]:
    """index + 10 queries + eval under the case script; returns every artifact's bytes."""
    index = workdir / "index"
    steps = [
        ("index", TOY_CORPUS, "--out", index, "--script", CASE_SCRIPT),
        ("query", index, "--questions", QUESTIONS, "--script", CASE_SCRIPT,
         "--audit", workdir / "audit.jsonl", "--out", workdir / "pred.jsonl"),
        ("eval", workdir / "pred.jsonl", GOLD, "--out", workdir / "metrics.jsonl"),
    ]
    for argv in steps:
        code, _, err = run_cli(*argv)
        assert code == 0, err
    files = sorted(p for p in workdir.rglob("*") if p.is_file())
    return {str(p.relative_to(workdir)): p.read_bytes() for p in files}
