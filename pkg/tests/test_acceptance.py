"""Acceptance criteria, one test each, every one printing a PASS/FAIL line.

Each criterion runs start to finish (setup included) inside its time limit.
Run standalone with ``python3 tests/test_acceptance.py`` or under pytest;
the lines are repeated in pytest's terminal summary.
"""

import hashlib
import math
import random
import sys
import time
from collections import Counter
from contextlib import contextmanager
from decimal import Decimal, getcontext
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import (  # noqa: E402
    ACCEPTANCE_LINES,
    CASE_QUESTION,
    METRIC_FIXTURE,
    build_toy,
    call_kinds,
    case_backend,
    iteration_mix_backend,
    iteration_mix_questions,
    never_sufficient_backend,
    run_pipeline,
    scripted,
)
from leiden_oracle import exhaustive_optimum, fixture_graphs, nx_graph, partition_modularity, to_cooccurrence  # noqa: E402

from hetrag.community import CoOccurrenceGraph, kernels, leaves, leiden_cluster  # noqa: E402
from hetrag.evaluation import QAPair, elo_from_winrate, exact_match, f1_prf, score_items, win_probability  # noqa: E402
from hetrag.graph import MENTIONED_IN, SUMMARY_FOR, validate  # noqa: E402
from hetrag.ingest import DEFAULT_TOKENIZER, Document, reassemble, split_into_chunks  # noqa: E402
from hetrag.loop import MacerConfig, run_macer  # noqa: E402
from hetrag.storage import load_index, save_index  # noqa: E402


@contextmanager
def criterion(name: str, limit: float | None):
    t0 = time.perf_counter()
    error = None
    try:
        yield
    except Exception as exc:
        error = exc
    elapsed = time.perf_counter() - t0
    too_slow = limit is not None and elapsed >= limit
    budget = f" (limit {limit:g} s)" if limit is not None else ""
    reason = f": {type(error).__name__}: {error}" if error else ": over time" if too_slow else ""
    line = f"{'FAIL' if error or too_slow else 'PASS'} {name} [{elapsed:.2f} s{budget}]{reason}"
    line = line.splitlines()[0]
    ACCEPTANCE_LINES.append(line)
    print("\n" + line, flush=True)
    if error:
        raise error
    assert not too_slow, f"{name} took {elapsed:.2f} s, limit {limit} s"


def test_elo_exactness():
    with criterion("ELO exactness", 1.0):
        assert elo_from_winrate(0.5) == 1600.0
        for k in range(1, 100):
            w = k / 100
            assert abs(win_probability(elo_from_winrate(w), 1600.0) - w) < 1e-12, w
        rng = random.Random(0)
        for _ in range(10_000):
            a, b = rng.uniform(0, 3200), rng.uniform(0, 3200)
            assert win_probability(a, b) + win_probability(b, a) == 1.0, (a, b)
        getcontext().prec = 50
        want = Decimal(1600) - 400 * (1 / Decimal("0.716") - 1).log10()
        assert abs(elo_from_winrate(0.716) - float(want)) < 1e-9


def test_metric_oracle():
    with criterion("Metric oracle", 1.0):
        for pred, golds, em, f1, p, r in METRIC_FIXTURE:
            assert exact_match(pred, golds) == em, pred
            got = f1_prf(pred, golds)
            assert all(abs(x - y) <= 1e-15 for x, y in zip(got, (f1, p, r))), (pred, got)
        assert exact_match("ryan adams is american.", ["america"]) == 0
        assert f1_prf("ryan adams is american.", ["america"]) == (0.0, 0.0, 0.0)
        _, summary = score_items(QAPair("q", tuple(g), p) for p, g, *_ in METRIC_FIXTURE)
        assert summary["em"] == pytest.approx(0.3, abs=1e-15)


def test_chunking_law():
    with criterion("Chunking law", 5.0):
        rng = random.Random(2024)
        vocab = ["alpha", "beta", ",", "gamma", ".", "delta!"]
        for _ in range(500):
            n = rng.randint(0, 3000)
            size = rng.randint(1, 1100)
            overlap = rng.randint(0, size - 1)
            doc = Document("d", " ".join(rng.choices(vocab, k=n)))
            total = len(DEFAULT_TOKENIZER.tokens(doc.body))
            chunks = split_into_chunks(doc, size, overlap)
            closed = 0 if total == 0 else 1 if total <= size else 1 + math.ceil((total - size) / (size - overlap))
            assert len(chunks) == closed, (total, size, overlap)
            assert reassemble(chunks, overlap) == DEFAULT_TOKENIZER.tokens(doc.body)


def test_leiden_optimality():
    with criterion("Leiden optimality at toy scale", 60.0):
        backends = ["python"] + (["cython"] if kernels.compiled_kernels is not None else [])
        for name, (n, edges) in fixture_graphs().items():
            opt = exhaustive_optimum(n, edges)
            for backend in backends:
                recs = leiden_cluster(to_cooccurrence(n, edges), max_cluster_size=n, backend=backend)
                labels = [0] * n
                for i, r in enumerate(x for x in recs if x.level == 0):
                    for m in r.members:
                        labels[int(m[1:])] = i
                q = partition_modularity(nx_graph(n, edges), labels)
                assert q >= opt - 1e-9, f"{name} on {backend}: {q} < {opt}"
        for seed in range(20):
            rng = random.Random(seed)
            names = [f"v{i:02d}" for i in range(50)]
            weights = {(names[a], names[b]): rng.randint(1, 9) for a in range(50) for b in range(a + 1, 50) if rng.random() < 0.12}
            leaf = leaves(leiden_cluster(CoOccurrenceGraph(names, weights), max_cluster_size=5, seed=seed))
            assert all(len(r.members) <= 5 for r in leaf), seed
            assert sorted(m for r in leaf for m in r.members) == names


def test_index_integrity(tmp_path):
    with criterion("Index integrity", 5.0):
        g, report = build_toy()
        assert validate(g, require_embeddings=True) == []
        assert len(g.chunks) == 3 and len(g.triplets) == 6
        for tid in g.triplets:
            assert sum(1 for e in g.edges if e.kind == MENTIONED_IN and e.source == tid) == 1, tid
        for cid, c in g.communities.items():
            assert sum(1 for e in g.edges if e.kind == SUMMARY_FOR and e.source == cid) == len(c.members), cid
        save_index(g, tmp_path / "idx", build=report.to_dict())
        back = load_index(tmp_path / "idx")
        assert back == g
        assert back.embeddings.keys() == g.embeddings.keys()
        assert all(back.embeddings[k].tobytes() == v.tobytes() for k, v in g.embeddings.items())


def test_loop_horizon():
    g, _ = build_toy()
    with criterion("Loop horizon", 1.0):
        b = never_sufficient_backend()
        _, traj = run_macer("Who knows?", g, MacerConfig(horizon=3), b)
        kinds = Counter(call_kinds(b))
        assert len(traj.steps) == 3 and kinds["judge"] == 3
        assert kinds["respond"] + kinds["synthesize"] == 4 and kinds["synthesize"] == 1
        b = scripted(regex=True, pairs=[("^You judge", "YES"), ("^Context information", "Paris")])
        _, traj = run_macer("Capital of France?", g, MacerConfig(horizon=3), b)
        kinds = Counter(call_kinds(b))
        assert kinds["respond"] == 1 and kinds["evolve"] == 0 and kinds["refine"] == 0
        assert len(traj.steps) == 1


def digest(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(path.iterdir()):
        h.update(f.name.encode() + b"\0" + f.read_bytes())
    return h.hexdigest()


def test_case_study_replay(tmp_path):
    with criterion("Case-study replay", 2.0):
        g, report = build_toy()
        save_index(g, tmp_path / "idx", build=report.to_dict())
        before = digest(tmp_path / "idx")
        stored = load_index(tmp_path / "idx")
        answer, traj = run_macer(CASE_QUESTION, stored, MacerConfig(horizon=3), case_backend())
        assert len(traj.steps) == 3
        assert "american" in answer.lower()
        assert [s.sub_query for s in traj.steps][2] == "What is Ryan Adams's nationality?"
        assert any(
            (t.subject, t.predicate, t.object) == ("Ryan Adams", "nationality", "American")
            for t in traj.steps[0].subgraph.inferred
        )
        assert digest(tmp_path / "idx") == before
        save_index(stored, tmp_path / "again", build=report.to_dict())
        assert digest(tmp_path / "again") == before


def test_iteration_mix():
    with criterion("Iteration-mix sanity", 30.0):
        g, _ = build_toy()
        totals = []
        for _ in range(2):
            b = iteration_mix_backend()
            rounds = Counter()
            for question, _want in iteration_mix_questions():
                _, traj = run_macer(question, g, MacerConfig(horizon=3), b)
                assert traj.stop_reason == "sufficient", question
                rounds[len(traj.steps)] += 1
            totals.append(rounds)
        assert totals[0] == totals[1] == {1: 20, 2: 32, 3: 48}


def test_determinism(tmp_path):
    with criterion("Determinism", None):
        first = run_pipeline(tmp_path / "one")
        second = run_pipeline(tmp_path / "two")
        assert {"audit.jsonl", "pred.jsonl", "metrics.jsonl", "index/manifest"} <= first.keys()
        assert first == second


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
