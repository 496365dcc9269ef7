import hashlib
from collections import Counter
from pathlib import Path

import pytest

from hetrag.errors import TransportError
from hetrag.loop import (
    MacerConfig,
    Trajectory,
    TrajectoryStep,
    evolve_query,
    judge_sufficiency,
    parse_verdict,
    respond,
    run_macer,
    synthesize_final,
)
from hetrag.retrieval import InferredTriple, make_subgraph
from hetrag.storage import save_index

from conftest import (
    CASE_QUESTION,
    call_kinds,
    case_backend,
    iteration_mix_backend,
    iteration_mix_questions,
    never_sufficient_backend,
    scripted,
)


def empty_evidence(g):
    return make_subgraph(g, [], ())


def test_never_sufficient_runs_to_horizon(toy):
    g, _ = toy
    b = never_sufficient_backend()
    answer, traj = run_macer("Who knows?", g, MacerConfig(horizon=3), b)
    kinds = Counter(call_kinds(b))
    assert kinds["respond"] == 3 and kinds["synthesize"] == 1
    assert kinds["evolve"] == 3 and kinds["judge"] == 3
    assert len(traj.steps) == 3 and traj.stop_reason == "horizon"
    assert [s.sub_query for s in traj.steps] == [f"Follow-up step {i}" for i in (1, 2, 3)]
    assert [s.answer for s in traj.steps] == ["round1", "round2", "round3"]
    assert answer == "round1"  # synthesis prompt has no history section, so it matches the plain respond rule


def test_immediately_sufficient_exits_after_one_round(toy):
    g, _ = toy
    b = scripted(regex=True, pairs=[("^You judge", "YES"), ("^Context information", "Paris")])
    answer, traj = run_macer("Capital of France?", g, MacerConfig(), b)
    assert call_kinds(b) == ["respond", "judge"]
    assert answer == "Paris" and traj.final_answer == "Paris"
    assert len(traj.steps) == 1 and traj.steps[0].reward == 1
    assert traj.steps[0].sub_query == "Capital of France?"
    assert traj.stop_reason == "sufficient"


def test_always_synthesize_adds_one_call(toy):
    g, _ = toy
    b = scripted(regex=True, pairs=[("^You judge", "YES"), ("Reasoning trajectory:", "Paris, France"), ("^Context information", "Paris")])
    answer, _ = run_macer("Capital of France?", g, MacerConfig(always_synthesize=True), b)
    assert call_kinds(b) == ["respond", "judge", "synthesize"]
    assert answer == "Paris, France"


@pytest.mark.parametrize("horizon", [1, 2, 3, 5])
def test_termination_bound(toy, horizon):
    g, _ = toy
    b = never_sufficient_backend()
    _, traj = run_macer("q", g, MacerConfig(horizon=horizon), b)
    kinds = Counter(call_kinds(b))
    assert kinds["respond"] <= horizon and kinds["respond"] + kinds["synthesize"] <= horizon + 1
    assert len(traj.steps) <= horizon


def test_stop_from_reflector(toy):
    g, _ = toy
    b = scripted(regex=True, pairs=[("^The original question", "None")], default="NO")
    answer, traj = run_macer("q", g, MacerConfig(), b)
    assert traj.stop_reason == "stop" and len(traj.steps) == 1
    assert traj.steps[0].sub_query == "q" and traj.steps[0].reward == 0
    assert Counter(call_kinds(b))["synthesize"] == 1


def test_repeated_subquery_stops(toy):
    g, _ = toy
    b = scripted(regex=True, pairs=[("^The original question", "Same thing, again?")], default="NO")
    _, traj = run_macer("q", g, MacerConfig(horizon=5), b)
    assert traj.stop_reason == "stop"
    assert [s.sub_query for s in traj.steps] == ["Same thing, again?", "Same thing, again?"]
    assert Counter(call_kinds(b))["evolve"] == 2


def test_subquery_equal_to_original_stops(toy):
    g, _ = toy
    b = scripted(regex=True, pairs=[("^The original question", "what is X")], default="NO")
    _, traj = run_macer("What is X?", g, MacerConfig(), b)
    assert traj.stop_reason == "stop" and len(traj.steps) == 1


def test_unknown_short_circuits_judge(toy):
    g, _ = toy
    b = scripted(default="YES")
    ev = empty_evidence(g)
    assert judge_sufficiency("q", ev, "unknown.", b) == 0
    assert b.calls == []
    assert judge_sufficiency("q", ev, "Paris", b) == 1


@pytest.mark.parametrize(
    "reply,expected",
    [
        ("YES", 1),
        ("yes.", 1),
        ("**Yes**", 1),
        ("Verdict: YES", 1),
        ("After review, verdict: yes", 1),
        ("NO", 0),
        ("The evidence looks fine to me.", 0),
        ("yesterday", 0),
        ("", 0),
    ],
)
def test_parse_verdict(reply, expected):
    assert parse_verdict(reply) == expected


def test_respond_renders_history_verbatim(toy):
    g, _ = toy
    b = scripted()
    ev = empty_evidence(g)
    h = Trajectory("q", [TrajectoryStep("Who founded X?", "Alice B.", 0, ev), TrajectoryStep("When?", "In 1990", 0, ev)])
    assert respond("q", ev, h, b) == "Unknown"
    prompt = b.calls[0].prompt
    assert "Previous reasoning:\n  - Who founded X?\n  - Alice B.\n  - When?\n  - In 1990" in prompt
    respond("q", ev, Trajectory("q"), b)
    assert "Previous reasoning" not in b.calls[1].prompt


def test_evolve_query_parsing(toy):
    g, _ = toy
    ev = empty_evidence(g)
    for reply, want in [
        ("Next question: Who was the winner of the 2020 Australian Open?", "Who was the winner of the 2020 Australian Open?"),
        ('  "What is Ryan Adams\'s nationality?"\nextra', "What is Ryan Adams's nationality?"),
        ("None", None),
        (" none ", None),
        ("", None),
    ]:
        assert evolve_query("q", ev, Trajectory("q"), scripted(default=reply)) == want


def test_synthesize_requires_steps(toy):
    with pytest.raises(ValueError):
        synthesize_final("q", Trajectory("q"), scripted())


class FlakyBackend:
    """Delegates to a scripted backend and fails the n-th chat call."""

    def __init__(self, inner, fail_at):
        self.inner, self.fail_at, self.n = inner, fail_at, 0
        self.dim = inner.dim

    def complete(self, request):
        self.n += 1
        if self.n == self.fail_at:
            raise TransportError("connection reset")
        return self.inner.complete(request)

    def embed(self, texts):
        return self.inner.embed(texts)


def test_transport_error_carries_partial_trajectory(toy):
    g, _ = toy
    # the sixth chat call lands inside the second iteration
    b = FlakyBackend(never_sufficient_backend(), fail_at=6)
    with pytest.raises(TransportError) as info:
        run_macer("q", g, MacerConfig(), b)
    traj = info.value.trajectory
    assert traj.original_query == "q" and traj.final_answer is None
    assert 1 <= len(traj.steps) <= 2


def index_digest(path: Path) -> str:
    h = hashlib.sha256()
    for f in sorted(path.iterdir()):
        h.update(f.name.encode() + b"\0" + f.read_bytes())
    return h.hexdigest()


def test_case_study_replay(toy, tmp_path):
    g, _ = toy
    save_index(g, tmp_path / "before")
    before = index_digest(tmp_path / "before")
    b = case_backend()
    answer, traj = run_macer(CASE_QUESTION, g, MacerConfig(horizon=3), b)
    assert "american" in answer.lower()
    assert answer == "ryan adams is american."
    assert [s.sub_query for s in traj.steps] == [
        "Who is the performer of the song When The Stars Go Blue?",
        "What is Ryan Adams known for besides the song When The Stars Go Blue?",
        "What is Ryan Adams's nationality?",
    ]
    assert traj.steps[0].answer == "Ryan Adams."
    assert traj.steps[2].answer == "Ryan Adams is an American singer and musician."
    nationality = InferredTriple("Ryan Adams", "nationality", "American")
    assert nationality in traj.steps[0].subgraph.inferred
    assert "Ryan Adams -> nationality -> American [inferred]" in traj.steps[0].subgraph.rendered_evidence
    assert all(r == 0 for r in (s.reward for s in traj.steps))
    # inferred triples never reach the stored graph
    assert not any(t.predicate == "nationality" for t in g.triplets.values())
    save_index(g, tmp_path / "after")
    assert index_digest(tmp_path / "after") == before


def test_case_study_is_deterministic(toy):
    g, _ = toy
    runs = [run_macer(CASE_QUESTION, g, MacerConfig(), case_backend())[1].audit_records() for _ in range(2)]
    assert runs[0] == runs[1]


def test_audit_records_shape(toy):
    g, _ = toy
    _, traj = run_macer(CASE_QUESTION, g, MacerConfig(), case_backend())
    recs = traj.audit_records()
    assert [r["type"] for r in recs] == ["step"] * 3 + ["final"]
    assert ["Ryan Adams", "nationality", "American"] in recs[0]["inferred"]
    assert recs[-1] == {
        "type": "final",
        "query": CASE_QUESTION,
        "final_answer": "ryan adams is american.",
        "stop_reason": "horizon",
        "steps": 3,
    }


def run_mix(g):
    b = iteration_mix_backend()
    out = Counter()
    for question, want in iteration_mix_questions():
        _, traj = run_macer(question, g, MacerConfig(horizon=3), b)
        assert traj.stop_reason == "sufficient"
        assert len(traj.steps) == want
        out[len(traj.steps)] += 1
    return out


def test_iteration_mix(toy):
    g, _ = toy
    assert run_mix(g) == {1: 20, 2: 32, 3: 48}


def test_config_validation():
    with pytest.raises(ValueError):
        MacerConfig(horizon=0)
    with pytest.raises(ValueError):
        MacerConfig(top_k=0)
