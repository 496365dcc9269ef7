import pytest

from hetrag.prompts import TEMPLATE_NAMES, PromptSet, parse_template

EXPECTED = {
    "extract_triplets": {"max_knowledge_triplets", "text"},
    "community_summary": {"community_info"},
    "keyword_expansion": {"max_keywords", "query_str"},
    "query_evolution": {"query_str", "context_str", "prev_reasoning"},
    "subgraph_refinement": {"query_str", "subgraph_triples"},
    "answer_synthesis": {"context_str", "query_str"},
    "sufficiency_judge": {"query_str", "context_str", "answer"},
    "answer_evaluator": {"query", "answer1", "answer2"},
}


@pytest.mark.parametrize("name", TEMPLATE_NAMES)
def test_packaged_placeholders(name):
    t = PromptSet()[name]
    assert t.placeholders == EXPECTED[name]
    rendered = "\n".join(m.text for m in t.render(**{k: f"<{k}>" for k in EXPECTED[name]}))
    for k in EXPECTED[name]:
        assert f"<{k}>" in rendered and "{" + k + "}" not in rendered


def test_sections_and_single_pass():
    t = parse_template("t", "<<system>>\nsys {a}\n<<user>>\nuser {b}\n")
    msgs = t.render(a="{b}", b="B")
    assert [(m.role, m.text) for m in msgs] == [("system", "sys {b}"), ("user", "user B")]
    with pytest.raises(KeyError):
        t.render(a="x")


def test_override_directory(tmp_path):
    (tmp_path / "answer_synthesis.txt").write_text("Only {query_str}", encoding="utf-8")
    ps = PromptSet(tmp_path)
    assert [m.text for m in ps["answer_synthesis"].render(query_str="hi")] == ["Only hi"]
    assert ps["sufficiency_judge"].placeholders == EXPECTED["sufficiency_judge"]
