import pytest

from hetrag.config import EngineConfig, config_from_mapping, load_config
from hetrag.errors import ConfigError
from hetrag.llm import OpenAICompatibleBackend, ScriptedBackend


def test_defaults():
    cfg = load_config()
    assert cfg.backend == "scripted" and cfg.top_k == 5 and cfg.horizon == 3
    assert cfg.chunk_size == 1024 and cfg.overlap == 20 and cfg.max_cluster_size == 5
    assert cfg.worker_count >= 1
    assert isinstance(cfg.make_backend(), ScriptedBackend)


@pytest.mark.parametrize(
    "key,value",
    [("top_k", 0), ("horizon", 0), ("chunk_size", -1), ("overlap", -1), ("dim", 1.5), ("seed", -3),
     ("workers", 0), ("resolution", 0), ("timeout", "slow"), ("max_cluster_size", True), ("backend", "grpc")],
)
def test_out_of_range_names_field(key, value):
    with pytest.raises(ConfigError) as info:
        config_from_mapping({key: value})
    assert str(info.value).startswith(f"{key}:")


def test_overlap_must_be_below_chunk_size():
    with pytest.raises(ConfigError, match="^overlap:"):
        EngineConfig(chunk_size=64, overlap=64)


def test_unknown_key():
    with pytest.raises(ConfigError, match="^colour: unknown"):
        config_from_mapping({"colour": "blue"})


def test_openai_requires_endpoints():
    with pytest.raises(ConfigError, match="^base_url:"):
        EngineConfig(backend="openai", chat_model="m", embedding_model="e")


def test_openai_key_from_environment(monkeypatch):
    monkeypatch.setenv("MY_KEY", "sk-test")
    cfg = EngineConfig(backend="openai", base_url="http://x/v1", chat_model="m", embedding_model="e", api_key_env="MY_KEY")
    b = cfg.make_backend()
    assert isinstance(b, OpenAICompatibleBackend)
    assert b.api_key == "sk-test"
    assert cfg.make_judge_backend().chat_model == "m"


def test_yaml_file_and_overrides(tmp_path):
    (tmp_path / "sub").mkdir()
    path = tmp_path / "sub" / "engine.yaml"
    path.write_text("top_k: 7\nscript: case.script\nindex_path: /abs/index\nhorizon: 2\n", encoding="utf-8")
    cfg = load_config(path, horizon=4, seed=None)
    assert cfg.top_k == 7 and cfg.horizon == 4 and cfg.seed == 0
    assert cfg.script == str(tmp_path / "sub" / "case.script")
    assert cfg.index_path == "/abs/index"
    # flag paths are taken as given, not relative to the config file
    assert load_config(path, script="other.script").script == "other.script"


def test_bad_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- just\n- a list\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mapping"):
        load_config(p)
    p.write_text("top_k: [\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    p.write_text("", encoding="utf-8")
    assert load_config(p) == EngineConfig()


def test_derived_configs():
    cfg = EngineConfig(top_k=3, horizon=2, evidence_budget=100, workers=2, seed=9)
    m = cfg.macer_config(always_synthesize=True)
    assert (m.top_k, m.horizon, m.evidence_budget, m.always_synthesize) == (3, 2, 100, True)
    ic = cfg.index_config()
    assert ic.workers == 2 and ic.seed == 9
    assert cfg.to_dict()["top_k"] == 3
