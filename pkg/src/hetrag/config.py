"""Engine configuration: one YAML file, secrets from the environment."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .indexer import IndexConfig
from .llm import DEFAULT_DIM, Backend, OpenAICompatibleBackend, ScriptedBackend, load_script
from .loop import MacerConfig

BACKEND_KINDS = ("scripted", "openai")


@dataclass(frozen=True)
class EngineConfig:
    backend: str = "scripted"
    script: str | None = None
    judge_script: str | None = None
    base_url: str | None = None
    chat_model: str | None = None
    embedding_model: str | None = None
    judge_model: str | None = None
    api_key_env: str = "HETRAG_API_KEY"
    dim: int = DEFAULT_DIM
    retries: int = 2
    timeout: float = 120.0
    max_in_flight: int = 8
    chunk_size: int = 1024
    overlap: int = 20
    max_triplets: int = 2
    max_cluster_size: int = 5
    resolution: float = 1.0
    restarts: int = 8
    top_k: int = 5
    horizon: int = 3
    evidence_budget: int = 4096
    max_keywords: int = 5
    seed: int = 0
    workers: int | None = None
    prompt_dir: str | None = None
    index_path: str | None = None

    def __post_init__(self) -> None:
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(f"backend: expected one of {BACKEND_KINDS}, got {self.backend!r}")
        for name in ("dim", "chunk_size", "max_triplets", "max_cluster_size", "restarts", "top_k",
                     "horizon", "evidence_budget", "max_keywords", "max_in_flight"):
            _check_int(name, getattr(self, name), 1)
        _check_int("retries", self.retries, 0)
        _check_int("seed", self.seed, 0)
        if self.workers is not None:
            _check_int("workers", self.workers, 1)
        _check_int("overlap", self.overlap, 0)
        if self.overlap >= self.chunk_size:
            raise ConfigError(f"overlap: must be smaller than chunk_size ({self.chunk_size}), got {self.overlap}")
        for name in ("resolution", "timeout"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"{name}: must be a positive number, got {value!r}")
        if self.backend == "openai":
            for name in ("base_url", "chat_model", "embedding_model"):
                if not getattr(self, name):
                    raise ConfigError(f"{name}: required for the openai backend")

    @property
    def worker_count(self) -> int:
        return self.workers or os.cpu_count() or 1

    def index_config(self) -> IndexConfig:
        return IndexConfig(
            chunk_size=self.chunk_size,
            overlap=self.overlap,
            max_triplets=self.max_triplets,
            max_cluster_size=self.max_cluster_size,
            resolution=self.resolution,
            seed=self.seed,
            restarts=self.restarts,
            workers=self.worker_count,
            prompt_dir=self.prompt_dir,
        )

    def macer_config(self, **overrides) -> MacerConfig:
        base = MacerConfig(
            horizon=self.horizon,
            top_k=self.top_k,
            evidence_budget=self.evidence_budget,
            max_keywords=self.max_keywords,
            prompt_dir=self.prompt_dir,
        )
        return replace(base, **overrides)

    def _openai(self, chat_model: str) -> OpenAICompatibleBackend:
        return OpenAICompatibleBackend(
            base_url=self.base_url,
            chat_model=chat_model,
            embedding_model=self.embedding_model,
            api_key=os.environ.get(self.api_key_env),
            dim=self.dim,
            retries=self.retries,
            timeout=self.timeout,
            max_in_flight=self.max_in_flight,
        )

    def make_backend(self) -> Backend:
        if self.backend == "openai":
            return self._openai(self.chat_model)
        table = load_script(self.script) if self.script else None
        return ScriptedBackend(table, dim=self.dim, seed=self.seed)

    def make_judge_backend(self) -> Backend:
        if self.backend == "openai":
            return self._openai(self.judge_model or self.chat_model)
        path = self.judge_script or self.script
        return ScriptedBackend(load_script(path) if path else None, dim=self.dim, seed=self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_int(name: str, value, lo: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ConfigError(f"{name}: must be an integer >= {lo}, got {value!r}")


_PATH_FIELDS = ("script", "judge_script", "prompt_dir", "index_path")


def config_from_mapping(data: dict, base_dir: str | Path | None = None) -> EngineConfig:
    known = {f.name for f in fields(EngineConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown configuration key")
    values = _resolve_paths(data, base_dir) if base_dir is not None else dict(data)
    try:
        return EngineConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"config: {exc}") from exc


def _resolve_paths(data: dict, base_dir: str | Path) -> dict:
    """Relative paths in a config file are taken relative to that file."""
    values = dict(data)
    for name in _PATH_FIELDS:
        if isinstance(values.get(name), str) and values[name]:
            p = Path(values[name]).expanduser()
            values[name] = str(p if p.is_absolute() else Path(base_dir) / p)
    return values


def load_config(path: str | Path | None = None, **overrides) -> EngineConfig:
    """Read a YAML config (or defaults when ``path`` is None) and apply
    non-None keyword overrides, which come from command-line flags."""
    data: dict = {}
    base_dir = None
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: invalid YAML in {path}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a mapping")
        data = raw
        base_dir = path.parent
    resolved = _resolve_paths(data, base_dir) if base_dir is not None else dict(data)
    resolved.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(resolved)
