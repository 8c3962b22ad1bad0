"""Run configuration: TOML file + defaults, unknown keys rejected."""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from scpilot.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EVALUATION_MODES = ("programmatic_metric", "vision_judge", "aggregation", "none")


@dataclass(frozen=True)
class LLMConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4"
    vision_model: str = "gpt-4-vision-preview"
    temperature: float = 0.0
    api_key_env: str = "SCPILOT_API_KEY"  # key read from the environment, never from file
    scripted_path: str = ""  # non-empty selects the scripted backend

    def api_key(self) -> str:
        return os.environ.get(self.api_key_env, "")


@dataclass(frozen=True)
class PolicyOverride:
    max_trials: int | None = None
    max_fix_attempts: int | None = None
    evaluation_mode: str | None = None

    def __post_init__(self):
        if self.evaluation_mode is not None and self.evaluation_mode not in EVALUATION_MODES:
            raise ConfigError(f"unknown evaluation_mode {self.evaluation_mode!r}")
        if self.max_trials is not None and self.max_trials < 1:
            raise ConfigError("max_trials must be >= 1")
        if self.max_fix_attempts is not None and self.max_fix_attempts < 0:
            raise ConfigError("max_fix_attempts must be >= 0")


@dataclass(frozen=True)
class SandboxConfig:
    backend: str = "inprocess"  # inprocess (stub shim) | subprocess (worker binary)
    worker_cmd: tuple[str, ...] = ("scworker",)
    cell_timeout: float = 600.0
    startup_timeout: float = 30.0
    timeout_grace: float = 2.0

    def __post_init__(self):
        if self.backend not in ("inprocess", "subprocess"):
            raise ConfigError(f"unknown sandbox backend {self.backend!r}")


@dataclass(frozen=True)
class MetricsConfig:
    w_batch: float = 0.4
    w_bio: float = 0.6
    knn_k: int = 15
    cor_dist_seed: int = 0
    baseline_components: int = 20


@dataclass(frozen=True)
class PathsConfig:
    output_dir: str = "runs"
    tools_dir: str = ""  # extra user tool files
    prompts_dir: str = ""  # overrides the packaged templates


@dataclass(frozen=True)
class Config:
    llm: LLMConfig = field(default_factory=LLMConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    policies: dict = field(default_factory=dict)  # kind -> PolicyOverride
    max_parse_retries: int = 2
    doc_budget: int = 8192
    aggregation_judge: str = "plurality"  # plurality | llm

    def to_json(self) -> dict:
        out = asdict(self)
        out["sandbox"]["worker_cmd"] = list(self.sandbox.worker_cmd)
        out["policies"] = {k: asdict(v) for k, v in self.policies.items()}
        return out


_SECTION_TYPES = {
    "llm": LLMConfig,
    "sandbox": SandboxConfig,
    "metrics": MetricsConfig,
    "paths": PathsConfig,
}


def _build_section(cls, data: dict, section: str):
    allowed = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {sorted(unknown)}")
    if section == "sandbox" and "worker_cmd" in data:
        data = dict(data, worker_cmd=tuple(data["worker_cmd"]))
    return cls(**data)


def config_from_dict(raw: dict) -> Config:
    known_top = {"llm", "sandbox", "metrics", "paths", "policies", "max_parse_retries", "doc_budget", "aggregation_judge"}
    unknown = set(raw) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"[{section}] must be a table")
            kwargs[section] = _build_section(cls, raw[section], section)
    if "policies" in raw:
        policies = {}
        for kind, data in raw["policies"].items():
            if not isinstance(data, dict):
                raise ConfigError(f"[policies.{kind}] must be a table")
            policies[kind] = _build_section(PolicyOverride, data, f"policies.{kind}")
        kwargs["policies"] = policies
    for scalar in ("max_parse_retries", "doc_budget", "aggregation_judge"):
        if scalar in raw:
            kwargs[scalar] = raw[scalar]
    cfg = Config(**kwargs)
    if cfg.aggregation_judge not in ("plurality", "llm"):
        raise ConfigError(f"unknown aggregation_judge {cfg.aggregation_judge!r}")
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def with_scripted_backend(cfg: Config, scripted_path: str) -> Config:
    return replace(cfg, llm=replace(cfg.llm, scripted_path=scripted_path))
