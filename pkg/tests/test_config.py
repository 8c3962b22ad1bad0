from __future__ import annotations

import pytest

from scpilot.config import Config, load_config
from scpilot.errors import ConfigError


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg.metrics.w_batch == 0.4
    assert cfg.metrics.w_bio == 0.6
    assert cfg.sandbox.backend == "inprocess"
    assert cfg.llm.temperature == 0.0
    assert cfg.max_parse_retries == 2


def test_load_toml_overrides(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        """
max_parse_retries = 3

[llm]
model = "my-model"
temperature = 0.2

[metrics]
knn_k = 25

[policies.trajectory_inference]
max_trials = 5

[policies.batch_correction]
evaluation_mode = "vision_judge"
""",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.llm.model == "my-model"
    assert cfg.llm.temperature == 0.2
    assert cfg.metrics.knn_k == 25
    assert cfg.max_parse_retries == 3
    assert cfg.policies["trajectory_inference"].max_trials == 5
    assert cfg.policies["batch_correction"].evaluation_mode == "vision_judge"


def test_unknown_top_level_key_rejected(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("mystery = 1\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="mystery"):
        load_config(path)


def test_unknown_section_key_rejected(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("[llm]\napi_key = \"never-in-file\"\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="api_key"):
        load_config(path)


def test_bad_evaluation_mode_rejected(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text("[policies.preprocess]\nevaluation_mode = \"guessing\"\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_api_key_comes_from_environment(monkeypatch):
    cfg = Config()
    monkeypatch.setenv(cfg.llm.api_key_env, "sekrit")
    assert cfg.llm.api_key() == "sekrit"


def test_config_roundtrips_through_json():
    from scpilot.config import config_from_dict

    cfg = load_config(None)
    again = config_from_dict(cfg.to_json())
    assert again == cfg
