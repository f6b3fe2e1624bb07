"""Tests for pathrank.config helpers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import SimpleNamespace

import pytest
import typer

import pathrank.config.app
import pathrank.logging
from pathrank.training.curriculum import StageSpec


def _build(config: dict[str, object], **kwargs: object) -> pathrank.config.app.RunConfig:
    return pathrank.config.app.build_run_config(
        config,
        Path("test.yaml"),
        env={},
        **kwargs,  # type: ignore[arg-type]
    )


def test_load_config_missing_file_returns_empty(tmp_path: Path) -> None:
    """Missing config should return empty config without error."""
    missing = tmp_path / "missing.yaml"
    data, malformed = pathrank.config.app.load_config(str(missing))

    assert data == {}
    assert malformed is False


def test_load_config_directory_path_is_malformed(tmp_path: Path) -> None:
    """Directory path should be treated as malformed config."""
    config_dir = tmp_path / "cfgdir"
    config_dir.mkdir()
    data, malformed = pathrank.config.app.load_config(str(config_dir))

    assert data == {}
    assert malformed is True


def test_load_config_non_dict_is_malformed(tmp_path: Path) -> None:
    """Non-object YAML should be marked malformed."""
    config_path = tmp_path / "config.yaml"
    config_path.write_text("- 1\n- 2\n- 3\n", encoding="utf-8")

    data, malformed = pathrank.config.app.load_config(str(config_path))

    assert data == {}
    assert malformed is True


def test_load_config_empty_file_is_empty(tmp_path: Path) -> None:
    """An empty file is a valid empty config."""
    config_path = tmp_path / "config.yaml"
    config_path.write_text("", encoding="utf-8")

    assert pathrank.config.app.load_config(str(config_path)) == ({}, False)


def test_defaults_without_any_config() -> None:
    """An empty config yields the toy preset and default stage settings."""
    config = _build({})

    assert config.seed == 0
    assert config.preset == "toy"
    assert config.jobs == 1
    assert config.stages.spec("1").stage == "1"
    assert config.stages.spec("ft").batch_size == 4
    assert config.feature_dim == 64
    assert config.k_max == 8
    assert config.n_max == 7
    assert config.workspace.root == Path("runs/default")


def test_sections_populate_run_config() -> None:
    """Every section is parsed on top of its defaults."""
    config = _build(
        {
            "seed": 7,
            "workdir": "runs/x",
            "environment": {"n_train": 3, "area_m": 12},
            "episodes": {"hop_min": 1, "hop_max": 2},
            "model": {"hidden": 32, "d_v": 16, "dropout": 0.1},
            "stages": {"stage1": {"lr": 0.01}, "finetune": {"epochs": 9}},
            "mining": {"beam_width": 5},
            "evaluation": {"grid_step": 0.1},
            "analysis": {"top_k": 2},
        },
    )

    assert config.seed == 7
    assert config.environment.n_train == 3
    assert config.environment.area_m == 12.0
    assert config.episodes.hop_range == (1, 2)
    assert config.stages.stage1.lr == 0.01
    assert config.stages.stage1.stage == "1"
    assert config.stages.finetune.epochs == 9
    assert config.stages.finetune.stage == "ft"
    assert config.mining.beam_width == 5
    assert config.mining.policy(second=True).seed == config.mining.second_follower_seed
    assert config.evaluation.grid_step == 0.1
    assert config.analysis.top_k == 2
    assert config.feature_dim == 16

    model = config.model_config(vocab_size=50)
    assert model.hidden == 32
    assert model.n_heads == 4
    assert model.dropout == 0.1
    assert model.vocab_size == 50


def test_preset_values_sit_below_file_values() -> None:
    """The paper-scale preset fills stages the file leaves unset."""
    config = _build({"preset": "paper-scale", "stages": {"stage1": {"epochs": 3}}})

    assert config.stages.stage1.epochs == 3
    assert config.stages.stage1.lr == 4e-5
    assert config.stages.finetune.batch_size == 64
    assert config.feature_dim == 2048


def test_overrides_and_environment_seed_win() -> None:
    """`--set` beats the file, and the seed variable beats both."""
    base = {"seed": 1, "stages": {"stage2": {"epochs": 4}}}

    overridden = _build(base, overrides=["seed=9", "stages.stage2.epochs=1"])
    from_env = pathrank.config.app.build_run_config(
        base,
        Path("test.yaml"),
        ["seed=9"],
        env={"PATHRANK_SEED": "12"},
    )

    assert overridden.seed == 9
    assert overridden.stages.stage2.epochs == 1
    assert from_env.seed == 12


def test_invalid_seed_variable_is_rejected() -> None:
    """A non-numeric seed variable is a parameter error."""
    with pytest.raises(typer.BadParameter, match="PATHRANK_SEED"):
        pathrank.config.app.build_run_config({}, Path("x"), env={"PATHRANK_SEED": "abc"})


@pytest.mark.parametrize(
    ("config", "message"),
    [
        ({"bogus": 1}, "unknown keys bogus"),
        ({"preset": "huge"}, "unknown preset 'huge'"),
        ({"seed": -1}, "seed cannot be negative"),
        ({"seed": "one"}, "invalid value for 'seed'"),
        ({"jobs": 0}, "jobs and log_every must be positive"),
        ({"environment": {"n_train": 2.5}}, "invalid section 'environment'"),
        ({"environment": {"colour": 1}}, "invalid section 'environment'"),
        ({"environment": {"n_nodes": 1}}, "at least 2 nodes"),
        ({"episodes": []}, "invalid section 'episodes'"),
        ({"stages": {"stage4": {}}}, "invalid section 'stages'"),
        ({"stages": {"stage2": {"stage": "3"}}}, "invalid section 'stages'"),
        ({"stages": {"stage2": {"batch_size": 0}}}, "batch size must be at least 1"),
        ({"model": {"hidden": True}}, "invalid section 'model'"),
        ({"evaluation": {"grid_step": 0}}, "grid_step"),
    ],
)
def test_malformed_configs_are_rejected(config: dict[str, object], message: str) -> None:
    """Unknown keys, wrong types and out-of-range values fail with a clear message."""
    with pytest.raises(typer.BadParameter, match=message):
        _build(config)


def test_config_hash_covers_named_sections_only() -> None:
    """Hashes change with the hashed sections and ignore the rest."""
    sections = ("seed", "environment")
    base = _build({})
    other_mining = _build({"mining": {"beam_width": 3}})
    other_env = _build({"environment": {"n_nodes": 12}})

    digest = pathrank.config.app.config_hash(base, sections)

    assert len(digest) == 64
    assert digest == pathrank.config.app.config_hash(_build({}), sections)
    assert digest == pathrank.config.app.config_hash(other_mining, sections)
    assert digest != pathrank.config.app.config_hash(other_env, sections)


def test_load_cli_config_reads_file_and_set_arguments(
    tmp_path: Path,
    monkeypatch: pytest.MonkeyPatch,
) -> None:
    """load_cli_config should combine the config file with --set overrides."""
    config_path = tmp_path / ".pathrank.yaml"
    config_path.write_text(
        "seed: 4\ncolor_flag: true\nmining:\n  beam_width: 6\n",
        encoding="utf-8",
    )
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PATHRANK_SEED", raising=False)

    loaded = pathrank.config.app.load_cli_config(
        ["pathrank", "mine", "--set", "mining.beam_width=9", "--set=jobs=2"],
    )

    assert loaded.seed == 4
    assert loaded.color_flag is True
    assert loaded.mining.beam_width == 9
    assert loaded.jobs == 2
    assert loaded.config_path.endswith(".pathrank.yaml")


def test_load_cli_config_malformed_yaml(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Malformed YAML config should raise a BadParameter error."""
    config_path = tmp_path / ".pathrank.yaml"
    config_path.write_text("stages: [1, 2\n", encoding="utf-8")

    monkeypatch.chdir(config_path.parent)
    with pytest.raises(typer.BadParameter, match="Malformed config"):
        pathrank.config.app.load_cli_config(["pathrank"])


def test_parse_config_argument_forms() -> None:
    """--config accepts both spellings and falls back to the default name."""
    parse = pathrank.config.app.parse_config_argument

    assert parse(["pathrank", "train", "--config", "custom.yaml"]) == "custom.yaml"
    assert parse(["pathrank", "train", "--config=inline.yaml"]) == "inline.yaml"
    assert parse(["pathrank", "train"]) == ".pathrank.yaml"


def test_parse_set_arguments_keeps_order() -> None:
    """Every --set value is collected in command-line order."""
    argv = ["pathrank", "--set", "seed=1", "mine", "--set=jobs=2", "--set"]

    assert pathrank.config.app.parse_set_arguments(argv) == ["seed=1", "jobs=2"]


def test_require_app_config() -> None:
    """The root context must hold a run config."""
    config = _build({})
    good = SimpleNamespace(find_root=lambda: SimpleNamespace(obj=config))
    bad = SimpleNamespace(find_root=lambda: SimpleNamespace(obj=None))

    assert pathrank.config.app.require_app_config(good) is config  # type: ignore[arg-type]
    with pytest.raises(typer.BadParameter, match="not available"):
        pathrank.config.app.require_app_config(bad)  # type: ignore[arg-type]


def test_configure_logging_toggles_handler() -> None:
    """Verbose mode installs one stdout handler; quiet mode removes it."""
    pathrank.logging.configure_logging(verbose=False)
    pathrank.logging.configure_logging(verbose=True)
    pathrank.logging.configure_logging(verbose=True)

    assert pathrank.logging.logger.level == logging.INFO
    assert len(pathrank.logging.logger.handlers) == 1

    pathrank.logging.configure_logging(verbose=False)

    assert pathrank.logging.logger.level == logging.WARNING
    assert pathrank.logging.logger.handlers == []


@dataclass
class _CommandArgs:
    stages: list[str]
    scorers: list[str]
    seed: int | None = None


def test_setting_items_use_override_keys() -> None:
    """Nested sections flatten into the dotted keys that --set accepts."""
    config = _build({"seed": 5})

    items = dict(pathrank.logging.setting_items(config))

    assert items["seed"] == 5
    assert items["preset"] == "toy"
    assert items["stages.finetune.stage"] == "ft"
    assert "environment.n_nodes" in items
    assert not any(isinstance(value, StageSpec) for value in items.values())


def test_log_command_logs_settings_and_given_arguments(caplog: pytest.LogCaptureFixture) -> None:
    """Settings are logged in full; arguments left unset are skipped and long lists shortened."""
    config = _build({"seed": 5})
    args = _CommandArgs(stages=["1", "3"], scorers=list("abcdefghij"))

    pathrank.logging.logger.setLevel(logging.INFO)
    pathrank.logging.logger.propagate = True
    with caplog.at_level(logging.INFO, logger="pathrank"):
        pathrank.logging.log_command("pretrain", args, config)

    assert "Settings (pretrain):" in caplog.text
    assert "seed=5" in caplog.text
    assert "stages.finetune.stage='ft'" in caplog.text
    assert "Arguments (pretrain): stages=['1', '3'], scorers='<10 items>'" in caplog.text
    assert "seed=None" not in caplog.text


def test_log_command_is_silent_when_quiet(caplog: pytest.LogCaptureFixture) -> None:
    """Quiet runs log nothing about the command."""
    pathrank.logging.configure_logging(verbose=False)

    with caplog.at_level(logging.WARNING, logger="pathrank"):
        pathrank.logging.log_command("mine", _CommandArgs(["1"], []), _build({}))

    assert caplog.text == ""

