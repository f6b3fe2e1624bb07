"""End-to-end tests of the pipeline commands on a tiny configuration."""

from __future__ import annotations

from typing import TYPE_CHECKING

import pytest

from pathrank.commands.ablate import ABLATION_COLUMNS, AblateArgs, run_ablate
from pathrank.commands.analyze import AnalyzeArgs, run_analyze
from pathrank.commands.ensemble import EnsembleArgs, run_ensemble
from pathrank.commands.evaluate import EvaluateArgs, run_evaluate
from pathrank.commands.generate import GenEnvArgs, GenEpisodesArgs, run_gen_env, run_gen_episodes
from pathrank.commands.mine import MineArgs, run_mine
from pathrank.commands.train import FinetuneArgs, PretrainArgs, run_finetune, run_pretrain
from pathrank.logic.errors import ArtifactMismatchError
from pathrank.pipeline.artifacts import load_candidates, read_csv, read_json, read_jsonl
from tests.conftest import tiny_run_config


if TYPE_CHECKING:
    from pathlib import Path

    from pathrank.config.app import RunConfig


CONFIG_NAME = ".pathrank.yaml"


def _generate(config: RunConfig, workdir: Path, seed: int = 3) -> None:
    run_gen_env(GenEnvArgs(CONFIG_NAME, None, seed, str(workdir), False), config)
    run_gen_episodes(GenEpisodesArgs(CONFIG_NAME, None, seed, str(workdir), False), config)


def _pretrain(config: RunConfig, workdir: Path, stage: str) -> None:
    run_pretrain(PretrainArgs(CONFIG_NAME, None, stage, None, 0, str(workdir), False), config)


def test_generation_is_deterministic(tmp_path: Path) -> None:
    """The same seed writes byte-identical environments and episodes."""
    first = tmp_path / "a"
    second = tmp_path / "b"

    _generate(tiny_run_config(first), first)
    _generate(tiny_run_config(second), second)

    for name in ("environments.json", "episodes.jsonl", "panoramas.jsonl"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_episodes_refuse_environments_of_another_seed(tmp_path: Path) -> None:
    """Sampling episodes under a different seed than the environments is an error."""
    config = tiny_run_config(tmp_path)
    run_gen_env(GenEnvArgs(CONFIG_NAME, None, 3, str(tmp_path), False), config)

    with pytest.raises(ArtifactMismatchError, match="generated with config"):
        run_gen_episodes(GenEpisodesArgs(CONFIG_NAME, None, 4, str(tmp_path), False), config)


def test_mining_writes_every_split(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Every split gets one candidate set per episode."""
    config = tiny_run_config(tmp_path)
    _generate(config, tmp_path)

    run_mine(MineArgs(CONFIG_NAME, None, None, str(tmp_path), 1, False), config)

    expected = {"train": 6, "val_seen": 3, "val_unseen": 3}
    for split, count in expected.items():
        _, sets = load_candidates(tmp_path / f"candidates-{split}.jsonl")
        assert len(sets) == count
    assert "coverage %" in capsys.readouterr().out


def test_full_pipeline(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Generate, mine, train every stage, evaluate, ensemble, analyze and ablate."""
    config = tiny_run_config(tmp_path)
    workdir = str(tmp_path)
    _generate(config, tmp_path)
    run_mine(MineArgs(CONFIG_NAME, None, None, workdir, 1, False), config)

    for stage in ("1", "2", "3"):
        _pretrain(config, tmp_path, stage)
    run_finetune(FinetuneArgs(CONFIG_NAME, None, None, 0, workdir, False), config)

    for name in ("stage1", "stage2", "stage3", "finetune"):
        assert (tmp_path / "checkpoints" / f"{name}.prnk").exists()
        assert (tmp_path / "checkpoints" / f"{name}.meta.json").exists()
    stage2_meta, _ = read_json(tmp_path / "checkpoints" / "stage2.meta.json")
    assert stage2_meta.inputs["init"] == "stage1"
    _, log_rows = read_csv(tmp_path / "training-log-stage1.csv")
    assert log_rows
    assert {row["stage"] for row in log_rows} == {"1"}
    assert all(row["select"] == "" for row in log_rows)

    run_evaluate(
        EvaluateArgs(CONFIG_NAME, None, "compat", "finetune", False, workdir, 1, False),
        config,
    )
    run_evaluate(
        EvaluateArgs(CONFIG_NAME, None, "oracle", "finetune", True, workdir, 1, False),
        config,
    )
    _, metric_rows = read_csv(tmp_path / "metrics-val_unseen-compat.csv")
    assert len(metric_rows) == 4
    assert metric_rows[-1]["episode_id"] == "mean"
    _, board_rows = read_csv(tmp_path / "metrics-val_seen-oracle-leaderboard.csv")
    assert len(board_rows) == 4

    run_ensemble(
        EnsembleArgs(
            CONFIG_NAME, None, "compat,follower,speaker", "finetune", 0.25, workdir, 1, False,
        ),
        config,
    )
    ensemble_meta, report = read_json(tmp_path / "ensemble.json")
    assert set(report) == {"scorers", "weights", "grid_step", "val_SR", "val_seen_SR", "corners"}
    assert sum(report["weights"]) == pytest.approx(1.0)
    assert [row["scorer"] for row in report["corners"]] == ["compat", "follower", "speaker"]
    assert ensemble_meta.inputs["checkpoint"] == "finetune"

    run_analyze(
        AnalyzeArgs(CONFIG_NAME, None, "finetune", "stage3", None, None, workdir, 1, 100, False),
        config,
    )
    _, profiles = read_jsonl(tmp_path / "profiles.jsonl")
    assert len(profiles) == 2
    assert {"before", "after", "mass_before", "mass_after"} <= set(profiles[0])
    _, histogram = read_csv(tmp_path / "importance-histogram.csv")
    deleted = {row["deleted"] for row in histogram}
    assert "" in deleted
    assert len(deleted) >= 2
    _, grounding = read_json(tmp_path / "grounding.json")
    assert set(grounding["rates"]) == {"finetune", "stage3"}

    run_ablate(AblateArgs(CONFIG_NAME, None, 1, workdir, 1, False), config)
    _, ablation = read_csv(tmp_path / "ablation.csv")
    assert [row["config"] for row in ablation] == [
        "scratch",
        "stage1",
        "stage1+2",
        "stage1+3",
        "full",
    ]
    assert tuple(ablation[0]) == ABLATION_COLUMNS
    for row in ablation:
        for split in ("val_seen", "val_unseen"):
            spl, sr, osr = (float(row[f"{split}_{name}"]) for name in ("spl", "sr", "osr"))
            assert spl <= sr <= osr
            assert float(row[f"{split}_pl"]) >= 0.0
    assert (tmp_path / "ablation" / "full-seed3" / "checkpoints" / "finetune.prnk").exists()

    output = capsys.readouterr().out
    assert "Selected weights" in output
    assert "Majority decrease" in output
    assert "full - stage1+3 >= 2" in output
    assert "full - stage1 >= 2" in output
