"""Curriculum ablation command."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import emit, open_console, resolve_run_config, training_meta
from pathrank.config.app import config_hash
from pathrank.logic.episodes import TRAIN, VAL_UNSEEN
from pathrank.logic.metrics import summarize
from pathrank.model.scoring import CompatScorer
from pathrank.pipeline.artifacts import ArtifactMeta, save_stage_checkpoint, write_csv
from pathrank.pipeline.parallel import parallel_map
from pathrank.pipeline.workflow import (
    CHECKPOINT_NAMES,
    EVAL_SPLITS,
    TRAINING_SECTIONS,
    curriculum_data,
    evaluate_split,
    init_params,
    load_benchmark,
    load_split_candidates,
    score_split,
    train,
)
from pathrank.training.curriculum import STAGE_ORDER
from pathrank.tui.bits import TableConfig, format_key_values, format_table, processing_status
from pathrank.tui.color import verdict


if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from pathrank.config.app import RunConfig
    from pathrank.logic.mining import CandidateSet
    from pathrank.model.params import ModelParams
    from pathrank.pipeline.workflow import Benchmark
    from pathrank.training.curriculum import CurriculumData


logger = logging.getLogger("pathrank")

# Pretraining stages run before fine-tuning, one row per configuration.
ABLATION_ROWS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("scratch", ()),
    ("stage1", ("1",)),
    ("stage1+2", ("1", "2")),
    ("stage1+3", ("1", "3")),
    ("full", ("1", "2", "3")),
)
ORDERING_CHECKS = (("full", "stage1+3"), ("full", "stage1"), ("stage1", "scratch"))
ORDERING_MARGIN = 2.0
ROW_METRICS = ("sr", "osr", "ne", "pl", "spl")
METRIC_COLUMNS = tuple(f"{split}_{metric}" for split in EVAL_SPLITS for metric in ROW_METRICS)
ABLATION_COLUMNS = ("row", "config", "stages", "seeds", *METRIC_COLUMNS)


@dataclass
class AblateArgs:
    """Arguments for the ablate-curriculum command."""

    config: str
    overrides: list[str] | None
    seeds: int | None
    workdir: str
    jobs: int
    color_flag: bool | None


@dataclass(frozen=True)
class _AblationJob:
    """Trains and evaluates every row for one training seed."""

    config: RunConfig
    bench: Benchmark
    data: CurriculumData
    eval_sets: Mapping[str, Sequence[CandidateSet]]
    inputs: Mapping[str, str]

    def _pretrained(
        self,
        stages: tuple[str, ...],
        seed: int,
        cache: dict[tuple[str, ...], ModelParams],
    ) -> ModelParams:
        # A stage depends only on the seed and its position; shared prefixes train once.
        if stages not in cache:
            start = self._pretrained(stages[:-1], seed, cache)
            cache[stages] = train(self.config, start, [stages[-1]], self.data, seed).params
        return cache[stages]

    def _metrics(self, params: ModelParams) -> dict[str, float]:
        scorer = CompatScorer(
            params=params,
            panoramas=self.bench.panoramas,
            vocab=self.bench.world.vocab,
        )
        metrics: dict[str, float] = {}
        for split in EVAL_SPLITS:
            sets = self.eval_sets[split]
            records = evaluate_split(self.bench, sets, score_split(scorer, self.bench, sets))
            summary = summarize(records)
            metrics.update(
                {f"{split}_{metric}": getattr(summary, metric) for metric in ROW_METRICS},
            )
        return metrics

    def __call__(self, seed: int) -> list[dict[str, float]]:
        cache = {(): init_params(self.config, self.bench.world, seed)}
        rows = []
        for name, stages in ABLATION_ROWS:
            logger.info("Ablation row %s, seed %d", name, seed)
            start = self._pretrained(stages, seed, cache)
            params = train(self.config, start, ["ft"], self.data, seed).params
            meta = training_meta(
                self.config,
                self.bench,
                {**self.inputs, "init": "+".join(stages) or "scratch", "train_seed": str(seed)},
            )
            workspace = self.config.workspace.seed_dir(name, seed)
            save_stage_checkpoint(workspace.checkpoint(CHECKPOINT_NAMES["ft"]), meta, params)
            rows.append(self._metrics(params))
        return rows


def median_metrics(per_seed: Sequence[Sequence[Mapping[str, float]]]) -> list[dict[str, float]]:
    """Median of every metric over seeds, one mapping per configuration."""
    return [
        {
            column: float(np.median([seed_rows[index][column] for seed_rows in per_seed]))
            for column in METRIC_COLUMNS
        }
        for index in range(len(ABLATION_ROWS))
    ]


def ablation_rows(medians: Sequence[Mapping[str, float]], n_seeds: int) -> list[dict[str, object]]:
    """CSV rows in configuration order."""
    return [
        {
            "row": index + 1,
            "config": name,
            "stages": "+".join((*stages, "ft")),
            "seeds": n_seeds,
            **metrics,
        }
        for index, ((name, stages), metrics) in enumerate(
            zip(ABLATION_ROWS, medians, strict=True),
        )
    ]


def ordering_checks(medians: Sequence[Mapping[str, float]]) -> list[tuple[str, bool]]:
    """Whether each expected row ordering holds on val_unseen SR by the required margin."""
    column = f"{VAL_UNSEEN}_sr"
    by_name = {
        name: metrics[column] for (name, _), metrics in zip(ABLATION_ROWS, medians, strict=True)
    }
    return [
        (
            f"{better} - {worse} >= {ORDERING_MARGIN:g}",
            by_name[better] - by_name[worse] >= ORDERING_MARGIN,
        )
        for better, worse in ORDERING_CHECKS
    ]


def run_ablate(args: AblateArgs, config: pathrank.config.app.RunConfig) -> None:
    """Train every curriculum configuration for several seeds and compare the medians."""
    config = resolve_run_config(args, config)
    n_seeds = args.seeds or config.evaluation.ablation_seeds
    if n_seeds < 1:
        raise typer.BadParameter("--seeds must be at least 1")
    console, color_enabled = open_console(args)
    bench = load_benchmark(config)
    train_meta, train_sets = load_split_candidates(config, bench, TRAIN)
    inputs = {"candidates": train_meta.config_hash}
    eval_sets = {}
    for split in EVAL_SPLITS:
        split_meta, eval_sets[split] = load_split_candidates(config, bench, split)
        inputs[f"candidates_{split}"] = split_meta.config_hash
    data = curriculum_data(
        config,
        bench,
        STAGE_ORDER,
        train_candidates=train_sets,
        early_stop_candidates=eval_sets[VAL_UNSEEN],
    )

    seeds = [config.seed + offset for offset in range(n_seeds)]
    job = _AblationJob(config=config, bench=bench, data=data, eval_sets=eval_sets, inputs=inputs)
    with processing_status(console, color_enabled, f"Training {len(seeds)} seeds..."):
        per_seed = parallel_map(job, seeds, config.jobs)

    medians = median_metrics(per_seed)
    rows = ablation_rows(medians, len(seeds))
    write_csv(
        config.workspace.ablation,
        ArtifactMeta(
            config_hash=config_hash(config, TRAINING_SECTIONS),
            inputs={"episodes": bench.episodes.config_hash, **inputs},
        ),
        ABLATION_COLUMNS,
        rows,
    )

    lines = format_table(
        rows,
        TableConfig(
            columns=("row", "config", *METRIC_COLUMNS),
            color_enabled=color_enabled,
            highlight=(f"{VAL_UNSEEN}_sr",),
        ),
    )
    lines.extend(
        format_key_values(
            [(label, verdict(passed, color_enabled)) for label, passed in ordering_checks(medians)],
            color_enabled,
        ),
    )
    emit(console, lines, color_enabled)


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the ablate-curriculum command."""

    @app.command("ablate-curriculum")
    def ablate_curriculum(
        ctx: typer.Context,
        seeds: int | None = typer.Option(
            None,
            "--seeds",
            metavar="N",
            min=1,
            help="Training seeds per configuration (default: evaluation.ablation_seeds)",
        ),
        config: str = typer.Option(
            ".pathrank.yaml",
            "--config",
            metavar="FILE",
            help="Config file name to load from current directory",
        ),
        overrides: list[str] | None = typer.Option(  # noqa: B008
            None,
            "--set",
            metavar="KEY=VALUE",
            help="Override one config value, e.g. stages.finetune.epochs=4 (can specify multiple)",
        ),
        workdir: str = typer.Option(
            app_config.workdir,
            "--workdir",
            metavar="DIR",
            help="Directory holding the run artifacts",
        ),
        jobs: int = typer.Option(
            app_config.jobs,
            "--jobs",
            "-j",
            metavar="N",
            min=1,
            help="Worker processes, one training seed each",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Compare fine-tuned models across pretraining curricula."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = AblateArgs(
            config=config,
            overrides=overrides,
            seeds=seeds,
            workdir=workdir,
            jobs=jobs,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("ablate-curriculum", args, app_config)
        run_ablate(args, app_config)
