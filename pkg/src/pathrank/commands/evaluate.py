"""Path selection evaluation command."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import emit, load_checked_checkpoint, open_console, resolve_run_config
from pathrank.config.app import config_hash
from pathrank.logic.metrics import METRIC_NAMES, summarize
from pathrank.pipeline.artifacts import ArtifactMeta, write_csv
from pathrank.pipeline.workflow import (
    EVAL_SPLITS,
    MINING_SECTIONS,
    SCORER_NAMES,
    build_scorer,
    evaluate_split,
    load_benchmark,
    load_split_candidates,
    score_split,
)
from pathrank.tui.bits import TableConfig, format_table, processing_status


if TYPE_CHECKING:
    from pathrank.logic.metrics import MetricsSummary


METRIC_COLUMNS = ("episode_id", *METRIC_NAMES)
FOOTER_ID = "mean"


@dataclass
class EvaluateArgs:
    """Arguments for the evaluate command."""

    config: str
    overrides: list[str] | None
    scorer: str
    checkpoint: str
    leaderboard_mode: bool
    workdir: str
    jobs: int
    color_flag: bool | None


def footer_row(summary: MetricsSummary) -> dict[str, object]:
    """Aggregate row in the units of the per-episode rows."""
    return {
        "episode_id": FOOTER_ID,
        "sr": summary.sr / 100.0,
        "osr": summary.osr / 100.0,
        "ne": summary.ne,
        "pl": summary.pl,
        "spl": summary.spl / 100.0,
    }


def metrics_name(scorer: str, leaderboard_mode: bool) -> str:
    """Scorer part of the metrics file name."""
    return f"{scorer}-leaderboard" if leaderboard_mode else scorer


def run_evaluate(args: EvaluateArgs, config: pathrank.config.app.RunConfig) -> None:
    """Select one path per episode with a scorer and report navigation metrics."""
    if args.scorer not in SCORER_NAMES:
        raise typer.BadParameter(
            f"Unknown scorer {args.scorer}, expected one of {', '.join(SCORER_NAMES)}",
        )
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    bench = load_benchmark(config)
    inputs = {"episodes": bench.episodes.config_hash}
    params = None
    if args.scorer == "compat":
        checkpoint_path = config.workspace.checkpoint(args.checkpoint)
        params = load_checked_checkpoint(checkpoint_path, bench)
        inputs["checkpoint"] = args.checkpoint
    scorer = build_scorer(args.scorer, config, bench, params)

    rows = []
    for split in EVAL_SPLITS:
        candidates_meta, sets = load_split_candidates(config, bench, split)
        with processing_status(console, color_enabled, f"Scoring {split}..."):
            scores = score_split(scorer, bench, sets, config.jobs)
        records = evaluate_split(bench, sets, scores, leaderboard_mode=args.leaderboard_mode)
        summary = summarize(records)
        meta = ArtifactMeta(
            config_hash=config_hash(config, MINING_SECTIONS),
            inputs={**inputs, "candidates": candidates_meta.config_hash},
        )
        write_csv(
            config.workspace.metrics(split, metrics_name(args.scorer, args.leaderboard_mode)),
            meta,
            METRIC_COLUMNS,
            [*(record.as_row() for record in records), footer_row(summary)],
        )
        rows.append(
            {
                "split": split,
                "episodes": summary.count,
                "SR": summary.sr,
                "OSR": summary.osr,
                "NE": summary.ne,
                "PL": summary.pl,
                "SPL": summary.spl,
            },
        )

    emit(
        console,
        format_table(
            rows,
            TableConfig(
                columns=("split", "episodes", "SR", "OSR", "NE", "PL", "SPL"),
                color_enabled=color_enabled,
                highlight=("SR",),
            ),
        ),
        color_enabled,
    )


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the evaluate command."""

    @app.command("evaluate")
    def evaluate(
        ctx: typer.Context,
        scorer: str = typer.Option(
            "compat",
            "--scorer",
            metavar="NAME",
            help="Path scorer: compat, follower, follower2, speaker or oracle",
        ),
        checkpoint: str = typer.Option(
            "finetune",
            "--checkpoint",
            metavar="NAME",
            help="Checkpoint scored by the compat scorer",
        ),
        leaderboard_mode: bool = typer.Option(
            False,
            "--leaderboard-mode",
            help="Charge the walk exploring every candidate to the selected path's length",
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
            help="Override one config value (can specify multiple)",
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
            help="Worker processes for episode-parallel scoring",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Evaluate path selection on val_seen and val_unseen."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = EvaluateArgs(
            config=config,
            overrides=overrides,
            scorer=scorer,
            checkpoint=checkpoint,
            leaderboard_mode=leaderboard_mode,
            workdir=workdir,
            jobs=jobs,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("evaluate", args, app_config)
        run_evaluate(args, app_config)
