"""Scorer ensembling command."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import (
    emit,
    load_checked_checkpoint,
    open_console,
    parse_scorer_list,
    resolve_run_config,
)
from pathrank.config.app import config_hash
from pathrank.logic.ensemble import ensemble_grid_search, selection_success
from pathrank.logic.episodes import VAL_SEEN, VAL_UNSEEN
from pathrank.logic.errors import InsufficientCandidatesError
from pathrank.pipeline.artifacts import ArtifactMeta, write_json
from pathrank.pipeline.workflow import (
    EVAL_SPLITS,
    MINING_SECTIONS,
    build_scorer,
    load_benchmark,
    load_split_candidates,
    score_split,
)
from pathrank.tui.bits import TableConfig, format_key_values, format_table, processing_status


if TYPE_CHECKING:
    from collections.abc import Sequence

    import numpy as np
    from numpy.typing import NDArray


@dataclass
class EnsembleArgs:
    """Arguments for the ensemble command."""

    config: str
    overrides: list[str] | None
    scorers: str
    checkpoint: str
    grid_step: float
    workdir: str
    jobs: int
    color_flag: bool | None


@dataclass(frozen=True)
class SplitScores:
    """Every scorer's scores of one split with the candidates' success flags."""

    per_scorer: list[list[NDArray[np.float64]]]
    success: list[NDArray[np.bool_]]

    def rate(self, weights: Sequence[float]) -> float:
        """Selection success in percent at the given weights."""
        return 100.0 * selection_success(self.per_scorer, self.success, weights)


def corner(index: int, size: int) -> tuple[float, ...]:
    """Weights selecting a single scorer."""
    return tuple(1.0 if position == index else 0.0 for position in range(size))


def run_ensemble(args: EnsembleArgs, config: pathrank.config.app.RunConfig) -> None:
    """Grid-search simplex weights of several scorers on val_unseen."""
    names = parse_scorer_list(args.scorers)
    if not 0.0 < args.grid_step <= 1.0:
        raise typer.BadParameter("--grid-step must be in (0, 1]")
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    bench = load_benchmark(config)
    inputs = {"episodes": bench.episodes.config_hash}
    params = None
    if "compat" in names:
        params = load_checked_checkpoint(config.workspace.checkpoint(args.checkpoint), bench)
        inputs["checkpoint"] = args.checkpoint
    scorers = [build_scorer(name, config, bench, params) for name in names]

    splits: dict[str, SplitScores] = {}
    for split in EVAL_SPLITS:
        candidates_meta, sets = load_split_candidates(config, bench, split)
        if not sets:
            raise InsufficientCandidatesError(f"no {split} candidate sets to ensemble over")
        inputs[f"candidates_{split}"] = candidates_meta.config_hash
        with processing_status(console, color_enabled, f"Scoring {split}..."):
            splits[split] = SplitScores(
                per_scorer=[score_split(scorer, bench, sets, config.jobs) for scorer in scorers],
                success=[candidates.success_flags for candidates in sets],
            )

    unseen = splits[VAL_UNSEEN]
    seen = splits[VAL_SEEN]
    result = ensemble_grid_search(unseen.per_scorer, unseen.success, args.grid_step)
    corners = [
        {
            "scorer": name,
            "val_seen_SR": seen.rate(corner(index, len(names))),
            "val_unseen_SR": unseen.rate(corner(index, len(names))),
        }
        for index, name in enumerate(names)
    ]
    report = {
        "scorers": names,
        "weights": list(result.weights),
        "grid_step": args.grid_step,
        "val_SR": 100.0 * result.success_rate,
        "val_seen_SR": seen.rate(result.weights),
        "corners": corners,
    }
    write_json(
        config.workspace.ensemble,
        ArtifactMeta(config_hash=config_hash(config, MINING_SECTIONS), inputs=inputs),
        report,
    )

    weights_text = ", ".join(
        f"{name}={weight:.2f}" for name, weight in zip(names, result.weights, strict=True)
    )
    rows: list[dict[str, object]] = [
        {
            "model": row["scorer"],
            "val_seen SR": row["val_seen_SR"],
            "val_unseen SR": row["val_unseen_SR"],
        }
        for row in corners
    ]
    rows.append(
        {
            "model": "ensemble",
            "val_seen SR": report["val_seen_SR"],
            "val_unseen SR": report["val_SR"],
        },
    )
    lines = format_key_values([("Selected weights", weights_text)], color_enabled)
    lines.extend(
        format_table(
            rows,
            TableConfig(
                columns=("model", "val_seen SR", "val_unseen SR"),
                color_enabled=color_enabled,
                highlight=("val_unseen SR",),
            ),
        ),
    )
    emit(console, lines, color_enabled)


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the ensemble command."""

    @app.command("ensemble")
    def ensemble(
        ctx: typer.Context,
        scorers: str = typer.Option(
            "compat,follower",
            "--scorers",
            metavar="NAMES",
            help="Comma-separated scorers to combine (1 to 3 of compat, follower, follower2, "
            "speaker, oracle)",
        ),
        checkpoint: str = typer.Option(
            "finetune",
            "--checkpoint",
            metavar="NAME",
            help="Checkpoint scored by the compat scorer",
        ),
        grid_step: float = typer.Option(
            app_config.evaluation.grid_step,
            "--grid-step",
            metavar="STEP",
            help="Spacing of the weight grid on the simplex",
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
        """Combine scorers with weights chosen on val_unseen."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = EnsembleArgs(
            config=config,
            overrides=overrides,
            scorers=scorers,
            checkpoint=checkpoint,
            grid_step=grid_step,
            workdir=workdir,
            jobs=jobs,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("ensemble", args, app_config)
        run_ensemble(args, app_config)
