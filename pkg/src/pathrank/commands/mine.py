"""Candidate mining command."""

from __future__ import annotations

from dataclasses import dataclass

import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import emit, open_console, resolve_run_config
from pathrank.config.app import config_hash
from pathrank.pipeline.artifacts import ArtifactMeta, save_candidates
from pathrank.pipeline.workflow import (
    MINED_SPLITS,
    MINING_SECTIONS,
    coverage,
    load_benchmark,
    mine_split,
)
from pathrank.tui.bits import TableConfig, format_table, processing_status


@dataclass
class MineArgs:
    """Arguments for the mine command."""

    config: str
    overrides: list[str] | None
    splits: list[str] | None
    workdir: str
    jobs: int
    color_flag: bool | None


def _resolve_splits(splits: list[str] | None) -> list[str]:
    if not splits:
        return list(MINED_SPLITS)
    unknown = [split for split in splits if split not in MINED_SPLITS]
    if unknown:
        raise typer.BadParameter(
            f"Unknown split {', '.join(unknown)}, expected one of {', '.join(MINED_SPLITS)}",
        )
    return splits


def run_mine(args: MineArgs, config: pathrank.config.app.RunConfig) -> None:
    """Beam-search candidate paths for every episode of the requested splits."""
    config = resolve_run_config(args, config)
    splits = _resolve_splits(args.splits)
    console, color_enabled = open_console(args)
    bench = load_benchmark(config)
    meta = ArtifactMeta(
        config_hash=config_hash(config, MINING_SECTIONS),
        inputs={"episodes": bench.episodes.config_hash},
    )

    rows = []
    for split in splits:
        with processing_status(console, color_enabled, f"Mining {split} candidates..."):
            sets = mine_split(config, bench, split, config.jobs)
        save_candidates(config.workspace.candidates(split), meta, sets)
        usable = sum(
            1
            for candidates in sets
            if candidates.has_success
            and sum(not candidate.success for candidate in candidates.candidates) >= 3
        )
        rows.append(
            {
                "split": split,
                "sets": len(sets),
                "coverage %": 100.0 * coverage(sets),
                "mean size": (
                    sum(len(candidates.candidates) for candidates in sets) / len(sets)
                    if sets
                    else 0.0
                ),
                "usable quads": usable,
            },
        )

    emit(
        console,
        format_table(
            rows,
            TableConfig(
                columns=("split", "sets", "coverage %", "mean size", "usable quads"),
                color_enabled=color_enabled,
                highlight=("coverage %",),
            ),
        ),
        color_enabled,
    )


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the mine command."""

    @app.command("mine")
    def mine(
        ctx: typer.Context,
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
            help="Override one config value, e.g. mining.beam_width=10 (can specify multiple)",
        ),
        splits: list[str] | None = typer.Option(  # noqa: B008
            None,
            "--split",
            metavar="SPLIT",
            help="Split to mine: train, val_seen or val_unseen (default: all, can repeat)",
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
            help="Worker processes for episode-parallel mining",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Mine candidate paths with the scripted follower's beam search."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = MineArgs(
            config=config,
            overrides=overrides,
            splits=splits,
            workdir=workdir,
            jobs=jobs,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("mine", args, app_config)
        run_mine(args, app_config)
