"""Shared helpers for pipeline commands."""

from __future__ import annotations

import dataclasses
import logging
from typing import TYPE_CHECKING

import typer

from pathrank.config.app import config_hash
from pathrank.pipeline.artifacts import (
    ArtifactMeta,
    load_stage_checkpoint,
    require_input,
    write_csv,
)
from pathrank.pipeline.workflow import SCORER_NAMES, TRAINING_SECTIONS
from pathrank.training.curriculum import LOG_COLUMNS
from pathrank.tui.bits import build_console, lines_to_text, print_output, setup_output


if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from rich.console import Console

    from pathrank.config.app import RunConfig
    from pathrank.model.params import ModelParams
    from pathrank.pipeline.workflow import Benchmark
    from pathrank.training.curriculum import LogRow


logger = logging.getLogger("pathrank")


def resolve_run_config(args: object, config: RunConfig) -> RunConfig:
    """Apply the per-command seed, jobs and workdir options to the loaded config."""
    seed = getattr(args, "seed", None)
    jobs = getattr(args, "jobs", None)
    workdir = getattr(args, "workdir", None)
    if seed is not None and seed < 0:
        raise typer.BadParameter("--seed cannot be negative")
    if jobs is not None and jobs < 1:
        raise typer.BadParameter("--jobs must be at least 1")
    return dataclasses.replace(
        config,
        seed=config.seed if seed is None else seed,
        jobs=config.jobs if jobs is None else jobs,
        workdir=config.workdir if workdir is None else workdir,
    )


def parse_scorer_list(value: str, *, min_count: int = 1, max_count: int = 3) -> list[str]:
    """Parse a comma-separated list of scorer names."""
    names = [name.strip() for name in value.split(",") if name.strip()]
    unknown = [name for name in names if name not in SCORER_NAMES]
    if unknown:
        raise typer.BadParameter(
            f"Unknown scorer {', '.join(unknown)}, expected one of {', '.join(SCORER_NAMES)}",
        )
    if len(set(names)) != len(names):
        raise typer.BadParameter("Scorers must not repeat")
    if not min_count <= len(names) <= max_count:
        raise typer.BadParameter(f"Expected {min_count} to {max_count} scorers, got {len(names)}")
    return names


def training_meta(
    config: RunConfig,
    bench: Benchmark,
    extra: dict[str, str] | None = None,
) -> ArtifactMeta:
    """Provenance of a checkpoint or training log."""
    inputs = {
        "environments": bench.environments.config_hash,
        "episodes": bench.episodes.config_hash,
    }
    inputs.update(extra or {})
    return ArtifactMeta(config_hash=config_hash(config, TRAINING_SECTIONS), inputs=inputs)


def load_checked_checkpoint(path: Path, bench: Benchmark) -> ModelParams:
    """Load a checkpoint trained on the loaded episodes."""
    meta, params = load_stage_checkpoint(path)
    require_input(meta, "episodes", bench.episodes, path)
    return params


def write_training_log(path: Path, meta: ArtifactMeta, rows: Sequence[LogRow]) -> None:
    """Write the per-step training log."""
    write_csv(path, meta, LOG_COLUMNS, (row.as_row() for row in rows))


def open_console(args: object) -> tuple[Console, bool]:
    """Console and color preference for one command."""
    color_enabled = setup_output(args)
    return build_console(color_enabled), color_enabled


def emit(console: Console, lines: list[str], color_enabled: bool) -> None:
    """Print rendered lines as one block."""
    output = lines_to_text(lines)
    if output:
        print_output(console, output, color_enabled, end="")
