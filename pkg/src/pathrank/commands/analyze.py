"""Region importance analysis command."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import emit, load_checked_checkpoint, resolve_run_config
from pathrank.config.app import config_hash
from pathrank.logic.analysis import (
    HISTOGRAM_COLUMNS,
    curriculum_grounding_compare,
    decrease_rate,
    perturbation_study,
)
from pathrank.logic.episodes import VAL_UNSEEN
from pathrank.logic.errors import GenerationError
from pathrank.pipeline.artifacts import ArtifactMeta, write_csv, write_json, write_jsonl
from pathrank.pipeline.parallel import parallel_map
from pathrank.pipeline.workflow import EPISODE_SECTIONS, load_benchmark
from pathrank.tui.bits import (
    TableConfig,
    build_console,
    format_key_values,
    format_table,
    processing_status,
    setup_output,
)
from pathrank.tui.color import verdict
from pathrank.tui.histogram import HistogramSectionConfig, format_histogram_section


if TYPE_CHECKING:
    from collections.abc import Mapping

    from pathrank.logic.analysis import Perturbation
    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import PanoramaObservation
    from pathrank.logic.vocab import LandmarkCatalog, Vocabulary
    from pathrank.model.params import ModelParams


MAJORITY = 0.6
PROFILE_COLUMNS = ("episode_id", "deleted", *HISTOGRAM_COLUMNS)


@dataclass
class AnalyzeArgs:
    """Arguments for the analyze command."""

    config: str
    overrides: list[str] | None
    checkpoint: str
    compare: str | None
    episodes: int | None
    top_k: int | None
    workdir: str
    jobs: int
    width: int | None
    color_flag: bool | None


@dataclass(frozen=True)
class _PerturbationJob:
    params: ModelParams
    graphs: Mapping[str, NavGraph]
    panoramas: Mapping[str, PanoramaObservation]
    vocab: Vocabulary

    def __call__(self, episode: EpisodeSpec) -> Perturbation:
        [result] = perturbation_study(
            self.params,
            episode,
            self.graphs[episode.graph_id],
            self.panoramas,
            self.vocab,
            [episode.instruction.goal_span],
        )
        return result


def profile_record(perturbation: Perturbation, vocab: Vocabulary, top_k: int) -> dict[str, object]:
    """Export form of one goal-phrase deletion."""
    return {
        "episode_id": perturbation.episode_id,
        "named_classes": sorted(perturbation.named_classes),
        "mass_before": perturbation.mass_before,
        "mass_after": perturbation.mass_after,
        "before": perturbation.before.as_dict(vocab, top_k),
        "after": perturbation.after.as_dict(vocab, top_k),
    }


def histogram_rows(perturbation: Perturbation) -> list[dict[str, object]]:
    """Both profiles of one deletion in sequence order, tagged by what was deleted."""
    start, stop = perturbation.span
    rows = [
        {"episode_id": perturbation.episode_id, "deleted": "", **row}
        for row in perturbation.before.histogram_rows()
    ]
    rows.extend(
        {"episode_id": perturbation.episode_id, "deleted": f"{start}:{stop}", **row}
        for row in perturbation.after.histogram_rows()
    )
    return rows


def _histogram_entries(
    perturbation: Perturbation,
    catalog: LandmarkCatalog,
) -> list[tuple[str, float]]:
    profile = perturbation.before
    return [
        (f"{ref.pano}:{catalog.names[ref.landmark_class]}", value)
        for ref, value in zip(profile.regions, profile.importances, strict=True)
    ]


def run_analyze(args: AnalyzeArgs, config: pathrank.config.app.RunConfig) -> None:
    """Delete the goal phrase of val-unseen episodes and measure how region importance moves."""
    if args.compare is not None and args.compare == args.checkpoint:
        raise typer.BadParameter("--compare must name a different checkpoint")
    config = resolve_run_config(args, config)
    color_enabled = setup_output(args)
    console = build_console(color_enabled, args.width)
    n_episodes = args.episodes or config.analysis.episodes
    top_k = args.top_k or config.analysis.top_k
    bench = load_benchmark(config)
    vocab = bench.world.vocab
    params = load_checked_checkpoint(config.workspace.checkpoint(args.checkpoint), bench)
    episodes = bench.split(VAL_UNSEEN)[:n_episodes]
    if not episodes:
        raise GenerationError("no val_unseen episodes to analyze")

    with processing_status(console, color_enabled, "Computing region importance..."):
        perturbations = parallel_map(
            _PerturbationJob(
                params=params,
                graphs=bench.graphs,
                panoramas=bench.panoramas,
                vocab=vocab,
            ),
            episodes,
            config.jobs,
        )

    inputs = {"episodes": bench.episodes.config_hash, "checkpoint": args.checkpoint}
    meta = ArtifactMeta(config_hash=config_hash(config, EPISODE_SECTIONS), inputs=inputs)
    workspace = config.workspace
    write_jsonl(
        workspace.profiles,
        meta,
        [profile_record(perturbation, vocab, top_k) for perturbation in perturbations],
    )
    write_csv(
        workspace.histogram,
        meta,
        PROFILE_COLUMNS,
        [row for perturbation in perturbations for row in histogram_rows(perturbation)],
    )

    rate = decrease_rate(perturbations)
    changed = sum(perturbation.top_changed for perturbation in perturbations)
    lines = format_key_values(
        [
            ("Episodes", len(perturbations)),
            ("Goal mass decrease %", 100.0 * rate),
            ("Majority decrease", verdict(rate > MAJORITY, color_enabled)),
            ("Top-1 region changed", changed),
        ],
        color_enabled,
    )

    if args.compare is not None:
        baseline = load_checked_checkpoint(workspace.checkpoint(args.compare), bench)
        with processing_status(console, color_enabled, "Comparing held-out grounding..."):
            report = curriculum_grounding_compare(
                {args.checkpoint: params, args.compare: baseline},
                episodes,
                bench.graphs,
                bench.panoramas,
                vocab,
                bench.world.catalog.held_out,
                top_k,
            )
        write_json(
            workspace.grounding,
            ArtifactMeta(
                config_hash=meta.config_hash,
                inputs={**inputs, "compare": args.compare},
            ),
            report.as_dict(),
        )
        lines.extend(
            format_table(
                [
                    {"checkpoint": name, f"held-out in top {top_k} %": 100.0 * value}
                    for name, value in report.rates.items()
                ],
                TableConfig(
                    columns=("checkpoint", f"held-out in top {top_k} %"),
                    color_enabled=color_enabled,
                ),
            ),
        )
        lines.extend(
            format_key_values(
                [
                    ("Held-out goal episodes", report.n_episodes),
                    (
                        "Stronger grounding",
                        verdict(
                            report.rates[args.checkpoint] > report.rates[args.compare],
                            color_enabled,
                        ),
                    ),
                ],
                color_enabled,
            ),
        )

    first = perturbations[0]
    lines.extend(
        format_histogram_section(
            f"Region importance of {first.episode_id}",
            _histogram_entries(first, bench.world.catalog),
            HistogramSectionConfig(plot_width=console.width, color_enabled=color_enabled),
        ),
    )
    emit(console, lines, color_enabled)


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the analyze command."""

    @app.command("analyze")
    def analyze(
        ctx: typer.Context,
        checkpoint: str = typer.Option(
            "finetune",
            "--checkpoint",
            metavar="NAME",
            help="Checkpoint to analyze",
        ),
        compare: str | None = typer.Option(
            None,
            "--compare",
            metavar="NAME",
            help="Second checkpoint for the held-out landmark grounding comparison",
        ),
        episodes: int | None = typer.Option(
            None,
            "--episodes",
            metavar="N",
            min=1,
            help="Number of val_unseen episodes to study",
        ),
        top_k: int | None = typer.Option(
            None,
            "--top-k",
            metavar="K",
            min=1,
            help="Length of the exported top region lists",
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
            help="Override one config value, e.g. analysis.episodes=20 (can specify multiple)",
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
            help="Worker processes for episode-parallel analysis",
        ),
        width: int | None = typer.Option(
            None,
            "--width",
            metavar="N",
            min=50,
            help="Override auto-derived console width (minimum: 50)",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Study region importance when goal phrases are deleted."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = AnalyzeArgs(
            config=config,
            overrides=overrides,
            checkpoint=checkpoint,
            compare=compare,
            episodes=episodes,
            top_k=top_k,
            workdir=workdir,
            jobs=jobs,
            width=width,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("analyze", args, app_config)
        run_analyze(args, app_config)
