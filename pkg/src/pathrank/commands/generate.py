"""Environment and episode generation commands."""

from __future__ import annotations

from dataclasses import dataclass

import typer

import pathrank.config.app
import pathrank.logging
from pathrank.commands.common import emit, open_console, resolve_run_config
from pathrank.config.app import config_hash
from pathrank.logic.episodes import verify_shortest
from pathrank.logic.errors import GenerationError
from pathrank.pipeline.artifacts import (
    ArtifactMeta,
    save_environments,
    save_episodes,
    save_panoramas,
)
from pathrank.pipeline.workflow import (
    EPISODE_SECTIONS,
    build_world,
    environments_meta,
    generate_splits,
    generate_world_graphs,
    load_world_graphs,
    observe_world,
)
from pathrank.tui.bits import TableConfig, format_key_values, format_table, processing_status


@dataclass
class GenEnvArgs:
    """Arguments for the gen-env command."""

    config: str
    overrides: list[str] | None
    seed: int
    workdir: str
    color_flag: bool | None


@dataclass
class GenEpisodesArgs:
    """Arguments for the gen-episodes command."""

    config: str
    overrides: list[str] | None
    seed: int
    workdir: str
    color_flag: bool | None


def run_gen_env(args: GenEnvArgs, config: pathrank.config.app.RunConfig) -> None:
    """Generate training and val-unseen environments."""
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    world = build_world(config)
    with processing_status(console, color_enabled, "Generating environments..."):
        graphs = generate_world_graphs(config, world)
    save_environments(
        config.workspace.environments,
        environments_meta(config),
        list(graphs.values()),
    )

    rows = [
        {
            "graph": graph.id,
            "split": graph.split,
            "nodes": len(graph.nodes),
            "edges": len(graph.edges),
            "degree": 2.0 * len(graph.edges) / len(graph.nodes),
        }
        for graph in graphs.values()
    ]
    lines = format_key_values(
        [
            ("Environments", len(graphs)),
            ("Landmark classes", world.catalog.size),
            ("Held-out classes", len(world.catalog.held_out)),
        ],
        color_enabled,
    )
    lines.extend(
        format_table(
            rows,
            TableConfig(
                columns=("graph", "split", "nodes", "edges", "degree"),
                color_enabled=color_enabled,
            ),
        ),
    )
    emit(console, lines, color_enabled)


def run_gen_episodes(args: GenEpisodesArgs, config: pathrank.config.app.RunConfig) -> None:
    """Sample episodes of every split and cache the panorama of every node."""
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    env_meta, graphs = load_world_graphs(config)
    world = build_world(config)
    with processing_status(console, color_enabled, "Sampling episodes..."):
        splits = generate_splits(config, graphs, world)
        for episodes in splits.values():
            for episode in episodes:
                if not verify_shortest(graphs[episode.graph_id], episode):
                    raise GenerationError(f"episode '{episode.id}' is not a shortest path")
        panoramas = observe_world(config, graphs, world)

    inputs = {"environments": env_meta.config_hash}
    workspace = config.workspace
    save_episodes(
        workspace.episodes,
        ArtifactMeta(config_hash=config_hash(config, EPISODE_SECTIONS), inputs=inputs),
        [episode for episodes in splits.values() for episode in episodes],
    )
    save_panoramas(
        workspace.panoramas,
        ArtifactMeta(config_hash=env_meta.config_hash, inputs=inputs),
        panoramas,
    )

    rows = [
        {
            "split": split,
            "episodes": len(episodes),
            "mean hops": sum(episode.hops for episode in episodes) / len(episodes),
            "mean words": sum(len(episode.instruction.tokens) for episode in episodes)
            / len(episodes),
        }
        for split, episodes in splits.items()
        if episodes
    ]
    lines = format_table(
        rows,
        TableConfig(
            columns=("split", "episodes", "mean hops", "mean words"),
            color_enabled=color_enabled,
        ),
    )
    lines.extend(format_key_values([("Cached panoramas", len(panoramas))], color_enabled))
    emit(console, lines, color_enabled)


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the generation commands."""

    @app.command("gen-env")
    def gen_env(
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
            help="Override one config value, e.g. environment.n_nodes=30 (can specify multiple)",
        ),
        seed: int = typer.Option(
            app_config.seed,
            "--seed",
            metavar="N",
            help="Seed of every generator",
        ),
        workdir: str = typer.Option(
            app_config.workdir,
            "--workdir",
            metavar="DIR",
            help="Directory holding the run artifacts",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Generate synthetic navigation environments."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = GenEnvArgs(
            config=config,
            overrides=overrides,
            seed=seed,
            workdir=workdir,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("gen-env", args, app_config)
        run_gen_env(args, app_config)

    @app.command("gen-episodes")
    def gen_episodes(
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
            help="Override one config value, e.g. episodes.train=100 (can specify multiple)",
        ),
        seed: int = typer.Option(
            app_config.seed,
            "--seed",
            metavar="N",
            help="Seed of every generator; must match the one used by gen-env",
        ),
        workdir: str = typer.Option(
            app_config.workdir,
            "--workdir",
            metavar="DIR",
            help="Directory holding the run artifacts",
        ),
        color_flag: bool | None = typer.Option(
            app_config.color_flag,
            "--color/--no-color",
            help="Force colored output",
        ),
    ) -> None:
        """Sample episodes with instructions and cache panorama features."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = GenEpisodesArgs(
            config=config,
            overrides=overrides,
            seed=seed,
            workdir=workdir,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("gen-episodes", args, app_config)
        run_gen_episodes(args, app_config)
