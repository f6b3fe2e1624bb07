"""Pretraining and fine-tuning commands."""

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
    resolve_run_config,
    training_meta,
    write_training_log,
)
from pathrank.logic.episodes import TRAIN, VAL_SEEN, VAL_UNSEEN, derive_seed
from pathrank.pipeline.artifacts import save_stage_checkpoint
from pathrank.pipeline.workflow import (
    CHECKPOINT_NAMES,
    SCRATCH,
    curriculum_data,
    init_params,
    load_benchmark,
    load_split_candidates,
    train,
)
from pathrank.training.corpora import build_caption_pairs, build_path_pairs, build_sentence_pairs
from pathrank.training.curriculum import STAGE_NAMES
from pathrank.training.probes import alignment_accuracy, direction_recovery, sentence_recovery
from pathrank.tui.bits import TableConfig, format_key_values, format_table, processing_status


if TYPE_CHECKING:
    from pathrank.config.app import RunConfig
    from pathrank.model.params import ModelParams
    from pathrank.pipeline.workflow import Benchmark
    from pathrank.training.curriculum import CurriculumData, StageResult


PRETRAIN_STAGES = ("1", "2", "3")
PROBE_SIZE = 100
DEFAULT_INIT = {"1": SCRATCH, "2": "stage1", "3": "stage2", "ft": "stage3"}


@dataclass
class PretrainArgs:
    """Arguments for the pretrain command."""

    config: str
    overrides: list[str] | None
    stage: str
    init: str | None
    train_seed: int
    workdir: str
    color_flag: bool | None


@dataclass
class FinetuneArgs:
    """Arguments for the finetune command."""

    config: str
    overrides: list[str] | None
    init: str | None
    train_seed: int
    workdir: str
    color_flag: bool | None


def _initial_params(
    config: RunConfig,
    bench: Benchmark,
    init: str,
    seed: int,
) -> ModelParams:
    if init == SCRATCH:
        return init_params(config, bench.world, seed)
    return load_checked_checkpoint(config.workspace.checkpoint(init), bench)


def _probe(
    config: RunConfig,
    bench: Benchmark,
    stage: str,
    params: ModelParams,
    data: CurriculumData,
) -> tuple[str, float]:
    """Held-out accuracy of what one pretraining stage teaches."""
    vocab = bench.world.vocab
    held_out = bench.split(VAL_SEEN)[:PROBE_SIZE]
    if stage == "1":
        sentence_pairs = build_sentence_pairs(
            [episode.instruction for episode in held_out],
            PROBE_SIZE,
            derive_seed(config.seed, 31),
        )
        return "Masked word accuracy", sentence_recovery(params, sentence_pairs, vocab)
    if stage == "2":
        captions = build_caption_pairs(
            bench.world.catalog,
            vocab,
            PROBE_SIZE,
            derive_seed(config.seed, 32),
            k_max=config.k_max,
        )
        return "Alignment accuracy", alignment_accuracy(params, captions, vocab)
    path_pairs = build_path_pairs(held_out, bench.graphs)
    return "Direction word accuracy", direction_recovery(params, path_pairs, data)


def _summary_lines(stage: StageResult, color_enabled: bool) -> list[str]:
    log = stage.log
    pairs: list[tuple[str, object]] = [
        ("Stage", f"{stage.spec.stage} ({STAGE_NAMES[stage.spec.stage]})"),
        ("Steps", len(log)),
    ]
    if log:
        pairs.extend([("First loss", log[0].loss), ("Final loss", log[-1].loss)])
    return format_key_values(pairs, color_enabled)


def run_pretrain(args: PretrainArgs, config: pathrank.config.app.RunConfig) -> None:
    """Run one pretraining stage and write its checkpoint and training log."""
    if args.stage not in PRETRAIN_STAGES:
        raise typer.BadParameter("--stage must be 1, 2 or 3")
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    init = args.init or DEFAULT_INIT[args.stage]
    bench = load_benchmark(config)
    params = _initial_params(config, bench, init, args.train_seed)
    data = curriculum_data(config, bench, [args.stage])
    with processing_status(console, color_enabled, f"Training stage {args.stage}..."):
        result = train(config, params, [args.stage], data, args.train_seed)
        probe_name, probe_value = _probe(config, bench, args.stage, result.params, data)

    name = CHECKPOINT_NAMES[args.stage]
    meta = training_meta(
        config,
        bench,
        {"init": init, "train_seed": str(args.train_seed)},
    )
    save_stage_checkpoint(config.workspace.checkpoint(name), meta, result.params)
    write_training_log(config.workspace.training_log(name), meta, result.log)

    lines = _summary_lines(result.stages[0], color_enabled)
    lines.extend(format_key_values([(probe_name, probe_value)], color_enabled))
    emit(console, lines, color_enabled)


def run_finetune(args: FinetuneArgs, config: pathrank.config.app.RunConfig) -> None:
    """Fine-tune for path selection with early stopping on val-unseen selection success."""
    config = resolve_run_config(args, config)
    console, color_enabled = open_console(args)
    init = args.init or DEFAULT_INIT["ft"]
    bench = load_benchmark(config)
    params = _initial_params(config, bench, init, args.train_seed)
    train_meta, train_sets = load_split_candidates(config, bench, TRAIN)
    _, val_sets = load_split_candidates(config, bench, VAL_UNSEEN)
    data = curriculum_data(
        config,
        bench,
        ["ft"],
        train_candidates=train_sets,
        early_stop_candidates=val_sets,
    )
    with processing_status(console, color_enabled, "Fine-tuning..."):
        result = train(config, params, ["ft"], data, args.train_seed)

    name = CHECKPOINT_NAMES["ft"]
    meta = training_meta(
        config,
        bench,
        {
            "init": init,
            "train_seed": str(args.train_seed),
            "candidates": train_meta.config_hash,
        },
    )
    save_stage_checkpoint(config.workspace.checkpoint(name), meta, result.params)
    write_training_log(config.workspace.training_log(name), meta, result.log)

    stage = result.stages[0]
    lines = _summary_lines(stage, color_enabled)
    lines.extend(format_key_values([("Training quads", len(data.quads))], color_enabled))
    if stage.validation:
        lines.extend(format_key_values([("Best epoch", stage.best_epoch)], color_enabled))
        lines.extend(
            format_table(
                [
                    {"epoch": epoch, "val_unseen selection %": 100.0 * value}
                    for epoch, value in enumerate(stage.validation)
                ],
                TableConfig(
                    columns=("epoch", "val_unseen selection %"),
                    color_enabled=color_enabled,
                ),
            ),
        )
    emit(console, lines, color_enabled)


def register(app: typer.Typer, app_config: pathrank.config.app.RunConfig) -> None:
    """Register the training commands."""

    @app.command("pretrain")
    def pretrain(
        ctx: typer.Context,
        stage: str = typer.Option(
            ...,
            "--stage",
            metavar="N",
            help="Pretraining stage: 1 (language), 2 (visual grounding), 3 (action grounding)",
        ),
        init: str | None = typer.Option(
            None,
            "--from",
            metavar="NAME",
            help="Checkpoint to start from, or 'scratch' (default: the previous stage)",
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
            help="Override one config value, e.g. stages.stage1.epochs=3 (can specify multiple)",
        ),
        train_seed: int = typer.Option(
            app_config.seed,
            "--train-seed",
            metavar="N",
            help="Seed of initialization, shuffling, masking and dropout",
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
        """Run one pretraining stage of the curriculum."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = PretrainArgs(
            config=config,
            overrides=overrides,
            stage=stage,
            init=init,
            train_seed=train_seed,
            workdir=workdir,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("pretrain", args, app_config)
        run_pretrain(args, app_config)

    @app.command("finetune")
    def finetune(
        ctx: typer.Context,
        init: str | None = typer.Option(
            None,
            "--from",
            metavar="NAME",
            help="Checkpoint to start from, or 'scratch' (default: stage3)",
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
            help="Override one config value, e.g. stages.finetune.lr=5e-4 (can specify multiple)",
        ),
        train_seed: int = typer.Option(
            app_config.seed,
            "--train-seed",
            metavar="N",
            help="Seed of initialization, shuffling and dropout",
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
        """Fine-tune the model for path selection."""
        app_config = pathrank.config.app.require_app_config(ctx)
        args = FinetuneArgs(
            config=config,
            overrides=overrides,
            init=init,
            train_seed=train_seed,
            workdir=workdir,
            color_flag=color_flag,
        )
        pathrank.logging.log_command("finetune", args, app_config)
        run_finetune(args, app_config)
