"""Staged pretraining curriculum followed by path-selection fine-tuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from pathrank.autodiff import NonFiniteError
from pathrank.logic.errors import TrainingDivergedError
from pathrank.logic.featurize import single_panorama_sequence, text_only_sequence
from pathrank.model.network import ParamScope
from pathrank.model.scoring import CompatScorer, path_sequence, selection_success_rate
from pathrank.training.corpora import CaptionPair, PathPair, QuadExample, SentencePair
from pathrank.training.objectives import (
    DEFAULT_MASK_RATE,
    LossParts,
    finetune_loss,
    masking_rng,
    plan_masks,
    stage1_loss,
    stage2_loss,
    stage3_loss,
)
from pathrank.training.optim import (
    Adam,
    LinearSchedule,
    accumulate,
    gradients_finite,
    scale_gradients,
)


if TYPE_CHECKING:
    from collections.abc import Callable, Mapping, Sequence

    from numpy.typing import NDArray

    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import PanoramaObservation
    from pathrank.logic.mining import CandidateSet
    from pathrank.logic.vocab import Vocabulary
    from pathrank.model.params import ModelParams


logger = logging.getLogger("pathrank")

STAGE_ORDER = ("1", "2", "3", "ft")
STAGE_NAMES = {
    "1": "language",
    "2": "visual grounding",
    "3": "action grounding",
    "ft": "path selection",
}
OBJECTIVES: dict[str, tuple[str, ...]] = {
    "1": ("mlm", "nsp"),
    "2": ("mlm", "region", "align"),
    "3": ("mlm", "region"),
    "ft": ("select",),
}
LOG_COLUMNS = ("step", "stage", "loss", "mlm", "nsp", "region", "align", "select", "lr")

type Example = SentencePair | CaptionPair | PathPair | QuadExample


@dataclass(frozen=True)
class StageSpec:
    """Hyperparameters of one curriculum stage."""

    stage: str
    epochs: int = 1
    lr: float = 1e-3
    batch_size: int = 8
    warmup_fraction: float = 0.1
    mask_rate: float = DEFAULT_MASK_RATE
    corpus_size: int = 500
    patience: int = 3

    def __post_init__(self) -> None:
        """Validate the stage name and numeric ranges."""
        if self.stage not in STAGE_ORDER:
            raise ValueError(f"unknown stage '{self.stage}', expected one of {STAGE_ORDER}")
        if self.epochs < 0:
            raise ValueError("epochs cannot be negative")
        if self.lr <= 0.0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup fraction must be in [0, 1]")
        if not 0.0 < self.mask_rate <= 1.0:
            raise ValueError("mask rate must be in (0, 1]")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")

    @property
    def objectives(self) -> tuple[str, ...]:
        """Loss terms this stage optimizes."""
        return OBJECTIVES[self.stage]

    @property
    def order(self) -> int:
        """Position of the stage in the curriculum."""
        return STAGE_ORDER.index(self.stage)


@dataclass(frozen=True)
class EarlyStopSet:
    """Validation candidate sets used to pick the best fine-tuning epoch."""

    episodes: Mapping[str, EpisodeSpec]
    candidate_sets: Sequence[CandidateSet]


@dataclass(frozen=True)
class CurriculumData:
    """Corpora for every stage plus what fine-tuning needs to encode paths."""

    vocab: Vocabulary
    panoramas: Mapping[str, PanoramaObservation]
    sentences: Sequence[SentencePair] = ()
    captions: Sequence[CaptionPair] = ()
    paths: Sequence[PathPair] = ()
    quads: Sequence[QuadExample] = ()
    early_stop: EarlyStopSet | None = None

    def examples(self, stage: str) -> Sequence[Example]:
        """Corpus of one stage."""
        corpora: dict[str, Sequence[Example]] = {
            "1": self.sentences,
            "2": self.captions,
            "3": self.paths,
            "ft": self.quads,
        }
        return corpora[stage]


@dataclass(frozen=True)
class LogRow:
    """One optimizer step of the training log."""

    step: int
    stage: str
    loss: float
    parts: dict[str, float]
    lr: float

    def as_row(self) -> dict[str, object]:
        """Row keyed by the training-log CSV columns."""
        row: dict[str, object] = {"step": self.step, "stage": self.stage, "loss": self.loss}
        for name in LOG_COLUMNS[3:-1]:
            row[name] = self.parts.get(name, "")
        row["lr"] = self.lr
        return row


@dataclass
class StageResult:
    """Parameters after one stage with its log and, for fine-tuning, validation history."""

    spec: StageSpec
    params: ModelParams
    log: list[LogRow] = field(default_factory=list)
    validation: list[float] = field(default_factory=list)
    best_epoch: int | None = None


def example_loss(
    scope: ParamScope,
    stage: str,
    example: Example,
    data: CurriculumData,
    rng: np.random.Generator,
    mask_rate: float = DEFAULT_MASK_RATE,
) -> LossParts:
    """Loss of one example under its stage's objectives."""
    vocab = data.vocab
    config = scope.config
    if stage == "1" and isinstance(example, SentencePair):
        seq = text_only_sequence(example.first, vocab, config.d_v, example.second)
        plan = plan_masks(seq, vocab, rng, rate=mask_rate, mask_regions=False)
        return stage1_loss(scope, seq, plan, example.is_next)
    if stage == "2" and isinstance(example, CaptionPair):
        seq = single_panorama_sequence(example.panorama, example.caption, vocab, config.d_v)
        plan = plan_masks(
            seq,
            vocab,
            rng,
            rate=mask_rate,
            mask_text=example.matched,
            mask_regions=example.matched,
        )
        return stage2_loss(scope, seq, plan, example.matched)
    if stage == "3" and isinstance(example, PathPair):
        seq = path_sequence(scope.params, data.panoramas, vocab, example.trajectory, example.tokens)
        plan = plan_masks(seq, vocab, rng, rate=mask_rate)
        return stage3_loss(scope, seq, plan)
    if stage == "ft" and isinstance(example, QuadExample):
        seqs = [
            path_sequence(scope.params, data.panoramas, vocab, trajectory, example.tokens)
            for trajectory in example.trajectories
        ]
        return finetune_loss(scope, seqs, example.positive)
    raise TypeError(f"stage {stage} cannot train on {type(example).__name__}")


def _loss_value(parts: LossParts) -> float:
    return float(np.asarray(parts.total.data).reshape(()))


def train_stage(
    params: ModelParams,
    spec: StageSpec,
    data: CurriculumData,
    seed: int,
    *,
    log_every: int = 10,
) -> StageResult:
    """Train one stage with Adam over shuffled minibatches.

    Fine-tuning with an early-stop set keeps the parameters of the epoch with the best
    validation selection success and stops after `patience` epochs without improvement.
    """
    examples = data.examples(spec.stage)
    result = StageResult(spec=spec, params=params)
    if not examples or spec.epochs == 0:
        logger.info("Stage %s: nothing to train", spec.stage)
        return result

    batches_per_epoch = math.ceil(len(examples) / spec.batch_size)
    schedule = LinearSchedule(spec.lr, spec.epochs * batches_per_epoch, spec.warmup_fraction)
    optimizer = Adam()
    order_rng = np.random.default_rng([seed, spec.order])
    best_sr: float | None = None
    stale = 0
    step = 0
    for epoch in range(spec.epochs):
        order = order_rng.permutation(len(examples))
        for start in range(0, len(order), spec.batch_size):
            batch = [examples[int(i)] for i in order[start : start + spec.batch_size]]
            params, row = _train_step(
                params,
                spec,
                batch,
                data,
                seed,
                (epoch, step),
                optimizer,
                schedule.lr(step),
            )
            result.log.append(row)
            if step % log_every == 0:
                logger.info(
                    "Stage %s step %d: loss=%.4f %s lr=%.2e",
                    spec.stage,
                    step,
                    row.loss,
                    " ".join(f"{k}={v:.4f}" for k, v in row.parts.items()),
                    row.lr,
                )
            step += 1

        if spec.stage != "ft" or data.early_stop is None:
            result.params = params
            continue
        scorer = CompatScorer(params, data.panoramas, data.vocab)
        sr = selection_success_rate(
            scorer,
            data.early_stop.episodes,
            data.early_stop.candidate_sets,
        )
        result.validation.append(sr)
        logger.info("Fine-tuning epoch %d: validation selection success %.4f", epoch, sr)
        if best_sr is None or sr > best_sr:
            best_sr = sr
            result.params = params
            result.best_epoch = epoch
            stale = 0
            continue
        stale += 1
        if stale >= spec.patience:
            logger.info("Early stopping after epoch %d, best epoch %s", epoch, result.best_epoch)
            break
    return result


def _train_step(
    params: ModelParams,
    spec: StageSpec,
    batch: Sequence[Example],
    data: CurriculumData,
    seed: int,
    position: tuple[int, int],
    optimizer: Adam,
    lr: float,
) -> tuple[ModelParams, LogRow]:
    epoch, step = position
    grads: dict[str, NDArray[np.floating]] = {}
    totals: dict[str, float] = dict.fromkeys(spec.objectives, 0.0)
    loss_sum = 0.0
    for example in batch:
        dropout_rng = np.random.default_rng([seed, spec.order, step, example.id])
        scope = ParamScope(params, rng=dropout_rng)
        rng = masking_rng(seed, example.id, epoch)
        try:
            parts = example_loss(scope, spec.stage, example, data, rng, spec.mask_rate)
            example_grads = scope.gradients(parts.total)
        except NonFiniteError as err:
            raise TrainingDivergedError(spec.stage, step, str(err)) from err
        value = _loss_value(parts)
        if not math.isfinite(value):
            raise TrainingDivergedError(spec.stage, step, f"loss is {value}")
        loss_sum += value
        for name, part in parts.parts.items():
            totals[name] = totals.get(name, 0.0) + part
        accumulate(grads, example_grads)

    grads = scale_gradients(grads, 1.0 / len(batch))
    if not gradients_finite(grads):
        raise TrainingDivergedError(spec.stage, step, "gradient is not finite")
    row = LogRow(
        step=step,
        stage=spec.stage,
        loss=loss_sum / len(batch),
        parts={name: value / len(batch) for name, value in totals.items()},
        lr=lr,
    )
    return optimizer.step(params, grads, lr), row


@dataclass
class CurriculumResult:
    """Final parameters and the results of every stage, in order."""

    params: ModelParams
    stages: list[StageResult] = field(default_factory=list)

    @property
    def log(self) -> list[LogRow]:
        """Training log of every stage, in stage order."""
        return [row for stage in self.stages for row in stage.log]


def check_stage_order(stages: Sequence[StageSpec]) -> None:
    """Reject repeated or out-of-order stages."""
    orders = [spec.order for spec in stages]
    if orders != sorted(set(orders)):
        names = ", ".join(spec.stage for spec in stages)
        raise ValueError(f"stages must run once each in curriculum order, got: {names}")


def run_curriculum(
    params: ModelParams,
    stages: Sequence[StageSpec],
    data: CurriculumData,
    seed: int,
    *,
    log_every: int = 10,
    on_stage_end: Callable[[StageResult], None] | None = None,
) -> CurriculumResult:
    """Run stages in order, each starting from the parameters the previous one produced."""
    check_stage_order(stages)
    result = CurriculumResult(params=params)
    for spec in stages:
        logger.info("Stage %s (%s): %s", spec.stage, STAGE_NAMES[spec.stage], spec)
        stage = train_stage(result.params, spec, data, seed, log_every=log_every)
        result.stages.append(stage)
        result.params = stage.params
        if on_stage_end is not None:
            on_stage_end(stage)
    return result
