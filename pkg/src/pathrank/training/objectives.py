"""Masking plans and the losses of every curriculum stage."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.autodiff import ops
from pathrank.model.network import (
    ParamScope,
    compatibility_score,
    forward,
    head_alignment,
    head_masked_lm,
    head_masked_region,
    head_next_sentence,
)


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from pathrank.autodiff.tape import Tensor
    from pathrank.logic.featurize import MultimodalSequence
    from pathrank.logic.vocab import Vocabulary


DEFAULT_MASK_RATE = 0.15
MASK_SHARE = 0.8
RANDOM_SHARE = 0.1


@dataclass(frozen=True)
class MaskingPlan:
    """Masked text positions with their original ids, masked region rows with their classes."""

    text_positions: tuple[int, ...]
    text_targets: tuple[int, ...]
    text_inputs: NDArray[np.int64]
    region_rows: tuple[int, ...]
    region_targets: tuple[int, ...]

    @property
    def empty(self) -> bool:
        """Return True when nothing is masked."""
        return not self.text_positions and not self.region_rows


def masking_rng(seed: int, example_id: int, epoch: int = 0) -> np.random.Generator:
    """Generator that makes a masking plan reproducible from (seed, example id, epoch)."""
    return np.random.default_rng([seed, example_id, epoch])


def _choose(
    rng: np.random.Generator,
    candidates: NDArray[np.int64],
    rate: float,
) -> NDArray[np.int64]:
    if candidates.size == 0:
        return candidates
    picked = candidates[rng.random(candidates.size) < rate]
    if picked.size == 0:
        picked = candidates[[int(rng.integers(candidates.size))]]
    return np.sort(picked)


def plan_masks(
    seq: MultimodalSequence,
    vocab: Vocabulary,
    rng: np.random.Generator,
    *,
    rate: float = DEFAULT_MASK_RATE,
    mask_text: bool = True,
    mask_regions: bool = True,
    text_candidates: Sequence[int] | None = None,
) -> MaskingPlan:
    """Pick positions to mask at `rate`, at least one per active stream.

    Special tokens and IMG markers are never chosen. Chosen text positions become
    [MASK] 80% of the time, a random non-special token 10% and stay unchanged 10%.
    """
    specials = vocab.special_ids
    ids = seq.text_ids
    real = seq.text_mask > 0
    if text_candidates is None:
        eligible = np.flatnonzero(real & ~np.isin(ids, list(specials))).astype(np.int64)
    else:
        eligible = np.asarray(
            [p for p in text_candidates if real[p] and int(ids[p]) not in specials],
            dtype=np.int64,
        )
    text_positions = _choose(rng, eligible, rate) if mask_text else eligible[:0]

    inputs = ids.copy()
    word_ids = np.asarray([i for i in range(vocab.size) if i not in specials], dtype=np.int64)
    for position in text_positions:
        draw = rng.random()
        if draw < MASK_SHARE:
            inputs[position] = vocab.mask
        elif draw < MASK_SHARE + RANDOM_SHARE:
            inputs[position] = word_ids[int(rng.integers(word_ids.size))]

    region_candidates = seq.region_rows
    region_rows = _choose(rng, region_candidates, rate) if mask_regions else region_candidates[:0]
    return MaskingPlan(
        text_positions=tuple(int(p) for p in text_positions),
        text_targets=tuple(int(ids[p]) for p in text_positions),
        text_inputs=inputs,
        region_rows=tuple(int(r) for r in region_rows),
        region_targets=tuple(int(seq.visual_classes[r]) for r in region_rows),
    )


def apply_plan(seq: MultimodalSequence, plan: MaskingPlan) -> MultimodalSequence:
    """Sequence with masked tokens replaced and masked region features zeroed."""
    masked = seq.with_text(plan.text_inputs, seq.text_segments, seq.text_mask)
    if not plan.region_rows:
        return masked
    features = seq.visual_features.copy()
    features[list(plan.region_rows)] = 0.0
    return masked.with_visual_features(features)


@dataclass(frozen=True)
class LossParts:
    """Total loss tensor and its named components as floats."""

    total: Tensor
    parts: dict[str, float]


def _zero(scope: ParamScope) -> Tensor:
    return scope.tape.constant(0.0)


def _value(tensor: Tensor) -> float:
    return float(np.asarray(tensor.data).reshape(()))


def _masked_lm_loss(scope: ParamScope, text: Tensor, plan: MaskingPlan) -> Tensor:
    rows = ops.embedding_lookup(text, plan.text_positions)
    logp = ops.log_softmax(head_masked_lm(scope, rows), axis=1)
    return ops.nll_rows(logp, plan.text_targets)


def _masked_region_loss(scope: ParamScope, visual: Tensor, plan: MaskingPlan) -> Tensor:
    rows = ops.embedding_lookup(visual, plan.region_rows)
    logp = ops.log_softmax(head_masked_region(scope, rows), axis=1)
    return ops.nll_rows(logp, plan.region_targets)


def _sum(scope: ParamScope, terms: dict[str, Tensor | None]) -> LossParts:
    total = _zero(scope)
    parts: dict[str, float] = {}
    for name, term in terms.items():
        if term is None:
            parts[name] = 0.0
            continue
        total = ops.add(total, ops.sum_all(term))
        parts[name] = _value(term)
    return LossParts(total=total, parts=parts)


def masked_modelling_loss(
    scope: ParamScope,
    seq: MultimodalSequence,
    plan: MaskingPlan,
    *,
    alignment_target: float | None = None,
) -> LossParts:
    """Masked-LM plus masked-region losses, with an optional alignment term.

    A sequence with nothing masked and no alignment target yields a zero loss.
    """
    if plan.empty and alignment_target is None:
        return _sum(scope, {"mlm": None, "region": None})
    encoded = forward(scope, apply_plan(seq, plan))
    terms: dict[str, Tensor | None] = {
        "mlm": _masked_lm_loss(scope, encoded.text, plan) if plan.text_positions else None,
        "region": (
            _masked_region_loss(scope, encoded.visual, plan) if plan.region_rows else None
        ),
    }
    if alignment_target is not None:
        logit = head_alignment(scope, encoded.h_cls, encoded.h_img)
        terms["align"] = ops.bce_with_logit(logit, alignment_target)
    return _sum(scope, terms)


def stage1_loss(
    scope: ParamScope,
    seq: MultimodalSequence,
    plan: MaskingPlan,
    is_next: bool,
) -> LossParts:
    """Masked-LM over a sentence pair plus next-sentence prediction."""
    encoded = forward(scope, apply_plan(seq, plan))
    logit = head_next_sentence(scope, encoded.h_cls)
    terms: dict[str, Tensor | None] = {
        "mlm": _masked_lm_loss(scope, encoded.text, plan) if plan.text_positions else None,
        "nsp": ops.bce_with_logit(logit, 1.0 if is_next else 0.0),
    }
    return _sum(scope, terms)


def stage2_loss(
    scope: ParamScope,
    seq: MultimodalSequence,
    plan: MaskingPlan,
    matched: bool,
) -> LossParts:
    """Masked multimodal modelling on matched pairs plus alignment on every pair."""
    if matched:
        return masked_modelling_loss(scope, seq, plan, alignment_target=1.0)
    encoded = forward(scope, seq)
    logit = head_alignment(scope, encoded.h_cls, encoded.h_img)
    return _sum(scope, {"mlm": None, "region": None, "align": ops.bce_with_logit(logit, 0.0)})


def stage3_loss(scope: ParamScope, seq: MultimodalSequence, plan: MaskingPlan) -> LossParts:
    """Masked multimodal modelling over a full path-instruction sequence."""
    return masked_modelling_loss(scope, seq, plan)


def finetune_loss(
    scope: ParamScope,
    seqs: Sequence[MultimodalSequence],
    positive: int,
) -> LossParts:
    """Cross-entropy of the softmax over compatibility scores against the positive member."""
    scores = [compatibility_score(scope, forward(scope, seq)) for seq in seqs]
    row = ops.transpose(ops.concat(scores, axis=0))
    loss = ops.nll_rows(ops.log_softmax(row, axis=1), [positive])
    return LossParts(total=loss, parts={"select": _value(loss)})
