"""Tests for pathrank.training.objectives."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from pathrank.logic.envgraph import make_trajectory
from pathrank.logic.featurize import text_only_sequence
from pathrank.model.network import ParamScope, forward, score_sequence
from pathrank.model.scoring import path_sequence
from pathrank.training.objectives import (
    MaskingPlan,
    apply_plan,
    finetune_loss,
    masked_modelling_loss,
    masking_rng,
    plan_masks,
    stage1_loss,
    stage2_loss,
    stage3_loss,
)
from tests.conftest import (
    FEATURE_DIM,
    line_graph,
    lively_params,
    make_episode,
    node,
    numeric_gradient,
    observe,
    selection_score_gradient,
    small_catalog,
    small_vocab,
    tiny_params,
)


if TYPE_CHECKING:
    from pathrank.autodiff.tape import Tensor
    from pathrank.logic.featurize import MultimodalSequence
    from pathrank.logic.vocab import Vocabulary
    from pathrank.model.params import ModelParams


def _path_seq(params: ModelParams, vocab: Vocabulary, n_nodes: int = 3) -> MultimodalSequence:
    catalog = small_catalog()
    graph = line_graph()
    path = [node(graph, str(i)) for i in range(n_nodes)]
    episode = make_episode(graph, path, vocab)
    return path_sequence(
        params,
        observe([graph], catalog),
        vocab,
        make_trajectory(graph, path, 0.0),
        episode.instruction.tokens,
    )


def _total(tensor: Tensor) -> float:
    return float(np.asarray(tensor.data).reshape(()))


def test_plans_never_touch_special_tokens_or_img_rows() -> None:
    """Separators, [CLS], padding and IMG markers are never masked."""
    vocab = small_vocab()
    params = tiny_params(vocab)
    seq = _path_seq(params, vocab).padded(3, vocab.pad)

    for example in range(50):
        plan = plan_masks(seq, vocab, masking_rng(0, example), rate=0.5)

        assert plan.text_positions
        assert plan.region_rows
        for position in plan.text_positions:
            assert int(seq.text_ids[position]) not in vocab.special_ids
            assert seq.text_mask[position] == 1.0
        assert all(seq.visual_region[row] >= 0 for row in plan.region_rows)
        assert plan.text_targets == tuple(int(seq.text_ids[p]) for p in plan.text_positions)
        assert plan.region_targets == tuple(int(seq.visual_classes[r]) for r in plan.region_rows)


def test_plans_mask_at_least_one_per_stream() -> None:
    """A vanishing rate still masks one token and one region."""
    vocab = small_vocab()
    seq = _path_seq(tiny_params(vocab), vocab)

    plan = plan_masks(seq, vocab, masking_rng(1, 0), rate=1e-9)

    assert len(plan.text_positions) == 1
    assert len(plan.region_rows) == 1


def test_plans_respect_stream_switches_and_candidates() -> None:
    """Streams can be switched off and text masking restricted to given positions."""
    vocab = small_vocab()
    seq = _path_seq(tiny_params(vocab), vocab)

    text_only = plan_masks(seq, vocab, masking_rng(0, 0), mask_regions=False)
    regions_only = plan_masks(seq, vocab, masking_rng(0, 0), mask_text=False)
    restricted = plan_masks(seq, vocab, masking_rng(0, 0), rate=1.0, text_candidates=[0, 2, 3])

    assert text_only.region_rows == ()
    assert regions_only.text_positions == ()
    np.testing.assert_array_equal(regions_only.text_inputs, seq.text_ids)
    assert restricted.text_positions == (2, 3)


def test_plans_are_reproducible() -> None:
    """The same seed, example and epoch give the same plan; another epoch differs."""
    vocab = small_vocab()
    seq = _path_seq(tiny_params(vocab), vocab, n_nodes=5)

    first = plan_masks(seq, vocab, masking_rng(3, 7, 0), rate=0.3)
    again = plan_masks(seq, vocab, masking_rng(3, 7, 0), rate=0.3)
    plans = {
        plan_masks(seq, vocab, masking_rng(3, 7, epoch), rate=0.3).text_positions
        for epoch in range(8)
    }

    assert first.text_positions == again.text_positions
    np.testing.assert_array_equal(first.text_inputs, again.text_inputs)
    assert len(plans) > 1


def test_chosen_tokens_follow_the_replacement_split() -> None:
    """About 80% of chosen tokens become [MASK], 10% random words, 10% unchanged."""
    vocab = small_vocab()
    seq = text_only_sequence([vocab.id("walk")] * 20, vocab, FEATURE_DIM)
    masked = changed = total = 0

    for example in range(600):
        plan = plan_masks(seq, vocab, masking_rng(9, example), rate=1.0, mask_regions=False)
        inputs = plan.text_inputs[list(plan.text_positions)]
        total += inputs.size
        masked += int((inputs == vocab.mask).sum())
        changed += int(((inputs != vocab.mask) & (inputs != vocab.id("walk"))).sum())

    assert total == 600 * 20
    assert masked / total == pytest.approx(0.8, abs=0.03)
    assert changed / total == pytest.approx(0.1, abs=0.03)


def test_apply_plan_zeroes_masked_regions() -> None:
    """Masked region rows lose their features; other rows are untouched."""
    vocab = small_vocab()
    seq = _path_seq(tiny_params(vocab), vocab)
    plan = plan_masks(seq, vocab, masking_rng(0, 1), rate=0.5)

    applied = apply_plan(seq, plan)

    np.testing.assert_array_equal(applied.visual_features[list(plan.region_rows)], 0.0)
    kept = [row for row in range(seq.n_visual) if row not in plan.region_rows]
    np.testing.assert_array_equal(applied.visual_features[kept], seq.visual_features[kept])
    np.testing.assert_array_equal(applied.text_ids, plan.text_inputs)


def test_empty_plan_gives_zero_loss() -> None:
    """Nothing masked and no alignment target contributes nothing."""
    vocab = small_vocab()
    params = tiny_params(vocab)
    seq = _path_seq(params, vocab)
    plan = MaskingPlan((), (), seq.text_ids.copy(), (), ())

    parts = masked_modelling_loss(ParamScope(params), seq, plan)

    assert plan.empty
    assert parts.parts == {"mlm": 0.0, "region": 0.0}
    assert _total(parts.total) == 0.0


def test_stage_losses_report_their_parts() -> None:
    """Every stage names its loss components; mismatched pairs only train alignment."""
    vocab = small_vocab()
    params = tiny_params(vocab)
    seq = _path_seq(params, vocab)
    plan = plan_masks(seq, vocab, masking_rng(0, 0), rate=0.5)
    pair = text_only_sequence([30, 31], vocab, FEATURE_DIM, [32, 33])
    pair_plan = plan_masks(pair, vocab, masking_rng(0, 0), mask_regions=False)

    first = stage1_loss(ParamScope(params), pair, pair_plan, is_next=True)
    matched = stage2_loss(ParamScope(params), seq, plan, matched=True)
    mismatched = stage2_loss(ParamScope(params), seq, plan, matched=False)
    third = stage3_loss(ParamScope(params), seq, plan)

    assert set(first.parts) == {"mlm", "nsp"}
    assert set(matched.parts) == {"mlm", "region", "align"}
    assert mismatched.parts["mlm"] == 0.0
    assert mismatched.parts["region"] == 0.0
    assert mismatched.parts["align"] > 0.0
    assert set(third.parts) == {"mlm", "region"}
    assert _total(third.total) == pytest.approx(sum(third.parts.values()), rel=1e-5)


def test_finetune_loss_is_softmax_cross_entropy_over_scores() -> None:
    """The selection loss equals -log softmax of the positive member's score."""
    vocab = small_vocab()
    params = lively_params(vocab)
    seqs = [_path_seq(params, vocab, n) for n in (1, 2, 3, 4)]

    parts = finetune_loss(ParamScope(params), seqs, positive=2)

    scores = np.array([score_sequence(params, seq) for seq in seqs])
    expected = -(scores[2] - scores.max() - np.log(np.exp(scores - scores.max()).sum()))
    assert parts.parts["select"] == pytest.approx(expected, rel=1e-9)
    assert _total(parts.total) == pytest.approx(expected, rel=1e-9)


def test_selection_gradient_is_softmax_minus_onehot() -> None:
    """The closed-form score gradient matches finite differences of the loss."""
    scores = np.array([0.3, -1.2, 2.0, 0.7])

    def loss(values: np.ndarray) -> float:
        shifted = values - values.max()
        return float(-(shifted[1] - np.log(np.exp(shifted).sum())))

    gradient = selection_score_gradient(scores, positive=1)

    np.testing.assert_allclose(gradient, numeric_gradient(loss, scores), atol=1e-8)
    assert gradient.sum() == pytest.approx(0.0)


def test_finetune_score_weight_gradient_follows_closed_form() -> None:
    """Backpropagating the selection loss to `score.w` weighs each pooled product by p - onehot."""
    vocab = small_vocab()
    params = lively_params(vocab)
    seqs = [_path_seq(params, vocab, n) for n in (1, 2, 3, 4)]
    frozen = ParamScope(params, trainable=False)
    encoded = [forward(frozen, seq) for seq in seqs]
    pooled = np.stack([(item.h_cls.data * item.h_img.data).ravel() for item in encoded])
    weights = selection_score_gradient(pooled @ params["score.w"].ravel(), positive=3)
    scope = ParamScope(params)

    analytic = scope.gradients(finetune_loss(scope, seqs, positive=3).total)["score.w"]

    np.testing.assert_allclose(
        analytic,
        (weights @ pooled).reshape(params["score.w"].shape),
        rtol=1e-7,
        atol=1e-10,
    )



def test_finetune_parameter_gradient_matches_finite_differences() -> None:
    """Selection-loss gradients reach the scoring weights exactly."""
    vocab = small_vocab()
    params = lively_params(vocab)
    seqs = [_path_seq(params, vocab, n) for n in (1, 2, 3, 4)]
    scope = ParamScope(params)

    analytic = scope.gradients(finetune_loss(scope, seqs, positive=0).total)["score.w"]

    numeric = numeric_gradient(
        lambda value: finetune_loss(
            ParamScope(params.replace({"score.w": value})),
            seqs,
            positive=0,
        ).parts["select"],
        params["score.w"],
    )
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-9)


def test_stage3_parameter_gradient_matches_finite_differences() -> None:
    """Masked-region loss gradients reach the region decoder."""
    vocab = small_vocab()
    params = lively_params(vocab)
    seq = _path_seq(params, vocab)
    plan = plan_masks(seq, vocab, masking_rng(0, 2), rate=0.5)
    scope = ParamScope(params)

    analytic = scope.gradients(stage3_loss(scope, seq, plan).total)["region.decoder.w"]

    numeric = numeric_gradient(
        lambda value: _total(
            stage3_loss(ParamScope(params.replace({"region.decoder.w": value})), seq, plan).total,
        ),
        params["region.decoder.w"],
    )
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-9)
