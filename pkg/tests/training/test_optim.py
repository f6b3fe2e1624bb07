"""Tests for pathrank.training.optim."""

from __future__ import annotations

import numpy as np
import pytest

from pathrank.training.optim import (
    Adam,
    LinearSchedule,
    accumulate,
    gradients_finite,
    scale_gradients,
)
from tests.conftest import small_vocab, tiny_params


def test_schedule_warms_up_then_decays_to_zero() -> None:
    """Learning rate rises linearly over warmup and falls linearly to zero."""
    schedule = LinearSchedule(peak_lr=1.0, total_steps=10, warmup_fraction=0.2)

    assert schedule.warmup_steps == 2
    assert schedule.lr(0) == pytest.approx(0.5)
    assert schedule.lr(1) == pytest.approx(1.0)
    assert schedule.lr(2) == pytest.approx(7 / 8)
    assert schedule.lr(9) == 0.0
    rates = [schedule.lr(step) for step in range(1, 10)]
    assert rates == sorted(rates, reverse=True)


def test_schedule_has_at_least_one_warmup_step() -> None:
    """A zero warmup fraction still starts at the peak rate."""
    schedule = LinearSchedule(peak_lr=0.1, total_steps=4, warmup_fraction=0.0)

    assert schedule.warmup_steps == 1
    assert schedule.lr(0) == pytest.approx(0.1)


def test_adam_first_step_moves_against_gradient_sign() -> None:
    """The bias-corrected first step has magnitude lr in every coordinate."""
    params = tiny_params(small_vocab(), dtype=np.float64)
    grad = np.array([[2.0], [-0.5], [0.0], [1e-3], [3.0], [-3.0], [0.1], [-0.1]])
    optimizer = Adam()

    updated = optimizer.step(params, {"score.w": grad}, lr=0.01)

    expected = params["score.w"] - 0.01 * np.sign(grad)
    np.testing.assert_allclose(updated["score.w"], expected, atol=1e-7)
    np.testing.assert_array_equal(updated["vis.proj.w"], params["vis.proj.w"])
    assert optimizer.step_count == 1


def test_adam_keeps_dtype_and_state() -> None:
    """Updates keep the parameter dtype and accumulate moment estimates."""
    params = tiny_params(small_vocab())
    optimizer = Adam()
    grads = {"score.w": np.ones((8, 1), dtype=np.float32)}

    first = optimizer.step(params, grads, lr=0.1)
    second = optimizer.step(first, grads, lr=0.1)

    assert second["score.w"].dtype == np.float32
    assert optimizer.step_count == 2
    np.testing.assert_allclose(second["score.w"], params["score.w"] - 0.2, atol=1e-5)


def test_gradient_helpers() -> None:
    """Accumulation sums in place, scaling multiplies, finiteness checks every array."""
    total: dict[str, np.ndarray] = {}
    accumulate(total, {"a": np.ones(2)})
    accumulate(total, {"a": np.ones(2), "b": np.full(1, 3.0)})

    np.testing.assert_array_equal(total["a"], [2.0, 2.0])
    np.testing.assert_array_equal(scale_gradients(total, 0.5)["b"], [1.5])
    assert gradients_finite(total)
    assert not gradients_finite({"a": np.array([1.0, np.nan])})
