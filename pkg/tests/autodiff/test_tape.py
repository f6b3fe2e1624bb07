"""Tests for pathrank.autodiff.tape."""

from __future__ import annotations

import numpy as np
import pytest

from pathrank.autodiff import ops
from pathrank.autodiff.errors import BackwardError
from pathrank.autodiff.tape import Tape, backward


def test_default_dtype_is_float32() -> None:
    """Tapes compute in float32 unless told otherwise."""
    tape = Tape()

    assert tape.leaf([1.0, 2.0]).data.dtype == np.float32
    assert Tape(np.float64).leaf([1.0]).data.dtype == np.float64


def test_tensor_data_is_read_only() -> None:
    """Recorded values cannot be mutated in place."""
    tape = Tape()
    x = tape.leaf(np.zeros((2, 2)))

    with pytest.raises(ValueError, match="read-only"):
        x.data[0, 0] = 1.0


def test_reused_leaf_accumulates_gradient() -> None:
    """A tensor used twice should receive the sum of both contributions."""
    tape = Tape(np.float64)
    x = tape.leaf(np.array([[1.0, -2.0]]))

    grads = backward(tape, ops.sum_all(ops.add(x, x)), {"x": x})

    np.testing.assert_array_equal(grads["x"], [[2.0, 2.0]])


def test_unrelated_tensor_gets_zero_gradient() -> None:
    """Tensors the loss does not depend on should get zeros of their shape."""
    tape = Tape()
    x = tape.leaf(np.ones((2, 3)))
    unused = tape.leaf(np.ones((4,)))

    grads = backward(tape, ops.sum_all(x), {"x": x, "unused": unused})

    np.testing.assert_array_equal(grads["unused"], np.zeros(4))
    np.testing.assert_array_equal(grads["x"], np.ones((2, 3)))


def test_constants_are_not_recorded() -> None:
    """Ops over constants only should leave the tape empty."""
    tape = Tape()
    a = tape.constant(np.ones((2, 2)))
    b = tape.constant(np.ones((2, 2)))

    out = ops.matmul(a, b)

    assert tape.entries == []
    assert out.requires_grad is False
    assert tape.is_tracked(out.node) is False


def test_constant_operand_gets_zero_gradient() -> None:
    """Gradients should not flow into constants mixed with leaves."""
    tape = Tape(np.float64)
    x = tape.leaf(np.array([[1.0, 2.0]]))
    c = tape.constant(np.array([[3.0, 4.0]]))

    grads = backward(tape, ops.sum_all(ops.mul(x, c)), {"x": x, "c": c})

    np.testing.assert_array_equal(grads["x"], [[3.0, 4.0]])
    np.testing.assert_array_equal(grads["c"], [[0.0, 0.0]])


def test_backward_rejects_non_scalar_loss() -> None:
    """Only scalar losses can be differentiated."""
    tape = Tape()
    x = tape.leaf(np.ones((2, 2)))

    with pytest.raises(BackwardError, match="scalar"):
        backward(tape, ops.scale(x, 2.0), {"x": x})


def test_backward_rejects_foreign_tensors() -> None:
    """Losses and targets from another tape are rejected."""
    tape = Tape()
    other = Tape()
    x = tape.leaf(np.ones((1, 1)))
    y = other.leaf(np.ones((1, 1)))

    with pytest.raises(BackwardError):
        backward(other, ops.sum_all(x), {"x": x})
    with pytest.raises(BackwardError):
        backward(tape, ops.sum_all(x), {"y": y})


def test_mixing_tapes_in_one_op_fails() -> None:
    """An op cannot combine operands recorded on different tapes."""
    x = Tape().leaf(np.ones((2, 2)))
    y = Tape().leaf(np.ones((2, 2)))

    with pytest.raises(BackwardError, match="different tape"):
        ops.add(x, y)
