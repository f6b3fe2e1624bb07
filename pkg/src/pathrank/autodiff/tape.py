"""Reverse-mode tape: tensors, recorded ops and the backward sweep."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import DTypeLike, NDArray

from pathrank.autodiff.errors import BackwardError, NonFiniteError


if TYPE_CHECKING:
    from collections.abc import Callable, Mapping, Sequence


type Array = NDArray[np.floating]
type LocalGradient = Callable[[Array], tuple[Array | None, ...]]

DEFAULT_DTYPE: DTypeLike = np.float32


class Tensor:
    """Immutable value recorded on one tape."""

    __slots__ = ("data", "node", "requires_grad", "tape")

    def __init__(self, tape: Tape, node: int, data: Array, requires_grad: bool) -> None:
        """Bind a value to its tape node."""
        self.tape = tape
        self.node = node
        self.data = data
        self.requires_grad = requires_grad
        self.data.flags.writeable = False

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the underlying value."""
        return tuple(self.data.shape)

    def __repr__(self) -> str:
        """Return a compact representation with node id and shape."""
        return f"Tensor(node={self.node}, shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass(frozen=True)
class TapeEntry:
    """One recorded op: input node ids, output node id and its local gradient."""

    inputs: tuple[int, ...]
    output: int
    backward: LocalGradient


class Tape:
    """Ordered record of differentiable ops for a single step on one thread."""

    def __init__(self, dtype: DTypeLike = DEFAULT_DTYPE) -> None:
        """Create an empty tape computing in the given float dtype."""
        self.dtype = np.dtype(dtype)
        self.entries: list[TapeEntry] = []
        self._next_node = 0
        self._tracked: set[int] = set()

    def _new_node(self) -> int:
        node = self._next_node
        self._next_node += 1
        return node

    def asarray(self, data: object) -> Array:
        """Copy a value into a fresh array of the tape dtype."""
        return np.array(data, dtype=self.dtype)

    def leaf(self, data: object, *, requires_grad: bool = True) -> Tensor:
        """Register an input value, usually a parameter."""
        tensor = Tensor(self, self._new_node(), self.asarray(data), requires_grad)
        if requires_grad:
            self._tracked.add(tensor.node)
        return tensor

    def constant(self, data: object) -> Tensor:
        """Register a value that never receives gradient."""
        return self.leaf(data, requires_grad=False)

    def record(self, op: str, data: Array, inputs: Sequence[Tensor], fn: LocalGradient) -> Tensor:
        """Append the output of one op, checking it is finite."""
        for tensor in inputs:
            if tensor.tape is not self:
                raise BackwardError(f"{op}: operand recorded on a different tape")
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"{op}: produced non-finite values")
        tracked = any(tensor.requires_grad for tensor in inputs)
        output = Tensor(self, self._new_node(), np.asarray(data, dtype=self.dtype), tracked)
        if tracked:
            self._tracked.add(output.node)
            inputs_ids = tuple(tensor.node for tensor in inputs)
            self.entries.append(TapeEntry(inputs=inputs_ids, output=output.node, backward=fn))
        return output

    def is_tracked(self, node: int) -> bool:
        """Return True when the node takes part in gradient flow."""
        return node in self._tracked


def backward(tape: Tape, loss: Tensor, wrt: Mapping[str, Tensor]) -> dict[str, Array]:
    """Return d(loss)/d(tensor) for every named tensor.

    Tensors the loss does not depend on get a zero gradient of their own shape.
    """
    if loss.tape is not tape:
        raise BackwardError("loss was recorded on a different tape")
    if loss.data.size != 1:
        raise BackwardError(f"loss must be scalar, got shape {loss.shape}")

    grads: dict[int, Array] = {loss.node: np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        upstream = grads.get(entry.output)
        if upstream is None:
            continue
        for node, local in zip(entry.inputs, entry.backward(upstream), strict=True):
            if local is None or not tape.is_tracked(node):
                continue
            previous = grads.get(node)
            grads[node] = local if previous is None else previous + local

    result: dict[str, Array] = {}
    for name, tensor in wrt.items():
        if tensor.tape is not tape:
            raise BackwardError(f"'{name}' was recorded on a different tape")
        grad = grads.get(tensor.node)
        result[name] = np.zeros_like(tensor.data) if grad is None else grad.astype(tape.dtype)
    return result
