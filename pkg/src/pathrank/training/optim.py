"""Adam with a linear warmup then linear decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np


if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    from pathrank.model.params import ModelParams


@dataclass(frozen=True)
class LinearSchedule:
    """Learning rate rising linearly over the warmup steps, then falling linearly to zero."""

    peak_lr: float
    total_steps: int
    warmup_fraction: float = 0.1

    @property
    def warmup_steps(self) -> int:
        """Number of warmup steps (at least one)."""
        return max(1, round(self.warmup_fraction * self.total_steps))

    def lr(self, step: int) -> float:
        """Learning rate for the 0-based optimizer step."""
        current = step + 1
        if current <= self.warmup_steps:
            return self.peak_lr * current / self.warmup_steps
        remaining = max(self.total_steps - self.warmup_steps, 1)
        return self.peak_lr * max(0.0, (self.total_steps - current) / remaining)


@dataclass
class Adam:
    """Adam optimizer state over named parameter arrays."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first: dict[str, NDArray[np.floating]] = field(default_factory=dict)
    second: dict[str, NDArray[np.floating]] = field(default_factory=dict)

    def step(
        self,
        params: ModelParams,
        grads: Mapping[str, NDArray[np.floating]],
        lr: float,
    ) -> ModelParams:
        """Apply one update; parameters without a gradient are treated as having zero gradient."""
        self.step_count += 1
        t = self.step_count
        updates: dict[str, NDArray[np.floating]] = {}
        for name in params:
            value = params[name]
            grad = grads.get(name)
            if grad is None:
                grad = np.zeros_like(value)
            m = self.first.get(name, np.zeros_like(value))
            v = self.second.get(name, np.zeros_like(value))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.first[name] = m
            self.second[name] = v
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            updates[name] = (value - lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(value.dtype)
        return params.replace(updates)


def accumulate(
    total: dict[str, NDArray[np.floating]],
    grads: Mapping[str, NDArray[np.floating]],
) -> None:
    """Add gradients into a running sum in place."""
    for name, grad in grads.items():
        previous = total.get(name)
        total[name] = grad.copy() if previous is None else previous + grad


def scale_gradients(
    grads: Mapping[str, NDArray[np.floating]],
    factor: float,
) -> dict[str, NDArray[np.floating]]:
    """Multiply every gradient by a constant."""
    return {name: grad * factor for name, grad in grads.items()}


def gradients_finite(grads: Mapping[str, NDArray[np.floating]]) -> bool:
    """Return True when no gradient holds NaN or Inf."""
    return all(bool(np.all(np.isfinite(grad))) for grad in grads.values())
