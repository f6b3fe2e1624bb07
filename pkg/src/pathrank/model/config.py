"""Architecture hyperparameters of the two-stream transformer."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Self


PRESETS: dict[str, dict[str, int]] = {
    "toy": {
        "hidden": 64,
        "n_lang_layers": 4,
        "n_vis_layers": 2,
        "n_coattn_layers": 2,
        "n_heads": 4,
        "d_v": 64,
        "k_max": 8,
        "n_max": 7,
        "l_max": 60,
    },
    "paper-scale": {
        "hidden": 768,
        "n_lang_layers": 12,
        "n_vis_layers": 12,
        "n_coattn_layers": 6,
        "n_heads": 12,
        "d_v": 2048,
        "k_max": 100,
        "n_max": 7,
        "l_max": 60,
    },
}


@dataclass(frozen=True)
class ModelConfig:
    """Sizes of the streams, heads and input bounds."""

    vocab_size: int
    n_classes: int
    hidden: int = 64
    n_lang_layers: int = 4
    n_vis_layers: int = 2
    n_coattn_layers: int = 2
    n_heads: int = 4
    d_v: int = 64
    k_max: int = 8
    n_max: int = 7
    l_max: int = 60
    ffn_multiplier: int = 4
    dropout: float = 0.0

    def __post_init__(self) -> None:
        """Validate cross-field constraints."""
        if self.hidden % self.n_heads != 0:
            raise ValueError(f"hidden size {self.hidden} is not divisible by {self.n_heads} heads")
        if self.n_coattn_layers > min(self.n_lang_layers, self.n_vis_layers):
            raise ValueError("co-attention layers cannot outnumber the layers of either stream")
        for name in ("vocab_size", "n_classes", "hidden", "n_heads", "d_v", "k_max", "n_max"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        """Width of one attention head."""
        return self.hidden // self.n_heads

    @property
    def ffn_dim(self) -> int:
        """Width of the feed-forward inner layer."""
        return self.hidden * self.ffn_multiplier

    @property
    def max_text_positions(self) -> int:
        """Position-table size: the longest text plus [CLS] and two [SEP] markers."""
        return self.l_max + 3

    @classmethod
    def from_preset(cls, preset: str, vocab_size: int, n_classes: int, **overrides: int) -> Self:
        """Build a config from a named preset with optional field overrides."""
        if preset not in PRESETS:
            raise ValueError(f"unknown model preset '{preset}'")
        values: dict[str, object] = {**PRESETS[preset], **overrides}
        return cls(vocab_size=vocab_size, n_classes=n_classes, **values)  # type: ignore[arg-type]

    def to_dict(self) -> dict[str, object]:
        """JSON-ready mapping."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, object]) -> Self:
        """Inverse of `to_dict`; unknown keys are rejected."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**payload)  # type: ignore[arg-type]
