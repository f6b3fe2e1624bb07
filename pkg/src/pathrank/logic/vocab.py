"""Synthetic landmark catalog and the instruction vocabulary built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


LANDMARK_NAMES = (
    "sofa",
    "table",
    "lamp",
    "fridge",
    "stairs",
    "bed",
    "sink",
    "plant",
    "painting",
    "mirror",
    "chair",
    "desk",
    "shelf",
    "door",
    "window",
    "piano",
    "rug",
    "clock",
    "oven",
    "toilet",
    "bathtub",
    "curtain",
    "fireplace",
    "television",
    "statue",
    "treadmill",
    "freezer",
    "antelope",
    "aquarium",
    "harp",
    "globe",
    "telescope",
    "armchair",
    "bench",
    "cabinet",
    "dresser",
    "vase",
    "column",
    "railing",
    "counter",
)

SPECIAL_TOKENS = ("[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]")

FUNCTION_WORDS = (
    "walk",
    "go",
    "turn",
    "forward",
    "left",
    "right",
    "past",
    "toward",
    "the",
    "a",
    "and",
    "then",
    "stop",
    "at",
    "by",
    "near",
    "next",
    "to",
    "with",
    ".",
)

DIRECTION_WORDS = ("forward", "left", "right")


@dataclass(frozen=True, eq=False)
class LandmarkCatalog:
    """Landmark classes shared by every environment: names, feature prototypes, held-out set."""

    names: tuple[str, ...]
    prototypes: NDArray[np.float32]
    held_out: frozenset[int]

    @classmethod
    def build(
        cls,
        n_classes: int,
        feature_dim: int,
        held_out_fraction: float,
        seed: int,
    ) -> LandmarkCatalog:
        """Draw unit-norm class prototypes and mark the last classes as held out."""
        if not 1 <= n_classes <= len(LANDMARK_NAMES):
            raise ValueError(f"landmark vocabulary size must be in [1, {len(LANDMARK_NAMES)}]")
        rng = np.random.default_rng([seed, 0x1A2B])
        raw = rng.standard_normal((n_classes, feature_dim))
        prototypes = (raw / np.linalg.norm(raw, axis=1, keepdims=True)).astype(np.float32)
        n_held = min(n_classes - 1, math.ceil(held_out_fraction * n_classes))
        held_out = frozenset(range(n_classes - n_held, n_classes)) if n_held > 0 else frozenset()
        return cls(names=LANDMARK_NAMES[:n_classes], prototypes=prototypes, held_out=held_out)

    @property
    def size(self) -> int:
        """Number of landmark classes."""
        return len(self.names)

    @property
    def feature_dim(self) -> int:
        """Dimension of region features."""
        return int(self.prototypes.shape[1])

    @property
    def seen_classes(self) -> tuple[int, ...]:
        """Classes allowed in training environments."""
        return tuple(c for c in range(self.size) if c not in self.held_out)


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Token table: special tokens, function words, then one word per landmark class."""

    tokens: tuple[str, ...]
    n_classes: int
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Build the reverse index."""
        object.__setattr__(self, "_index", {token: i for i, token in enumerate(self.tokens)})

    @classmethod
    def for_catalog(cls, catalog: LandmarkCatalog) -> Vocabulary:
        """Vocabulary covering every class name of a catalog."""
        return cls(
            tokens=SPECIAL_TOKENS + FUNCTION_WORDS + catalog.names,
            n_classes=catalog.size,
        )

    @property
    def size(self) -> int:
        """Number of tokens."""
        return len(self.tokens)

    @property
    def pad(self) -> int:
        """Padding token id."""
        return self._index["[PAD]"]

    @property
    def cls(self) -> int:
        """Sequence-start token id."""
        return self._index["[CLS]"]

    @property
    def sep(self) -> int:
        """Separator token id."""
        return self._index["[SEP]"]

    @property
    def mask(self) -> int:
        """Mask token id."""
        return self._index["[MASK]"]

    @property
    def special_ids(self) -> frozenset[int]:
        """Ids that must never be masked or predicted."""
        return frozenset(self._index[token] for token in SPECIAL_TOKENS)

    @property
    def first_class_id(self) -> int:
        """Token id of landmark class 0."""
        return len(SPECIAL_TOKENS) + len(FUNCTION_WORDS)

    def id(self, token: str) -> int:
        """Token id for a word; unknown words map to [UNK]."""
        return self._index.get(token, self._index["[UNK]"])

    def encode(self, words: list[str] | tuple[str, ...]) -> tuple[int, ...]:
        """Encode words into token ids."""
        return tuple(self.id(word) for word in words)

    def decode(self, ids: tuple[int, ...] | list[int]) -> list[str]:
        """Decode token ids into words."""
        return [self.tokens[i] for i in ids]

    def class_token(self, class_id: int) -> int:
        """Token id naming a landmark class."""
        if not 0 <= class_id < self.n_classes:
            raise IndexError(f"landmark class {class_id} outside vocabulary")
        return self.first_class_id + class_id

    def class_of_token(self, token_id: int) -> int | None:
        """Landmark class named by a token, or None for other tokens."""
        offset = token_id - self.first_class_id
        return offset if 0 <= offset < self.n_classes else None

    def direction_ids(self) -> dict[int, str]:
        """Token ids of the direction words keyed to their word."""
        return {self._index[word]: word for word in DIRECTION_WORDS}
