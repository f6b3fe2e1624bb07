"""Template instructions describing a path: turn words, landmarks and a goal phrase.

Headings grow counter-clockwise seen from above, so a positive heading change is a
left turn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.envgraph import normalize_heading, wrap_angle
from pathrank.logic.errors import InvalidTrajectoryError, TruncationError


if TYPE_CHECKING:
    from collections.abc import Sequence

    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.vocab import Vocabulary


DEFAULT_MAX_LEN = 60
FORWARD_CONE_RAD = math.radians(30.0)

type Span = tuple[int, int]


@dataclass(frozen=True)
class Instruction:
    """Token ids plus the clause layout and the path they describe.

    `clauses[t]` is the `[start, stop)` token span describing step t + 1 of the path;
    the last clause is the goal phrase.
    """

    tokens: tuple[int, ...]
    clauses: tuple[Span, ...]
    path: tuple[str, ...]

    def __post_init__(self) -> None:
        """Validate non-emptiness."""
        if not self.tokens:
            raise TruncationError("instruction must contain at least one token")

    def __len__(self) -> int:
        """Number of tokens."""
        return len(self.tokens)

    @property
    def goal_span(self) -> Span:
        """Token span of the terminal goal phrase."""
        return self.clauses[-1]

    @property
    def step_spans(self) -> tuple[Span, ...]:
        """Token spans of the movement clauses, one per path edge."""
        return self.clauses[:-1]

    def clause_tokens(self, index: int) -> tuple[int, ...]:
        """Tokens of one clause."""
        start, stop = self.clauses[index]
        return self.tokens[start:stop]

    def without_span(self, span: Span) -> tuple[int, ...]:
        """Token sequence with a span deleted."""
        start, stop = span
        return self.tokens[:start] + self.tokens[stop:]


def turn_words(delta: float) -> tuple[str, ...]:
    """Movement words for a signed heading change in radians."""
    if abs(delta) < FORWARD_CONE_RAD:
        return ("go", "forward")
    return ("turn", "left") if delta > 0.0 else ("turn", "right")


def distinctive_class(
    graph: NavGraph,
    node: str,
    avoid: Sequence[str],
    rng: np.random.Generator,
) -> int:
    """A landmark class at `node` that is absent from `avoid` nodes when possible."""
    classes = sorted({landmark.class_id for landmark in graph.nodes[node].landmarks})
    elsewhere = {
        landmark.class_id for other in avoid for landmark in graph.nodes[other].landmarks
    }
    unique = [class_id for class_id in classes if class_id not in elsewhere]
    pool = unique or classes
    return int(pool[int(rng.integers(len(pool)))])


def synthesize_instruction(
    graph: NavGraph,
    path: Sequence[str],
    seed: int,
    *,
    vocab: Vocabulary,
    start_heading: float = 0.0,
    max_len: int = DEFAULT_MAX_LEN,
) -> Instruction:
    """Describe a graph path with one clause per edge and a terminal goal phrase."""
    if not path:
        raise InvalidTrajectoryError("cannot describe an empty path")
    rng = np.random.default_rng(seed)
    words: list[str] = []
    clauses: list[Span] = []
    heading = normalize_heading(start_heading)

    for step, (previous, current) in enumerate(zip(path, path[1:], strict=False)):
        if not graph.is_adjacent(previous, current):
            raise InvalidTrajectoryError(f"nodes '{previous}' and '{current}' are not adjacent")
        edge_heading = graph.heading(previous, current)
        start = len(words)
        if step > 0:
            words.append("then")
        words.extend(turn_words(wrap_angle(edge_heading - heading)))
        class_id = distinctive_class(graph, current, (previous,), rng)
        words.extend(("toward" if rng.random() < 0.5 else "past", "the"))
        words.extend((vocab.tokens[vocab.class_token(class_id)], "."))
        clauses.append((start, len(words)))
        heading = edge_heading

    goal = path[-1]
    goal_class = distinctive_class(graph, goal, path[-2:-1], rng)
    start = len(words)
    words.extend(("and", "stop", "at", "the", vocab.tokens[vocab.class_token(goal_class)], "."))
    clauses.append((start, len(words)))

    if len(words) > max_len:
        raise TruncationError(f"instruction has {len(words)} tokens, limit is {max_len}")
    return Instruction(tokens=vocab.encode(words), clauses=tuple(clauses), path=tuple(path))


def token_f1(candidate: Sequence[int], reference: Sequence[int], ignore: frozenset[int]) -> float:
    """Bag-of-tokens F1 between two token sequences."""
    left: dict[int, int] = {}
    right: dict[int, int] = {}
    for token in candidate:
        if token not in ignore:
            left[token] = left.get(token, 0) + 1
    for token in reference:
        if token not in ignore:
            right[token] = right.get(token, 0) + 1
    overlap = sum(min(count, right.get(token, 0)) for token, count in left.items())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(left.values())
    recall = overlap / sum(right.values())
    return 2.0 * precision * recall / (precision + recall)
