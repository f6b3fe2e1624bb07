"""Scripted follower, beam-search candidate mining and training-quad sampling."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.envgraph import is_success, make_trajectory, wrap_angle
from pathrank.logic.errors import InsufficientCandidatesError


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from pathrank.logic.envgraph import NavGraph, Trajectory
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.instructions import Instruction
    from pathrank.logic.vocab import Vocabulary


STOP = "<stop>"
DEFAULT_BEAM_WIDTH = 30
EXTRA_STEPS = 4


@dataclass(frozen=True)
class FollowerPolicy:
    """Weights of the scripted instruction follower."""

    landmark_weight: float = 2.0
    direction_weight: float = 1.5
    stop_bias: float = -1.0
    goal_weight: float = 2.5
    done_weight: float = 1.0
    noise: float = 0.3
    seed: int = 0


@dataclass(frozen=True)
class Candidate:
    """One mined trajectory with its follower log-probability and success flag."""

    trajectory: Trajectory
    logprob: float
    success: bool


@dataclass(frozen=True)
class CandidateSet:
    """All mined candidates for one episode, best log-probability first."""

    episode_id: str
    candidates: tuple[Candidate, ...]

    def __len__(self) -> int:
        """Number of candidates."""
        return len(self.candidates)

    @property
    def has_success(self) -> bool:
        """Return True when at least one candidate succeeds."""
        return any(candidate.success for candidate in self.candidates)

    @property
    def success_flags(self) -> NDArray[np.bool_]:
        """Success flag per candidate."""
        return np.array([candidate.success for candidate in self.candidates], dtype=bool)


@dataclass(frozen=True)
class TrainingQuad:
    """One positive and three negative candidates of an episode, positive first."""

    episode_id: str
    members: tuple[Candidate, Candidate, Candidate, Candidate]

    @property
    def positive(self) -> Candidate:
        """The successful member."""
        return self.members[0]

    @property
    def negatives(self) -> tuple[Candidate, ...]:
        """The three unsuccessful members."""
        return self.members[1:]


@dataclass(frozen=True)
class ParsedClause:
    """Direction word and landmark classes named by one clause."""

    direction: str | None
    classes: frozenset[int]


def parse_clause(tokens: Sequence[int], vocab: Vocabulary) -> ParsedClause:
    """Read the direction word and landmark classes from clause tokens."""
    directions = vocab.direction_ids()
    direction = next((directions[token] for token in tokens if token in directions), None)
    classes = frozenset(
        class_id for token in tokens if (class_id := vocab.class_of_token(token)) is not None
    )
    return ParsedClause(direction=direction, classes=classes)


def direction_agreement(direction: str | None, delta: float) -> float:
    """Agreement in [-1, 1] between a turn word and a signed heading change."""
    if direction == "forward":
        return math.cos(delta)
    if direction == "left":
        return math.sin(delta)
    if direction == "right":
        return -math.sin(delta)
    return 0.0


def _node_classes(graph: NavGraph, node: str) -> frozenset[int]:
    return frozenset(landmark.class_id for landmark in graph.nodes[node].landmarks)


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def _noise(
    policy: FollowerPolicy,
    episode_id: str,
    step: int,
    node: str,
    size: int,
) -> NDArray[np.float64]:
    if policy.noise <= 0.0:
        return np.zeros(size)
    rng = np.random.default_rng([policy.seed, _crc(episode_id), step, _crc(node)])
    return rng.normal(0.0, policy.noise, size=size)


def log_softmax(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    """Numerically stable log-softmax of a 1-D array that may hold -inf entries."""
    finite = logits[np.isfinite(logits)]
    if finite.size == 0:
        raise ValueError("log_softmax needs at least one finite logit")
    shifted = logits - finite.max()
    with np.errstate(divide="ignore"):
        return shifted - math.log(float(np.exp(shifted).sum()))


def follower_step_logprobs(
    policy: FollowerPolicy,
    graph: NavGraph,
    node: str,
    heading: float,
    instruction: Instruction,
    step: int,
    vocab: Vocabulary,
    *,
    episode_id: str = "",
) -> dict[str, float]:
    """Log-probabilities over the neighbors of `node` and STOP after `step` moves."""
    neighbors = graph.neighbors(node)
    steps = instruction.step_spans
    clause = (
        parse_clause(instruction.clause_tokens(step), vocab)
        if step < len(steps)
        else ParsedClause(direction=None, classes=frozenset())
    )
    goal = parse_clause(instruction.clause_tokens(len(instruction.clauses) - 1), vocab)

    logits = np.empty(len(neighbors) + 1)
    for index, neighbor in enumerate(neighbors):
        delta = wrap_angle(graph.heading(node, neighbor) - heading)
        overlap = len(clause.classes & _node_classes(graph, neighbor))
        logits[index] = policy.landmark_weight * overlap + policy.direction_weight * (
            direction_agreement(clause.direction, delta)
        )
    goal_overlap = len(goal.classes & _node_classes(graph, node))
    logits[-1] = (
        policy.stop_bias
        + policy.goal_weight * goal_overlap
        + policy.done_weight * (1.0 if step >= len(steps) else 0.0)
    )
    logits = logits + _noise(policy, episode_id, step, node, logits.size)
    logprobs = log_softmax(logits)
    result = {neighbor: float(logprobs[index]) for index, neighbor in enumerate(neighbors)}
    result[STOP] = float(logprobs[-1])
    return result


def max_steps_for(episode: EpisodeSpec, n_max: int) -> int:
    """Move cap for one episode: shortest-path hops plus slack, bounded by the panorama limit."""
    return min(episode.hops + EXTRA_STEPS, n_max - 1)


@dataclass(frozen=True)
class _Beam:
    nodes: tuple[str, ...]
    heading: float
    logprob: float


def _rank(item: tuple[float, tuple[str, ...], bool]) -> tuple[float, tuple[str, ...], bool]:
    logprob, nodes, stopped = item
    return (-logprob, nodes, not stopped)


def beam_search(
    policy: FollowerPolicy,
    graph: NavGraph,
    episode: EpisodeSpec,
    vocab: Vocabulary,
    beam_width: int = DEFAULT_BEAM_WIDTH,
    max_steps: int = 6,
    max_candidates: int | None = None,
) -> CandidateSet:
    """Mine finished trajectories from the episode start.

    Each round ranks every expansion of the active beams. STOP expansions within the
    top `beam_width` are banked as finished; the active beam becomes the top
    `beam_width` non-stop expansions. Trajectories never revisit a node, and beams that
    reach `max_steps` moves finish without a STOP term.
    """
    if beam_width < 1:
        raise ValueError("beam_width must be at least 1")
    finished: dict[tuple[str, ...], float] = {}
    active = [_Beam(nodes=(episode.start,), heading=episode.start_heading, logprob=0.0)]

    while active:
        expansions: list[tuple[float, tuple[str, ...], bool]] = []
        headings: dict[tuple[str, ...], float] = {}
        for beam in active:
            moves = len(beam.nodes) - 1
            if moves >= max_steps:
                _bank(finished, beam.nodes, beam.logprob)
                continue
            logprobs = follower_step_logprobs(
                policy,
                graph,
                beam.nodes[-1],
                beam.heading,
                episode.instruction,
                moves,
                vocab,
                episode_id=episode.id,
            )
            for target, logprob in logprobs.items():
                if not math.isfinite(logprob):
                    continue
                if target == STOP:
                    expansions.append((beam.logprob + logprob, beam.nodes, True))
                elif target not in beam.nodes:
                    nodes = (*beam.nodes, target)
                    headings[nodes] = graph.heading(beam.nodes[-1], target)
                    expansions.append((beam.logprob + logprob, nodes, False))

        expansions.sort(key=_rank)
        for logprob, nodes, stopped in expansions[:beam_width]:
            if stopped:
                _bank(finished, nodes, logprob)
        moving = [item for item in expansions if not item[2]][:beam_width]
        active = [
            _Beam(nodes=nodes, heading=headings[nodes], logprob=logprob)
            for logprob, nodes, _ in moving
        ]

    ranked = sorted(finished.items(), key=lambda item: (-item[1], item[0]))
    limit = beam_width if max_candidates is None else max_candidates
    return CandidateSet(
        episode_id=episode.id,
        candidates=tuple(
            _candidate(graph, episode, nodes, logprob) for nodes, logprob in ranked[:limit]
        ),
    )


def _bank(finished: dict[tuple[str, ...], float], nodes: tuple[str, ...], logprob: float) -> None:
    if logprob > finished.get(nodes, -math.inf):
        finished[nodes] = logprob


def _candidate(
    graph: NavGraph,
    episode: EpisodeSpec,
    nodes: tuple[str, ...],
    logprob: float,
) -> Candidate:
    trajectory = make_trajectory(graph, nodes, episode.start_heading)
    return Candidate(
        trajectory=trajectory,
        logprob=logprob,
        success=is_success(graph, trajectory, episode.goal),
    )


def trajectory_logprob(
    policy: FollowerPolicy,
    graph: NavGraph,
    episode: EpisodeSpec,
    vocab: Vocabulary,
    trajectory: Trajectory,
    max_steps: int,
) -> float:
    """Follower log-probability of a given trajectory under the beam-search scoring rule."""
    total = 0.0
    for moves, node in enumerate(trajectory.nodes):
        if moves >= max_steps:
            break
        logprobs = follower_step_logprobs(
            policy,
            graph,
            node,
            trajectory.headings[moves],
            episode.instruction,
            moves,
            vocab,
            episode_id=episode.id,
        )
        target = trajectory.nodes[moves + 1] if moves + 1 < len(trajectory) else STOP
        total += logprobs[target]
    return total


def sample_quad(candidates: CandidateSet, seed: int) -> TrainingQuad:
    """Draw one successful and three unsuccessful candidates uniformly without replacement."""
    positives = [candidate for candidate in candidates.candidates if candidate.success]
    negatives = [candidate for candidate in candidates.candidates if not candidate.success]
    if not positives or len(negatives) < 3:
        raise InsufficientCandidatesError(
            f"episode '{candidates.episode_id}' has {len(positives)} positive and "
            f"{len(negatives)} negative candidates",
        )
    rng = np.random.default_rng([seed, _crc(candidates.episode_id)])
    positive = positives[int(rng.integers(len(positives)))]
    picked = rng.choice(len(negatives), size=3, replace=False)
    return TrainingQuad(
        episode_id=candidates.episode_id,
        members=(positive, negatives[picked[0]], negatives[picked[1]], negatives[picked[2]]),
    )
