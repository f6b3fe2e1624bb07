"""Candidate scorers and their weighted ensembles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import numpy as np

from pathrank.logic.instructions import synthesize_instruction, token_f1
from pathrank.logic.metrics import select_index
from pathrank.logic.mining import FollowerPolicy, trajectory_logprob


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.mining import CandidateSet
    from pathrank.logic.vocab import Vocabulary


type Scores = NDArray[np.float64]


class Scorer(Protocol):
    """Assigns one finite score per candidate of an episode."""

    name: str

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> Scores:
        """Score every candidate, higher is better."""
        ...


@dataclass(frozen=True)
class FollowerScorer:
    """Mined follower log-probability, the top-beam baseline."""

    name: str = "follower"

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> Scores:  # noqa: ARG002
        """Return the log-probability each candidate was mined with."""
        return np.array([candidate.logprob for candidate in candidates.candidates])


@dataclass(frozen=True)
class RescoringFollowerScorer:
    """Log-probability under a follower with its own seed."""

    graphs: dict[str, NavGraph]
    vocab: Vocabulary
    policy: FollowerPolicy
    max_steps: dict[str, int]
    name: str = "follower2"

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> Scores:
        """Re-evaluate every candidate under this follower."""
        graph = self.graphs[episode.graph_id]
        return np.array(
            [
                trajectory_logprob(
                    self.policy,
                    graph,
                    episode,
                    self.vocab,
                    candidate.trajectory,
                    self.max_steps[episode.id],
                )
                for candidate in candidates.candidates
            ],
        )


@dataclass(frozen=True)
class SpeakerScorer:
    """Scripted speaker: token F1 between the instruction and each path's own description."""

    graphs: dict[str, NavGraph]
    vocab: Vocabulary
    seed: int = 0
    name: str = "speaker"

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> Scores:
        """Describe each candidate and compare it with the given instruction."""
        graph = self.graphs[episode.graph_id]
        ignore = self.vocab.special_ids
        scores = []
        for candidate in candidates.candidates:
            description = synthesize_instruction(
                graph,
                candidate.trajectory.nodes,
                self.seed,
                vocab=self.vocab,
                start_heading=episode.start_heading,
                max_len=10_000,
            )
            scores.append(token_f1(description.tokens, episode.instruction.tokens, ignore))
        return np.array(scores, dtype=np.float64)


@dataclass(frozen=True)
class OracleScorer:
    """Prefers successful candidates; bounds what path selection can reach."""

    name: str = "oracle"

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> Scores:  # noqa: ARG002
        """Return 1 for successful candidates and 0 otherwise."""
        return candidates.success_flags.astype(np.float64)


def znormalize(scores: Scores) -> Scores:
    """Zero-mean, unit-variance scores within one candidate set; constant sets map to zeros."""
    values = np.asarray(scores, dtype=np.float64)
    std = float(values.std())
    if values.size == 0 or std == 0.0:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def simplex_grid(n_scorers: int, step: float) -> list[tuple[float, ...]]:
    """Weight vectors on the simplex at multiples of `step`, corners included."""
    if n_scorers < 1:
        raise ValueError("at least one scorer is required")
    if not 0.0 < step <= 1.0:
        raise ValueError("grid step must be in (0, 1]")
    ticks = round(1.0 / step)
    points = [
        (*combo, ticks - sum(combo))
        for combo in itertools.product(range(ticks + 1), repeat=n_scorers - 1)
        if sum(combo) <= ticks
    ]
    return [tuple(count / ticks for count in point) for point in points]


def combine(score_sets: Sequence[Scores], weights: Sequence[float]) -> Scores:
    """Weighted sum of z-normalized scores of one candidate set."""
    total = np.zeros_like(np.asarray(score_sets[0], dtype=np.float64))
    for scores, weight in zip(score_sets, weights, strict=True):
        total = total + weight * znormalize(scores)
    return total


def selection_success(
    per_scorer: Sequence[Sequence[Scores]],
    success: Sequence[NDArray[np.bool_]],
    weights: Sequence[float],
) -> float:
    """Fraction of episodes whose ensemble-selected candidate succeeds."""
    if not success:
        raise ValueError("no episodes to evaluate")
    hits = 0
    for episode_index, flags in enumerate(success):
        combined = combine([scores[episode_index] for scores in per_scorer], weights)
        hits += int(flags[select_index(combined)])
    return hits / len(success)


@dataclass(frozen=True)
class EnsembleResult:
    """Selected weights with the success rate they reach, plus every grid point tried."""

    weights: tuple[float, ...]
    success_rate: float
    grid: tuple[tuple[tuple[float, ...], float], ...]


def ensemble_grid_search(
    per_scorer: Sequence[Sequence[Scores]],
    success: Sequence[NDArray[np.bool_]],
    grid_step: float = 0.05,
) -> EnsembleResult:
    """Pick simplex weights maximizing selection success; the first best grid point wins.

    `per_scorer[k][e]` holds scorer k's scores for the candidates of episode e.
    """
    if not success:
        raise ValueError("ensemble search needs at least one episode")
    if not 1 <= len(per_scorer) <= 3:
        raise ValueError("ensembles combine one to three scorers")
    tried = [
        (weights, selection_success(per_scorer, success, weights))
        for weights in simplex_grid(len(per_scorer), grid_step)
    ]
    best_weights, best_rate = tried[0]
    for weights, rate in tried[1:]:
        if rate > best_rate:
            best_weights, best_rate = weights, rate
    return EnsembleResult(weights=best_weights, success_rate=best_rate, grid=tuple(tried))
