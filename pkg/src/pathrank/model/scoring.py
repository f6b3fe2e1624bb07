"""Compatibility-model scoring of candidate sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.featurize import assemble_sequence, observe_panorama
from pathrank.logic.metrics import select_index
from pathrank.model.network import score_sequences


if TYPE_CHECKING:
    from collections.abc import Iterable, Mapping, Sequence

    from numpy.typing import NDArray

    from pathrank.logic.envgraph import NavGraph, Trajectory
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import MultimodalSequence, PanoramaObservation
    from pathrank.logic.mining import CandidateSet
    from pathrank.logic.vocab import LandmarkCatalog, Vocabulary
    from pathrank.model.params import ModelParams


def observe_graphs(
    graphs: Iterable[NavGraph],
    catalog: LandmarkCatalog,
    seed: int,
    k_max: int,
    sim_threshold: float,
) -> dict[str, PanoramaObservation]:
    """Deduplicated panorama of every node, keyed by node id."""
    return {
        node.id: observe_panorama(node, catalog, seed, k_max, sim_threshold)
        for graph in graphs
        for node in graph.nodes.values()
    }


def path_sequence(
    params: ModelParams,
    panoramas: Mapping[str, PanoramaObservation],
    vocab: Vocabulary,
    trajectory: Trajectory,
    tokens: Sequence[int],
) -> MultimodalSequence:
    """Encode a trajectory and instruction within the model's bounds."""
    config = params.config
    return assemble_sequence(
        trajectory,
        panoramas,
        tokens,
        vocab,
        n_max=config.n_max,
        l_max=config.l_max,
        feature_dim=config.d_v,
    )


@dataclass(frozen=True)
class CompatScorer:
    """Scores candidates with the path-instruction compatibility model."""

    params: ModelParams
    panoramas: Mapping[str, PanoramaObservation]
    vocab: Vocabulary
    name: str = "compat"

    def score(self, episode: EpisodeSpec, candidates: CandidateSet) -> NDArray[np.float64]:
        """Compatibility score of every candidate with the episode's instruction."""
        seqs = [
            path_sequence(
                self.params,
                self.panoramas,
                self.vocab,
                candidate.trajectory,
                episode.instruction.tokens,
            )
            for candidate in candidates.candidates
        ]
        return score_sequences(self.params, seqs)


def selection_success_rate(
    scorer: CompatScorer,
    episodes: Mapping[str, EpisodeSpec],
    candidate_sets: Sequence[CandidateSet],
) -> float:
    """Fraction of candidate sets whose top-scoring candidate succeeds."""
    if not candidate_sets:
        return 0.0
    hits = 0
    for candidates in candidate_sets:
        scores = scorer.score(episodes[candidates.episode_id], candidates)
        hits += int(candidates.candidates[select_index(scores)].success)
    return hits / len(candidate_sets)
