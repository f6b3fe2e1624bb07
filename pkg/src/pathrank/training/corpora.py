"""Synthetic corpora for each curriculum stage."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.envgraph import Node, make_trajectory, place_landmarks
from pathrank.logic.errors import InsufficientCandidatesError
from pathrank.logic.featurize import observe_panorama
from pathrank.logic.mining import sample_quad


if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from pathrank.logic.envgraph import NavGraph, Trajectory
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import PanoramaObservation
    from pathrank.logic.instructions import Instruction
    from pathrank.logic.mining import CandidateSet
    from pathrank.logic.vocab import LandmarkCatalog, Vocabulary


logger = logging.getLogger("pathrank")

CAPTION_TEMPLATES: dict[int, tuple[tuple[str, ...], ...]] = {
    1: (("a", "{0}", "."), ("the", "{0}", ".")),
    2: (("a", "{0}", "and", "a", "{1}", "."), ("the", "{0}", "next", "to", "the", "{1}", ".")),
    3: (("a", "{0}", "with", "a", "{1}", "near", "the", "{2}", "."),),
}


@dataclass(frozen=True)
class SentencePair:
    """Two clauses and whether the second follows the first in one instruction."""

    id: int
    first: tuple[int, ...]
    second: tuple[int, ...]
    is_next: bool


@dataclass(frozen=True)
class CaptionPair:
    """One panorama with a caption that either names its landmarks or another panorama's."""

    id: int
    panorama: PanoramaObservation
    caption: tuple[int, ...]
    matched: bool


@dataclass(frozen=True)
class PathPair:
    """A trajectory with the instruction describing it."""

    id: int
    graph_id: str
    trajectory: Trajectory
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class QuadExample:
    """Four candidate trajectories of one episode; member 0 is the successful one."""

    id: int
    episode_id: str
    graph_id: str
    trajectories: tuple[Trajectory, ...]
    tokens: tuple[int, ...]
    positive: int = 0


def build_sentence_pairs(
    instructions: Sequence[Instruction],
    count: int,
    seed: int,
) -> list[SentencePair]:
    """Next-sentence pairs: adjacent clauses half the time, unrelated clauses otherwise."""
    usable = [instruction for instruction in instructions if len(instruction.clauses) >= 2]
    if len(usable) < 2:
        raise InsufficientCandidatesError("sentence pairs need two multi-clause instructions")
    rng = np.random.default_rng(seed)
    pairs: list[SentencePair] = []
    for index in range(count):
        source = usable[int(rng.integers(len(usable)))]
        position = int(rng.integers(len(source.clauses) - 1))
        first = source.clause_tokens(position)
        if rng.random() < 0.5:
            pairs.append(SentencePair(index, first, source.clause_tokens(position + 1), True))
            continue
        other = source
        while other is source:
            other = usable[int(rng.integers(len(usable)))]
        second = other.clause_tokens(int(rng.integers(len(other.clauses))))
        pairs.append(SentencePair(index, first, second, False))
    return pairs


def caption_for(
    panorama: PanoramaObservation,
    vocab: Vocabulary,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Caption naming up to three distinct landmark classes visible in a panorama."""
    classes = sorted({region.landmark_class for region in panorama.regions})
    count = min(len(classes), max(CAPTION_TEMPLATES))
    options = CAPTION_TEMPLATES[count]
    template = options[int(rng.integers(len(options)))]
    chosen = [int(c) for c in rng.choice(classes, size=count, replace=False)]
    names = [vocab.tokens[vocab.class_token(class_id)] for class_id in chosen]
    return vocab.encode([word.format(*names) for word in template])


def build_caption_pairs(
    catalog: LandmarkCatalog,
    vocab: Vocabulary,
    count: int,
    seed: int,
    *,
    k_max: int,
) -> list[CaptionPair]:
    """Single-panorama captioning pairs over every class, held-out ones included.

    Half of the pairs receive the caption of another pair instead of their own.
    """
    rng = np.random.default_rng(seed)
    every_class = tuple(range(catalog.size))
    panoramas = []
    captions = []
    for index in range(count):
        node = Node(
            id=f"web-{index:05d}",
            xyz=(0.0, 0.0, 0.0),
            landmarks=place_landmarks(rng, every_class, min_count=1, max_count=3),
        )
        panorama = observe_panorama(node, catalog, seed, k_max)
        panoramas.append(panorama)
        captions.append(caption_for(panorama, vocab, rng))

    pairs: list[CaptionPair] = []
    for index, panorama in enumerate(panoramas):
        if count > 1 and rng.random() < 0.5:
            other = (index + 1 + int(rng.integers(count - 1))) % count
            pairs.append(CaptionPair(index, panorama, captions[other], matched=False))
        else:
            pairs.append(CaptionPair(index, panorama, captions[index], matched=True))
    return pairs


def build_path_pairs(
    episodes: Sequence[EpisodeSpec],
    graphs: Mapping[str, NavGraph],
) -> list[PathPair]:
    """Ground-truth trajectories paired with their instructions."""
    pairs = []
    for index, episode in enumerate(episodes):
        graph = graphs[episode.graph_id]
        trajectory = make_trajectory(graph, episode.path, episode.start_heading)
        pairs.append(PathPair(index, episode.graph_id, trajectory, episode.instruction.tokens))
    return pairs


def build_quads(
    candidate_sets: Sequence[CandidateSet],
    episodes: Mapping[str, EpisodeSpec],
    seed: int,
) -> tuple[list[QuadExample], int]:
    """One training quad per usable candidate set; also returns how many sets were skipped."""
    quads: list[QuadExample] = []
    skipped = 0
    for candidates in candidate_sets:
        try:
            quad = sample_quad(candidates, seed)
        except InsufficientCandidatesError as err:
            skipped += 1
            logger.info("Skipping quad: %s", err)
            continue
        episode = episodes[candidates.episode_id]
        quads.append(
            QuadExample(
                id=len(quads),
                episode_id=episode.id,
                graph_id=episode.graph_id,
                trajectories=tuple(member.trajectory for member in quad.members),
                tokens=episode.instruction.tokens,
            ),
        )
    return quads, skipped
