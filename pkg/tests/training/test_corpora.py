"""Tests for pathrank.training.corpora."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from pathrank.logic.envgraph import Node, make_trajectory
from pathrank.logic.errors import InsufficientCandidatesError
from pathrank.logic.featurize import observe_panorama
from pathrank.logic.mining import Candidate, CandidateSet
from pathrank.training.corpora import (
    build_caption_pairs,
    build_path_pairs,
    build_quads,
    build_sentence_pairs,
    caption_for,
)
from tests.conftest import (
    branching_graph,
    landmark,
    line_graph,
    make_episode,
    node,
    small_catalog,
    small_vocab,
)


if TYPE_CHECKING:
    from pathrank.logic.instructions import Instruction


def _instructions() -> list[Instruction]:
    vocab = small_vocab()
    line = line_graph()
    fork = branching_graph()
    return [
        make_episode(line, [node(line, str(i)) for i in range(4)], vocab).instruction,
        make_episode(fork, [node(fork, n) for n in ("s", "b", "c", "g")], vocab).instruction,
        make_episode(line, [node(line, "2")], vocab).instruction,
    ]


def test_sentence_pairs_mix_adjacent_and_unrelated_clauses() -> None:
    """Positive pairs are consecutive clauses of one instruction."""
    instructions = _instructions()

    pairs = build_sentence_pairs(instructions, 40, seed=5)

    assert [pair.id for pair in pairs] == list(range(40))
    assert {pair.is_next for pair in pairs} == {True, False}
    for pair in pairs:
        if pair.is_next:
            assert any(
                pair.first == instruction.clause_tokens(i)
                and pair.second == instruction.clause_tokens(i + 1)
                for instruction in instructions
                for i in range(len(instruction.clauses) - 1)
            )
    assert build_sentence_pairs(instructions, 40, seed=5) == pairs


def test_sentence_pairs_need_two_multi_clause_instructions() -> None:
    """A single usable instruction cannot supply unrelated clauses."""
    instructions = _instructions()

    with pytest.raises(InsufficientCandidatesError):
        build_sentence_pairs([instructions[0], instructions[2]], 4, seed=0)


def test_caption_names_visible_classes() -> None:
    """Captions mention only classes the panorama shows, in a known template."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)
    panorama = observe_panorama(
        Node("n", (0.0, 0.0, 0.0), (landmark(1, 0.5), landmark(3, 2.2))),
        catalog,
        seed=0,
        k_max=4,
    )
    visible = {region.landmark_class for region in panorama.regions}

    caption = caption_for(panorama, vocab, np.random.default_rng(0))

    named = {vocab.class_of_token(token) for token in caption} - {None}
    assert named
    assert named <= visible
    assert vocab.id("[UNK]") not in caption
    assert vocab.decode(list(caption))[-1] == "."


def test_caption_pairs_cover_held_out_classes() -> None:
    """Caption panoramas draw from every class and half of the captions are swapped."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)

    pairs = build_caption_pairs(catalog, vocab, 60, seed=2, k_max=4)

    assert [pair.id for pair in pairs] == list(range(60))
    seen = {region.landmark_class for pair in pairs for region in pair.panorama.regions}
    assert catalog.held_out & seen
    matched = [pair for pair in pairs if pair.matched]
    assert 15 <= len(matched) <= 45
    for pair in matched:
        visible = {region.landmark_class for region in pair.panorama.regions}
        assert {vocab.class_of_token(t) for t in pair.caption} - {None} <= visible


def test_single_caption_pair_is_matched() -> None:
    """With one panorama there is no other caption to borrow."""
    catalog = small_catalog()

    pairs = build_caption_pairs(catalog, small_vocab(catalog), 1, seed=0, k_max=4)

    assert len(pairs) == 1
    assert pairs[0].matched


def test_path_pairs_follow_ground_truth() -> None:
    """Path pairs replay the episode path with its instruction."""
    vocab = small_vocab()
    graph = line_graph()
    episode = make_episode(graph, [node(graph, str(i)) for i in range(3)], vocab)

    pairs = build_path_pairs([episode], {graph.id: graph})

    assert len(pairs) == 1
    assert pairs[0].trajectory.nodes == episode.path
    assert pairs[0].tokens == episode.instruction.tokens
    assert pairs[0].graph_id == graph.id


def test_quads_skip_unusable_candidate_sets() -> None:
    """Sets without a success or enough failures are counted as skipped."""
    vocab = small_vocab()
    graph = line_graph(n_nodes=8, spacing=4.0)
    episode = make_episode(graph, [node(graph, "0")], vocab, episode_id="ep")

    def candidates(n_success: int, n_fail: int) -> CandidateSet:
        members = []
        for index in range(n_success + n_fail):
            end = 0 if index < n_success else index + 1
            nodes = [node(graph, str(i)) for i in range(end + 1)]
            trajectory = make_trajectory(graph, nodes, 0.0)
            members.append(Candidate(trajectory, -float(index), success=index < n_success))
        return CandidateSet(episode_id="ep", candidates=tuple(members))

    quads, skipped = build_quads(
        [candidates(1, 4), candidates(0, 5), candidates(2, 3)],
        {"ep": episode},
        seed=1,
    )

    assert skipped == 1
    assert [quad.id for quad in quads] == [0, 1]
    for quad in quads:
        assert len(quad.trajectories) == 4
        assert quad.positive == 0
        assert quad.trajectories[0].nodes == (node(graph, "0"),)
        assert all(len(t.nodes) > 1 for t in quad.trajectories[1:])
        assert quad.tokens == episode.instruction.tokens
