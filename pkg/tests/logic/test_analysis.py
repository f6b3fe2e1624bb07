"""Tests for pathrank.logic.analysis."""

from __future__ import annotations

import numpy as np
import pytest

from pathrank.logic.analysis import (
    HISTOGRAM_COLUMNS,
    ImportanceProfile,
    Perturbation,
    RegionRef,
    curriculum_grounding_compare,
    decrease_rate,
    goal_classes,
    held_out_in_top,
    perturbation_study,
    region_importance,
)
from pathrank.logic.envgraph import make_trajectory
from pathrank.model.network import score_sequence
from pathrank.model.scoring import path_sequence
from tests.conftest import (
    line_graph,
    lively_params,
    make_episode,
    node,
    numeric_gradient,
    observe,
    small_catalog,
    small_vocab,
)


def _profile(values: list[float], classes: list[int]) -> ImportanceProfile:
    return ImportanceProfile(
        importances=tuple(values),
        regions=tuple(RegionRef(pano=i, region=0, landmark_class=c) for i, c in enumerate(classes)),
        tokens=(30, 31),
    )


def test_region_importance_matches_finite_differences() -> None:
    """Per-region importance is the feature gradient of the score summed over dimensions."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)
    graph = line_graph()
    panoramas = observe([graph], catalog)
    params = lively_params(vocab)
    path = [node(graph, "0"), node(graph, "1"), node(graph, "2")]
    episode = make_episode(graph, path, vocab)
    seq = path_sequence(
        params,
        panoramas,
        vocab,
        make_trajectory(graph, path, 0.0),
        episode.instruction.tokens,
    )

    profile = region_importance(params, seq, episode.instruction.tokens)

    numeric = numeric_gradient(
        lambda features: score_sequence(params, seq.with_visual_features(features)),
        seq.visual_features.astype(np.float64),
    )
    expected = numeric[seq.region_rows].sum(axis=1)
    np.testing.assert_allclose(profile.importances, expected, rtol=1e-4, atol=1e-8)
    assert [ref.pano for ref in profile.regions] == list(seq.visual_pano[seq.region_rows])
    assert {ref.landmark_class for ref in profile.regions} == {0, 1, 2}


def test_profile_top_mass_and_rows() -> None:
    """Top-k ranks by importance with earlier regions winning ties."""
    profile = _profile([0.5, 2.0, 0.5, -1.0], [3, 4, 5, 3])

    assert [ref.pano for ref in profile.top(3)] == [1, 0, 2]
    assert profile.mass({3}) == pytest.approx(-0.5)
    rows = profile.histogram_rows()
    assert list(rows[0]) == list(HISTOGRAM_COLUMNS)
    assert rows[3]["importance"] == -1.0


def test_profile_export_form() -> None:
    """Exports carry the decoded instruction and the top regions."""
    vocab = small_vocab()
    profile = _profile([0.1, 0.3], [1, 2])

    exported = profile.as_dict(vocab, k=1)

    assert exported["instruction"] == " ".join(vocab.decode([30, 31]))
    assert exported["deleted_span"] is None
    assert exported["top5"] == [{"pano": 1, "region": 0, "class": 2}]


def test_held_out_in_top() -> None:
    """Only the k most important regions count."""
    profile = _profile([0.9, 0.1], [1, 7])

    assert held_out_in_top(profile, {7}, 1) is False
    assert held_out_in_top(profile, {7}, 2) is True


def test_perturbation_study_deletes_spans() -> None:
    """Deleting the goal phrase changes the profile; an empty span leaves it unchanged."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)
    graph = line_graph()
    panoramas = observe([graph], catalog)
    params = lively_params(vocab, seed=1)
    episode = make_episode(graph, [node(graph, str(i)) for i in range(3)], vocab)
    goal = episode.instruction.goal_span

    empty, deleted = perturbation_study(
        params,
        episode,
        graph,
        panoramas,
        vocab,
        [(0, 0), goal],
    )

    assert empty.mass_change == 0.0
    assert empty.named_classes == frozenset()
    assert deleted.named_classes == goal_classes(episode, vocab) == frozenset({2})
    assert deleted.after.tokens == episode.instruction.without_span(goal)
    assert deleted.after.deleted_span == goal
    assert deleted.before.importances != deleted.after.importances
    assert deleted.mass_change == pytest.approx(deleted.mass_after - deleted.mass_before)


def test_decrease_rate_counts_perturbations_naming_landmarks() -> None:
    """Perturbations without named landmarks are ignored."""
    before = _profile([1.0, 1.0], [2, 3])
    lower = _profile([0.2, 1.0], [2, 3])
    higher = _profile([1.5, 1.0], [2, 3])

    def perturbation(after: ImportanceProfile, named: frozenset[int]) -> Perturbation:
        return Perturbation("ep", (0, 1), named, before, after)

    perturbations = [
        perturbation(lower, frozenset({2})),
        perturbation(higher, frozenset({2})),
        perturbation(lower, frozenset({2})),
        perturbation(lower, frozenset()),
    ]

    assert decrease_rate(perturbations) == pytest.approx(2 / 3)
    assert decrease_rate([]) == 0.0
    assert perturbations[1].top_changed is False


def test_grounding_compare_uses_held_out_goal_episodes() -> None:
    """Only episodes whose goal names a held-out class are compared."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)
    graph = line_graph(n_nodes=8)
    panoramas = observe([graph], catalog)
    held_goal = make_episode(graph, [node(graph, str(i)) for i in (4, 5, 6)], vocab)
    seen_goal = make_episode(graph, [node(graph, "0"), node(graph, "1")], vocab, episode_id="b")
    models = {"full": lively_params(vocab, 0), "no_stage2": lively_params(vocab, 1)}

    report = curriculum_grounding_compare(
        models,
        [held_goal, seen_goal],
        {graph.id: graph},
        panoramas,
        vocab,
        catalog.held_out,
        top_k=100,
    )

    assert report.n_episodes == 1
    assert report.rates == {"full": 1.0, "no_stage2": 1.0}
    assert report.as_dict()["top_k"] == 100


def test_grounding_compare_without_candidates_reports_zero() -> None:
    """No qualifying episodes give zero rates rather than failing."""
    catalog = small_catalog()
    vocab = small_vocab(catalog)
    graph = line_graph()
    episode = make_episode(graph, [node(graph, "0"), node(graph, "1")], vocab)

    report = curriculum_grounding_compare(
        {"full": lively_params(vocab)},
        [episode],
        {graph.id: graph},
        observe([graph], catalog),
        vocab,
        catalog.held_out,
    )

    assert report.rates == {"full": 0.0}
    assert report.n_episodes == 0
