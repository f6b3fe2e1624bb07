"""Region importance from score gradients, and how it moves when words are deleted."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.autodiff import backward
from pathrank.logic.envgraph import make_trajectory
from pathrank.model.network import ParamScope, compatibility_score, forward
from pathrank.model.scoring import path_sequence


if TYPE_CHECKING:
    from collections.abc import Collection, Mapping, Sequence

    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import MultimodalSequence, PanoramaObservation
    from pathrank.logic.instructions import Span
    from pathrank.logic.vocab import Vocabulary
    from pathrank.model.params import ModelParams


DEFAULT_TOP_K = 5
HISTOGRAM_COLUMNS = ("index", "pano", "region", "class", "importance")


@dataclass(frozen=True)
class RegionRef:
    """Where a region sits in the sequence and which landmark it shows."""

    pano: int
    region: int
    landmark_class: int


@dataclass(frozen=True)
class ImportanceProfile:
    """Signed importance of every region, in (panorama, region) order."""

    importances: tuple[float, ...]
    regions: tuple[RegionRef, ...]
    tokens: tuple[int, ...]
    deleted_span: Span | None = None

    def top(self, k: int = DEFAULT_TOP_K) -> tuple[RegionRef, ...]:
        """The k most important regions; earlier regions win ties."""
        order = sorted(range(len(self.regions)), key=lambda i: (-self.importances[i], i))
        return tuple(self.regions[i] for i in order[:k])

    def mass(self, classes: Collection[int]) -> float:
        """Summed importance of regions showing any of the given classes."""
        return float(
            sum(
                value
                for value, ref in zip(self.importances, self.regions, strict=True)
                if ref.landmark_class in classes
            ),
        )

    def histogram_rows(self) -> list[dict[str, object]]:
        """One row per region in sequence order."""
        return [
            {
                "index": index,
                "pano": ref.pano,
                "region": ref.region,
                "class": ref.landmark_class,
                "importance": value,
            }
            for index, (value, ref) in enumerate(zip(self.importances, self.regions, strict=True))
        ]

    def as_dict(self, vocab: Vocabulary, k: int = DEFAULT_TOP_K) -> dict[str, object]:
        """Export form: instruction text, deleted span, importances and the top regions."""
        return {
            "instruction": " ".join(vocab.decode(self.tokens)),
            "deleted_span": list(self.deleted_span) if self.deleted_span else None,
            "importances": list(self.importances),
            "top5": [
                {"pano": ref.pano, "region": ref.region, "class": ref.landmark_class}
                for ref in self.top(k)
            ],
        }


def region_importance(
    params: ModelParams,
    seq: MultimodalSequence,
    tokens: Sequence[int] = (),
    deleted_span: Span | None = None,
) -> ImportanceProfile:
    """Gradient of the compatibility score with respect to each region feature, summed."""
    scope = ParamScope(params, trainable=False, track_features=True)
    encoded = forward(scope, seq)
    score = compatibility_score(scope, encoded)
    grad = backward(scope.tape, score, {"features": encoded.features})["features"]
    rows = seq.region_rows
    sums = np.asarray(grad, dtype=np.float64)[rows].sum(axis=1)
    return ImportanceProfile(
        importances=tuple(float(value) for value in sums),
        regions=tuple(
            RegionRef(
                pano=int(seq.visual_pano[row]),
                region=int(seq.visual_region[row]),
                landmark_class=int(seq.visual_classes[row]),
            )
            for row in rows
        ),
        tokens=tuple(tokens),
        deleted_span=deleted_span,
    )


@dataclass(frozen=True)
class Perturbation:
    """Profiles before and after deleting one span, with the mass on its named landmarks."""

    episode_id: str
    span: Span
    named_classes: frozenset[int]
    before: ImportanceProfile
    after: ImportanceProfile

    @property
    def mass_before(self) -> float:
        """Importance on the named landmarks with the full instruction."""
        return self.before.mass(self.named_classes)

    @property
    def mass_after(self) -> float:
        """Importance on the named landmarks once the span is deleted."""
        return self.after.mass(self.named_classes)

    @property
    def mass_change(self) -> float:
        """After minus before."""
        return self.mass_after - self.mass_before

    @property
    def top_changed(self) -> bool:
        """Return True when the most important region differs after deletion."""
        return self.before.top(1) != self.after.top(1)


def _episode_sequence(
    params: ModelParams,
    episode: EpisodeSpec,
    graph: NavGraph,
    panoramas: Mapping[str, PanoramaObservation],
    vocab: Vocabulary,
    tokens: Sequence[int],
) -> MultimodalSequence:
    trajectory = make_trajectory(graph, episode.path, episode.start_heading)
    return path_sequence(params, panoramas, vocab, trajectory, tokens)


def perturbation_study(
    params: ModelParams,
    episode: EpisodeSpec,
    graph: NavGraph,
    panoramas: Mapping[str, PanoramaObservation],
    vocab: Vocabulary,
    spans: Sequence[Span],
) -> list[Perturbation]:
    """Recompute importance along the ground-truth path with each span deleted."""
    tokens = episode.instruction.tokens
    seq = _episode_sequence(params, episode, graph, panoramas, vocab, tokens)
    before = region_importance(params, seq, tokens)
    results: list[Perturbation] = []
    for span in spans:
        start, stop = span
        named = {vocab.class_of_token(token) for token in tokens[start:stop]}
        remaining = episode.instruction.without_span(span)
        if remaining == tokens:
            after = ImportanceProfile(before.importances, before.regions, tokens, span)
        else:
            perturbed = _episode_sequence(params, episode, graph, panoramas, vocab, remaining)
            after = region_importance(params, perturbed, remaining, span)
        results.append(
            Perturbation(
                episode_id=episode.id,
                span=span,
                named_classes=frozenset(c for c in named if c is not None),
                before=before,
                after=after,
            ),
        )
    return results


def decrease_rate(perturbations: Sequence[Perturbation]) -> float:
    """Share of perturbations whose named-landmark importance mass went down."""
    scored = [p for p in perturbations if p.named_classes]
    if not scored:
        return 0.0
    return sum(p.mass_change < 0.0 for p in scored) / len(scored)


def goal_classes(episode: EpisodeSpec, vocab: Vocabulary) -> frozenset[int]:
    """Landmark classes named by the goal phrase."""
    start, stop = episode.instruction.goal_span
    named = (vocab.class_of_token(token) for token in episode.instruction.tokens[start:stop])
    return frozenset(c for c in named if c is not None)


@dataclass(frozen=True)
class GroundingReport:
    """Per model, the share of held-out-goal episodes with a held-out region in the top k."""

    rates: dict[str, float]
    n_episodes: int
    top_k: int = DEFAULT_TOP_K

    def as_dict(self) -> dict[str, object]:
        """Export form."""
        return {"rates": dict(self.rates), "n_episodes": self.n_episodes, "top_k": self.top_k}


def held_out_in_top(profile: ImportanceProfile, held_out: Collection[int], k: int) -> bool:
    """Return True when any of the k most important regions shows a held-out class."""
    return any(ref.landmark_class in held_out for ref in profile.top(k))


def curriculum_grounding_compare(
    models: Mapping[str, ModelParams],
    episodes: Sequence[EpisodeSpec],
    graphs: Mapping[str, NavGraph],
    panoramas: Mapping[str, PanoramaObservation],
    vocab: Vocabulary,
    held_out: Collection[int],
    top_k: int = DEFAULT_TOP_K,
) -> GroundingReport:
    """Compare grounding of held-out landmarks across models, typically full vs. no stage 2.

    Only episodes whose goal phrase names a held-out class take part.
    """
    chosen = [episode for episode in episodes if goal_classes(episode, vocab) & set(held_out)]
    rates: dict[str, float] = {}
    for name, params in models.items():
        hits = 0
        for episode in chosen:
            tokens = episode.instruction.tokens
            seq = _episode_sequence(
                params,
                episode,
                graphs[episode.graph_id],
                panoramas,
                vocab,
                tokens,
            )
            hits += int(held_out_in_top(region_importance(params, seq, tokens), held_out, top_k))
        rates[name] = hits / len(chosen) if chosen else 0.0
    return GroundingReport(rates=rates, n_episodes=len(chosen), top_k=top_k)
