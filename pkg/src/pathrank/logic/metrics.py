"""Navigation metrics and path selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.envgraph import SUCCESS_RADIUS_M, geodesic
from pathrank.logic.errors import InvalidTrajectoryError


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from pathrank.logic.envgraph import NavGraph, Trajectory
    from pathrank.logic.episodes import EpisodeSpec


METRIC_NAMES = ("sr", "osr", "ne", "pl", "spl")


@dataclass(frozen=True)
class MetricsRecord:
    """Per-episode outcome: SR/OSR as 0/1, NE/PL in meters, SPL in [0, 1]."""

    episode_id: str
    sr: float
    osr: float
    ne: float
    pl: float
    spl: float

    def as_row(self) -> dict[str, object]:
        """Flat mapping for CSV export."""
        return {
            "episode_id": self.episode_id,
            "sr": self.sr,
            "osr": self.osr,
            "ne": self.ne,
            "pl": self.pl,
            "spl": self.spl,
        }


@dataclass(frozen=True)
class MetricsSummary:
    """Means over episodes; SR, OSR and SPL are reported as percentages."""

    count: int
    sr: float
    osr: float
    ne: float
    pl: float
    spl: float


def path_length(graph: NavGraph, nodes: Sequence[str]) -> float:
    """Sum of traversed edge lengths."""
    return sum(graph.edge_length(a, b) for a, b in zip(nodes, nodes[1:], strict=False))


def exploration_walk(graph: NavGraph, paths: Sequence[Sequence[str]]) -> tuple[str, ...]:
    """Physical walk that traces every path from the shared start and returns to it.

    Paths are visited depth-first over their prefix tree, so shared prefixes are walked
    once in each direction.
    """
    if not paths:
        return ()
    start = paths[0][0]
    children: dict[tuple[str, ...], list[str]] = {}
    for path in paths:
        if path[0] != start:
            raise InvalidTrajectoryError("exploration paths must share their start node")
        for depth in range(1, len(path)):
            prefix = tuple(path[:depth])
            siblings = children.setdefault(prefix, [])
            if path[depth] not in siblings:
                siblings.append(path[depth])

    walk = [start]

    def visit(prefix: tuple[str, ...]) -> None:
        for child in children.get(prefix, []):
            walk.append(child)
            visit((*prefix, child))
            walk.append(prefix[-1])

    visit((start,))
    return tuple(walk)


def compute_metrics(
    graph: NavGraph,
    selected: Trajectory,
    episode: EpisodeSpec,
    *,
    leaderboard_mode: bool = False,
    exploration: Trajectory | None = None,
) -> MetricsRecord:
    """Score the selected trajectory of one episode.

    In leaderboard mode the exploration walk is prepended to the selected path, so its
    length counts toward PL (and therefore SPL).
    """
    if not selected.nodes:
        raise InvalidTrajectoryError("cannot score an empty trajectory")
    ne = geodesic(graph, selected.final, episode.goal)
    success = ne < SUCCESS_RADIUS_M
    oracle = any(geodesic(graph, node, episode.goal) < SUCCESS_RADIUS_M for node in selected.nodes)
    pl = path_length(graph, selected.nodes)
    if leaderboard_mode and exploration is not None:
        pl += path_length(graph, exploration.nodes)
    shortest = geodesic(graph, episode.start, episode.goal)
    spl = (shortest / max(pl, shortest) if max(pl, shortest) > 0.0 else 1.0) if success else 0.0
    return MetricsRecord(
        episode_id=episode.id,
        sr=float(success),
        osr=float(oracle),
        ne=ne,
        pl=pl,
        spl=spl,
    )


def summarize(records: Sequence[MetricsRecord]) -> MetricsSummary:
    """Aggregate per-episode records into means."""
    if not records:
        return MetricsSummary(count=0, sr=0.0, osr=0.0, ne=0.0, pl=0.0, spl=0.0)
    table = np.array([[getattr(record, name) for name in METRIC_NAMES] for record in records])
    sr, osr, ne, pl, spl = table.mean(axis=0)
    return MetricsSummary(
        count=len(records),
        sr=100.0 * float(sr),
        osr=100.0 * float(osr),
        ne=float(ne),
        pl=float(pl),
        spl=100.0 * float(spl),
    )


def select_index(scores: Sequence[float] | NDArray[np.floating]) -> int:
    """Index of the highest score; ties resolve to the earliest candidate."""
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise InvalidTrajectoryError("cannot select from an empty candidate set")
    return int(np.argmax(values))


def select_path(
    trajectories: Sequence[Trajectory],
    scores: Sequence[float] | NDArray[np.floating],
) -> Trajectory:
    """Trajectory with the highest score, earliest first on ties."""
    if len(trajectories) != len(scores):
        raise ValueError("one score per candidate is required")
    return trajectories[select_index(scores)]
