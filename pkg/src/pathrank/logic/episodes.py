"""Environment splits and navigation episodes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.envgraph import generate_environment, geodesic, shortest_path
from pathrank.logic.errors import GenerationError
from pathrank.logic.instructions import Instruction, synthesize_instruction


if TYPE_CHECKING:
    from collections.abc import Iterable

    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.vocab import LandmarkCatalog, Vocabulary


TRAIN = "train"
VAL_SEEN = "val_seen"
VAL_UNSEEN = "val_unseen"
SPLITS = (TRAIN, VAL_SEEN, VAL_UNSEEN)


@dataclass(frozen=True)
class EpisodeSpec:
    """One navigation task: start, goal, shortest path and its instruction."""

    id: str
    split: str
    graph_id: str
    start: str
    goal: str
    path: tuple[str, ...]
    start_heading: float
    instruction: Instruction

    @property
    def hops(self) -> int:
        """Number of edges on the ground-truth path."""
        return len(self.path) - 1


def derive_seed(*parts: int) -> int:
    """Collapse integer parts into one 32-bit seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def generate_graphs(
    seed: int,
    catalog: LandmarkCatalog,
    *,
    n_train: int,
    n_val_unseen: int,
    n_nodes: int,
    area_m: float,
) -> dict[str, NavGraph]:
    """Generate training and val-unseen environments.

    Training environments only place catalog classes that are not held out; val-unseen
    environments may place any class.
    """
    graphs: dict[str, NavGraph] = {}
    for index in range(n_train):
        graph_id = f"train-{index:02d}"
        graphs[graph_id] = generate_environment(
            derive_seed(seed, 1, index),
            n_nodes,
            area_m,
            catalog.size,
            graph_id=graph_id,
            classes=catalog.seen_classes,
            split=TRAIN,
        )
    for index in range(n_val_unseen):
        graph_id = f"unseen-{index:02d}"
        graphs[graph_id] = generate_environment(
            derive_seed(seed, 2, index),
            n_nodes,
            area_m,
            catalog.size,
            graph_id=graph_id,
            split=VAL_UNSEEN,
        )
    return graphs


def _hop_counts(graph: NavGraph, source: str) -> dict[str, int]:
    hops = {source: 0}
    frontier = [source]
    while frontier:
        following: list[str] = []
        for node in frontier:
            for neighbor in graph.neighbors(node):
                if neighbor not in hops:
                    hops[neighbor] = hops[node] + 1
                    following.append(neighbor)
        frontier = following
    return hops


def sample_episodes(
    graphs: Iterable[NavGraph],
    split: str,
    count: int,
    seed: int,
    vocab: Vocabulary,
    *,
    hop_range: tuple[int, int] = (2, 4),
    max_len: int = 60,
    exclude: frozenset[tuple[str, str]] = frozenset(),
) -> list[EpisodeSpec]:
    """Draw `count` episodes round-robin over graphs with start/goal pairs not in `exclude`."""
    pool = sorted(graphs, key=lambda graph: graph.id)
    if not pool:
        raise GenerationError(f"no environments available for split '{split}'")
    rng = np.random.default_rng(seed)
    low, high = hop_range
    episodes: list[EpisodeSpec] = []
    used = set(exclude)
    attempts = 0
    while len(episodes) < count:
        attempts += 1
        if attempts > 100 * max(count, 1):
            raise GenerationError(f"could not draw {count} distinct '{split}' episodes")
        graph = pool[len(episodes) % len(pool)]
        node_ids = sorted(graph.nodes)
        start = node_ids[int(rng.integers(len(node_ids)))]
        hops = _hop_counts(graph, start)
        goals = sorted(node for node, hop in hops.items() if low <= hop <= high)
        if not goals:
            continue
        goal = goals[int(rng.integers(len(goals)))]
        if (start, goal) in used:
            continue
        path = shortest_path(graph, start, goal)
        if not low <= len(path) - 1 <= high:
            continue
        used.add((start, goal))
        start_heading = float(rng.uniform(0.0, 2.0 * math.pi))
        episode_id = f"{split}-{len(episodes):04d}"
        instruction = synthesize_instruction(
            graph,
            path,
            derive_seed(seed, len(episodes)),
            vocab=vocab,
            start_heading=start_heading,
            max_len=max_len,
        )
        episodes.append(
            EpisodeSpec(
                id=episode_id,
                split=split,
                graph_id=graph.id,
                start=start,
                goal=goal,
                path=path,
                start_heading=start_heading,
                instruction=instruction,
            ),
        )
    return episodes


def verify_shortest(graph: NavGraph, episode: EpisodeSpec) -> bool:
    """Check the ground-truth path is a shortest path that ends at the goal."""
    length = sum(
        graph.edge_length(a, b) for a, b in zip(episode.path, episode.path[1:], strict=False)
    )
    return (
        episode.path[0] == episode.start
        and episode.path[-1] == episode.goal
        and math.isclose(length, geodesic(graph, episode.start, episode.goal), abs_tol=1e-9)
    )
