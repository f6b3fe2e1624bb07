"""Navigation-graph environments, trajectories and geodesic utilities."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from pathrank.logic.errors import GenerationError, InvalidTrajectoryError, UnreachableError


if TYPE_CHECKING:
    from collections.abc import Sequence


SUCCESS_RADIUS_M = 3.0
DEFAULT_TARGET_DEGREE = 5.5
RADIUS_GROWTH = 1.05
EDGE_TOLERANCE_M = 1e-9

type Box = tuple[float, float, float, float]


def normalize_heading(angle: float) -> float:
    """Map an angle into [0, 2π)."""
    wrapped = math.fmod(angle, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    return 0.0 if wrapped >= 2.0 * math.pi else wrapped


def wrap_angle(angle: float) -> float:
    """Map an angle into (-π, π]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Landmark:
    """One object placed in a panorama: class, direction and panorama box."""

    class_id: int
    heading: float
    elevation: float
    box: Box


@dataclass(frozen=True)
class Node:
    """A panorama viewpoint."""

    id: str
    xyz: tuple[float, float, float]
    landmarks: tuple[Landmark, ...]


@dataclass(frozen=True, eq=False)
class NavGraph:
    """Undirected, connected navigation graph over panorama viewpoints."""

    id: str
    nodes: dict[str, Node]
    edges: tuple[tuple[str, str], ...]
    split: str = "train"
    _adjacency: dict[str, tuple[str, ...]] = field(init=False, repr=False)
    _distances: dict[str, dict[str, float]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        """Index adjacency and validate edges."""
        adjacency: dict[str, set[str]] = {node_id: set() for node_id in self.nodes}
        for a, b in self.edges:
            if a == b:
                raise GenerationError(f"self-loop on node '{a}'")
            if a not in adjacency or b not in adjacency:
                raise GenerationError(f"edge ({a}, {b}) references an unknown node")
            adjacency[a].add(b)
            adjacency[b].add(a)
        object.__setattr__(
            self,
            "_adjacency",
            {node_id: tuple(sorted(neighbors)) for node_id, neighbors in adjacency.items()},
        )
        object.__setattr__(self, "_distances", {})

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        """Adjacent node ids, sorted."""
        return self._adjacency[node_id]

    def is_adjacent(self, a: str, b: str) -> bool:
        """Return True when an edge joins a and b."""
        return b in self._adjacency.get(a, ())

    def edge_length(self, a: str, b: str) -> float:
        """Euclidean length of the edge between two adjacent nodes."""
        if not self.is_adjacent(a, b):
            raise InvalidTrajectoryError(f"nodes '{a}' and '{b}' are not adjacent")
        return euclidean(self.nodes[a].xyz, self.nodes[b].xyz)

    def heading(self, a: str, b: str) -> float:
        """Heading in [0, 2π) of the horizontal direction from a to b (counter-clockwise)."""
        ax, ay, _ = self.nodes[a].xyz
        bx, by, _ = self.nodes[b].xyz
        return normalize_heading(math.atan2(by - ay, bx - ax))

    def elevation(self, a: str, b: str) -> float:
        """Pitch of the straight line from a to b, in radians."""
        ax, ay, az = self.nodes[a].xyz
        bx, by, bz = self.nodes[b].xyz
        return math.atan2(bz - az, math.hypot(bx - ax, by - ay))

    def distances_from(self, source: str) -> dict[str, float]:
        """Geodesic distance from `source` to every reachable node (cached)."""
        cached = self._distances.get(source)
        if cached is None:
            cached = _dijkstra(self, source)
            self._distances[source] = cached
        return cached

    def is_connected(self) -> bool:
        """Return True when every node is reachable from every other node."""
        if not self.nodes:
            return False
        start = min(self.nodes)
        seen = {start}
        queue = deque([start])
        while queue:
            current = queue.popleft()
            for neighbor in self._adjacency[current]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    queue.append(neighbor)
        return len(seen) == len(self.nodes)


@dataclass(frozen=True)
class Trajectory:
    """Node sequence with the agent pose (heading, elevation) on arrival at each node."""

    nodes: tuple[str, ...]
    headings: tuple[float, ...]
    elevations: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        """Validate shape invariants."""
        if not self.nodes:
            raise InvalidTrajectoryError("trajectory must contain at least one node")
        if len(self.headings) != len(self.nodes):
            raise InvalidTrajectoryError("one heading per trajectory node is required")
        if not self.elevations:
            object.__setattr__(self, "elevations", (0.0,) * len(self.nodes))
        elif len(self.elevations) != len(self.nodes):
            raise InvalidTrajectoryError("one elevation per trajectory node is required")

    def __len__(self) -> int:
        """Number of nodes."""
        return len(self.nodes)

    @property
    def final(self) -> str:
        """Last node."""
        return self.nodes[-1]


def euclidean(a: Sequence[float], b: Sequence[float]) -> float:
    """Euclidean distance between two 3D points."""
    return math.dist(a, b)


def make_trajectory(graph: NavGraph, nodes: Sequence[str], start_heading: float) -> Trajectory:
    """Build a graph-valid trajectory; arrival headings follow the traversed edges."""
    if not nodes:
        raise InvalidTrajectoryError("trajectory must contain at least one node")
    headings = [normalize_heading(start_heading)]
    elevations = [0.0]
    for previous, current in zip(nodes, nodes[1:], strict=False):
        if not graph.is_adjacent(previous, current):
            raise InvalidTrajectoryError(f"nodes '{previous}' and '{current}' are not adjacent")
        headings.append(graph.heading(previous, current))
        elevations.append(graph.elevation(previous, current))
    return Trajectory(nodes=tuple(nodes), headings=tuple(headings), elevations=tuple(elevations))


def _dijkstra(graph: NavGraph, source: str) -> dict[str, float]:
    if source not in graph.nodes:
        raise KeyError(f"unknown node '{source}'")
    distances: dict[str, float] = {source: 0.0}
    heap: list[tuple[float, str]] = [(0.0, source)]
    done: set[str] = set()
    while heap:
        distance, current = heapq.heappop(heap)
        if current in done:
            continue
        done.add(current)
        for neighbor in graph.neighbors(current):
            candidate = distance + graph.edge_length(current, neighbor)
            if candidate < distances.get(neighbor, math.inf):
                distances[neighbor] = candidate
                heapq.heappush(heap, (candidate, neighbor))
    return distances


def geodesic(graph: NavGraph, a: str, b: str) -> float:
    """Shortest-path length in meters between two nodes."""
    if a == b:
        if a not in graph.nodes:
            raise KeyError(f"unknown node '{a}'")
        return 0.0
    distance = graph.distances_from(a).get(b)
    if distance is None:
        raise UnreachableError(f"node '{b}' is unreachable from '{a}' in graph '{graph.id}'")
    return distance


def shortest_path(graph: NavGraph, a: str, b: str) -> tuple[str, ...]:
    """One shortest path from a to b; ties resolve toward smaller node ids."""
    distances = graph.distances_from(b)
    if a not in distances:
        raise UnreachableError(f"node '{b}' is unreachable from '{a}' in graph '{graph.id}'")
    path = [a]
    current = a
    while current != b:
        remaining = distances[current]
        current = min(
            (
                neighbor
                for neighbor in graph.neighbors(current)
                if neighbor in distances
                and abs(graph.edge_length(current, neighbor) + distances[neighbor] - remaining)
                <= EDGE_TOLERANCE_M
            ),
        )
        path.append(current)
    return tuple(path)


def is_success(graph: NavGraph, trajectory: Trajectory, goal: str) -> bool:
    """True iff the trajectory stops strictly within 3 m (geodesic) of the goal."""
    return geodesic(graph, trajectory.final, goal) < SUCCESS_RADIUS_M


def _landmark_box(heading: float, elevation: float, width: float, height: float) -> Box:
    cx = heading / (2.0 * math.pi)
    cy = 0.5 - elevation / math.pi
    x1, x2 = max(0.0, cx - width / 2.0), min(1.0, cx + width / 2.0)
    y1, y2 = max(0.0, cy - height / 2.0), min(1.0, cy + height / 2.0)
    return (x1, y1, x2, y2)


def place_landmarks(
    rng: np.random.Generator,
    classes: Sequence[int],
    min_count: int = 3,
    max_count: int = 8,
) -> tuple[Landmark, ...]:
    """Draw 3-8 landmarks with distinct classes where the class pool allows it."""
    count = int(rng.integers(min_count, max_count + 1))
    pool = np.asarray(classes, dtype=np.int64)
    chosen = rng.choice(pool, size=count, replace=count > pool.size)
    landmarks = []
    for class_id in chosen:
        heading = float(rng.uniform(0.0, 2.0 * math.pi))
        elevation = float(rng.uniform(-0.6, 0.6))
        width = float(rng.uniform(0.04, 0.12))
        height = float(rng.uniform(0.1, 0.3))
        landmarks.append(
            Landmark(
                class_id=int(class_id),
                heading=heading,
                elevation=elevation,
                box=_landmark_box(heading, elevation, width, height),
            ),
        )
    return tuple(landmarks)


def connection_radius(n_nodes: int, area_m: float, target_degree: float) -> float:
    """Random-geometric-graph radius giving roughly `target_degree` neighbors."""
    return 1.1 * math.sqrt(target_degree * area_m * area_m / (math.pi * max(n_nodes, 1)))


def generate_environment(
    seed: int,
    n_nodes: int,
    area_m: float,
    landmark_vocab_size: int,
    *,
    graph_id: str = "env",
    classes: Sequence[int] | None = None,
    split: str = "train",
    max_retries: int = 50,
    target_degree: float = DEFAULT_TARGET_DEGREE,
) -> NavGraph:
    """Generate a connected random geometric graph with landmark-bearing panoramas."""
    if n_nodes < 2:
        raise GenerationError("an environment needs at least 2 nodes")
    pool = tuple(range(landmark_vocab_size)) if classes is None else tuple(classes)
    if not pool:
        raise GenerationError("no landmark classes available for placement")

    rng = np.random.default_rng(seed)
    radius = connection_radius(n_nodes, area_m, target_degree)
    for _ in range(max_retries):
        xy = rng.uniform(0.0, area_m, size=(n_nodes, 2))
        z = rng.uniform(0.0, 0.2, size=n_nodes)
        ids = [f"{graph_id}-n{i:03d}" for i in range(n_nodes)]
        points = [(float(xy[i, 0]), float(xy[i, 1]), float(z[i])) for i in range(n_nodes)]
        edges = tuple(
            (ids[i], ids[j])
            for i in range(n_nodes)
            for j in range(i + 1, n_nodes)
            if euclidean(points[i], points[j]) <= radius
        )
        nodes = {
            ids[i]: Node(id=ids[i], xyz=points[i], landmarks=place_landmarks(rng, pool))
            for i in range(n_nodes)
        }
        graph = NavGraph(id=graph_id, nodes=nodes, edges=edges, split=split)
        if graph.is_connected():
            return graph
        radius *= RADIUS_GROWTH
    raise GenerationError(
        f"graph '{graph_id}' (seed {seed}) still disconnected after {max_retries} attempts",
    )
