"""Tests for pathrank.logic.envgraph."""

from __future__ import annotations

import itertools
import math

import pytest

from pathrank.logic.envgraph import (
    SUCCESS_RADIUS_M,
    NavGraph,
    Node,
    generate_environment,
    geodesic,
    is_success,
    make_trajectory,
    normalize_heading,
    shortest_path,
    wrap_angle,
)
from pathrank.logic.errors import GenerationError, InvalidTrajectoryError, UnreachableError
from tests.conftest import branching_graph, line_graph, node


def _floyd_warshall(graph: NavGraph) -> dict[tuple[str, str], float]:
    ids = sorted(graph.nodes)
    dist = {(a, b): (0.0 if a == b else math.inf) for a in ids for b in ids}
    for a, b in graph.edges:
        length = graph.edge_length(a, b)
        dist[a, b] = dist[b, a] = min(dist[a, b], length)
    for k, i, j in itertools.product(ids, ids, ids):
        if dist[i, k] + dist[k, j] < dist[i, j]:
            dist[i, j] = dist[i, k] + dist[k, j]
    return dist


def test_angle_normalization_ranges() -> None:
    """Headings map to [0, 2π) and differences to (-π, π]."""
    assert normalize_heading(-math.pi / 2) == pytest.approx(3 * math.pi / 2)
    assert normalize_heading(2 * math.pi) == pytest.approx(0.0)
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_headings_are_counter_clockwise_from_east() -> None:
    """North of a node is a quarter turn counter-clockwise."""
    graph = branching_graph()

    assert graph.heading(node(graph, "s"), node(graph, "a")) == pytest.approx(0.0)
    assert graph.heading(node(graph, "s"), node(graph, "b")) == pytest.approx(math.pi / 2)
    assert graph.heading(node(graph, "s"), node(graph, "d")) == pytest.approx(3 * math.pi / 2)


def test_graph_rejects_self_loops_and_unknown_nodes() -> None:
    """Edges must join two distinct known nodes."""
    nodes = {"a": Node(id="a", xyz=(0.0, 0.0, 0.0), landmarks=())}

    with pytest.raises(GenerationError, match="self-loop"):
        NavGraph(id="g", nodes=nodes, edges=(("a", "a"),))
    with pytest.raises(GenerationError, match="unknown node"):
        NavGraph(id="g", nodes=nodes, edges=(("a", "b"),))


def test_geodesic_matches_floyd_warshall_on_generated_graphs() -> None:
    """Dijkstra distances agree with an all-pairs reference on random environments."""
    for seed in range(3):
        graph = generate_environment(seed, 12, 15.0, 10, graph_id=f"g{seed}")
        reference = _floyd_warshall(graph)

        for a, b in itertools.product(sorted(graph.nodes), repeat=2):
            assert geodesic(graph, a, b) == pytest.approx(reference[a, b])


def test_geodesic_is_symmetric_and_zero_on_diagonal() -> None:
    """Distance is a metric on the node set."""
    graph = branching_graph()

    for a, b in itertools.combinations(sorted(graph.nodes), 2):
        assert geodesic(graph, a, b) == pytest.approx(geodesic(graph, b, a))
    assert geodesic(graph, node(graph, "c"), node(graph, "c")) == 0.0


def test_shortest_path_length_equals_geodesic() -> None:
    """The returned path is valid and as long as the geodesic."""
    graph = generate_environment(5, 15, 20.0, 10)

    for a, b in itertools.combinations(sorted(graph.nodes)[:6], 2):
        path = shortest_path(graph, a, b)
        length = sum(graph.edge_length(x, y) for x, y in itertools.pairwise(path))

        assert path[0] == a
        assert path[-1] == b
        assert length == pytest.approx(geodesic(graph, a, b))


def test_shortest_path_prefers_direct_route() -> None:
    """The fork's direct branch is shorter than the northern detour."""
    graph = branching_graph()

    assert shortest_path(graph, node(graph, "s"), node(graph, "g")) == (
        node(graph, "s"),
        node(graph, "a"),
        node(graph, "g"),
    )


def test_disconnected_nodes_are_unreachable() -> None:
    """Geodesic and shortest path raise for nodes in different components."""
    nodes = {
        name: Node(id=name, xyz=(float(i), 0.0, 0.0), landmarks=())
        for i, name in enumerate(("a", "b", "c"))
    }
    graph = NavGraph(id="split", nodes=nodes, edges=(("a", "b"),))

    assert graph.is_connected() is False
    with pytest.raises(UnreachableError):
        geodesic(graph, "a", "c")
    with pytest.raises(UnreachableError):
        shortest_path(graph, "c", "a")


def test_success_radius_is_strict() -> None:
    """Stopping exactly 3 m from the goal is a failure."""
    graph = line_graph(n_nodes=4, spacing=1.5)
    start = node(graph, "0")

    exactly = make_trajectory(graph, [start, node(graph, "1"), node(graph, "2")], 0.0)
    closer = make_trajectory(graph, [start, node(graph, "1")], 0.0)

    assert geodesic(graph, exactly.final, start) == pytest.approx(SUCCESS_RADIUS_M)
    assert is_success(graph, exactly, start) is False
    assert is_success(graph, closer, start) is True


def test_make_trajectory_rejects_non_adjacent_steps() -> None:
    """Consecutive nodes must share an edge."""
    graph = line_graph()

    with pytest.raises(InvalidTrajectoryError, match="not adjacent"):
        make_trajectory(graph, [node(graph, "0"), node(graph, "2")], 0.0)
    with pytest.raises(InvalidTrajectoryError):
        make_trajectory(graph, [], 0.0)


def test_make_trajectory_headings_follow_edges() -> None:
    """Arrival headings point along the traversed edges."""
    graph = branching_graph()
    path = [node(graph, "s"), node(graph, "b"), node(graph, "c")]

    trajectory = make_trajectory(graph, path, 1.0)

    assert trajectory.headings[0] == pytest.approx(1.0)
    assert trajectory.headings[1] == pytest.approx(math.pi / 2)
    assert trajectory.headings[2] == pytest.approx(0.0)
    assert trajectory.final == node(graph, "c")
    assert len(trajectory) == 3


def test_generate_environment_is_deterministic_and_connected() -> None:
    """The same seed yields the same connected graph."""
    first = generate_environment(11, 20, 30.0, 40, graph_id="env")
    second = generate_environment(11, 20, 30.0, 40, graph_id="env")

    assert first.is_connected()
    assert sorted(first.nodes) == [f"env-n{i:03d}" for i in range(20)]
    assert first.edges == second.edges
    assert [n.xyz for n in first.nodes.values()] == [n.xyz for n in second.nodes.values()]


def test_generate_environment_places_landmarks_from_the_pool() -> None:
    """Every node carries 3-8 landmarks drawn from the allowed classes."""
    graph = generate_environment(2, 10, 12.0, 40, classes=(1, 4, 9))

    for env_node in graph.nodes.values():
        assert 3 <= len(env_node.landmarks) <= 8
        assert {landmark.class_id for landmark in env_node.landmarks} <= {1, 4, 9}
        for landmark in env_node.landmarks:
            x1, y1, x2, y2 = landmark.box
            assert 0.0 <= x1 < x2 <= 1.0
            assert 0.0 <= y1 < y2 <= 1.0


def test_generate_environment_rejects_degenerate_inputs() -> None:
    """A single node or an empty class pool cannot form an environment."""
    with pytest.raises(GenerationError):
        generate_environment(0, 1, 10.0, 5)
    with pytest.raises(GenerationError):
        generate_environment(0, 5, 10.0, 5, classes=())


def test_generated_graphs_have_moderate_mean_degree() -> None:
    """Fifty nodes on a 30 m square average between 3 and 8 neighbors."""
    for seed in range(20):
        graph = generate_environment(seed, 50, 30.0, 40, graph_id=f"env{seed}")

        mean_degree = 2.0 * len(graph.edges) / len(graph.nodes)

        assert 3.0 <= mean_degree <= 8.0
