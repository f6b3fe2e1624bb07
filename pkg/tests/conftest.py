"""Shared builders for pathrank tests."""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from pathrank.config.app import build_run_config
from pathrank.logic.envgraph import Landmark, NavGraph, Node
from pathrank.logic.episodes import TRAIN, EpisodeSpec
from pathrank.logic.instructions import synthesize_instruction
from pathrank.logic.vocab import LandmarkCatalog, Vocabulary
from pathrank.model.config import ModelConfig
from pathrank.model.params import ModelParams
from pathrank.model.scoring import observe_graphs


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import DTypeLike, NDArray

    from pathrank.config.app import RunConfig
    from pathrank.logic.featurize import PanoramaObservation


N_CLASSES = 8
FEATURE_DIM = 8


def landmark(class_id: int, heading: float = 0.0, elevation: float = 0.0) -> Landmark:
    """Landmark with a small box centered on its heading."""
    cx = heading / (2.0 * math.pi)
    return Landmark(
        class_id=class_id,
        heading=heading,
        elevation=elevation,
        box=(max(0.0, cx - 0.05), 0.4, min(1.0, cx + 0.05), 0.6),
    )


def build_graph(
    graph_id: str,
    points: dict[str, tuple[float, float]],
    edges: Sequence[tuple[str, str]],
    classes: dict[str, Sequence[int]] | None = None,
    split: str = TRAIN,
) -> NavGraph:
    """Graph from named 2D points; node `name` becomes `<graph_id>-<name>`."""
    nodes = {}
    for index, (name, (x, y)) in enumerate(points.items()):
        node_classes = (classes or {}).get(name, (index % N_CLASSES,))
        node_id = f"{graph_id}-{name}"
        nodes[node_id] = Node(
            id=node_id,
            xyz=(x, y, 0.0),
            landmarks=tuple(
                landmark(class_id, heading=0.5 + 1.7 * k)
                for k, class_id in enumerate(node_classes)
            ),
        )
    return NavGraph(
        id=graph_id,
        nodes=nodes,
        edges=tuple((f"{graph_id}-{a}", f"{graph_id}-{b}") for a, b in edges),
        split=split,
    )


def line_graph(n_nodes: int = 5, spacing: float = 2.0, graph_id: str = "line") -> NavGraph:
    """Nodes 0..n-1 along the x axis, `spacing` meters apart, node i showing class i."""
    points = {str(i): (i * spacing, 0.0) for i in range(n_nodes)}
    edges = [(str(i), str(i + 1)) for i in range(n_nodes - 1)]
    return build_graph(graph_id, points, edges)


def branching_graph(graph_id: str = "fork") -> NavGraph:
    """Start `s` with three branches; the goal `g` lies 8 m east of `s`."""
    points = {
        "s": (0.0, 0.0),
        "a": (4.0, 0.0),
        "g": (8.0, 0.0),
        "b": (0.0, 4.0),
        "c": (4.0, 4.0),
        "d": (0.0, -4.0),
    }
    edges = [("s", "a"), ("a", "g"), ("s", "b"), ("b", "c"), ("c", "g"), ("s", "d")]
    return build_graph(graph_id, points, edges)


def node(graph: NavGraph, name: str) -> str:
    """Full node id of a named node."""
    return f"{graph.id}-{name}"


def small_catalog(n_classes: int = N_CLASSES, seed: int = 0) -> LandmarkCatalog:
    """Catalog with a quarter of its classes held out."""
    return LandmarkCatalog.build(n_classes, FEATURE_DIM, 0.25, seed)


def small_vocab(catalog: LandmarkCatalog | None = None) -> Vocabulary:
    """Vocabulary of the small catalog."""
    return Vocabulary.for_catalog(catalog or small_catalog())


def make_episode(
    graph: NavGraph,
    path: Sequence[str],
    vocab: Vocabulary,
    *,
    episode_id: str = "ep-0000",
    split: str = TRAIN,
    start_heading: float = 0.0,
    seed: int = 0,
) -> EpisodeSpec:
    """Episode following `path` with a synthesized instruction."""
    return EpisodeSpec(
        id=episode_id,
        split=split,
        graph_id=graph.id,
        start=path[0],
        goal=path[-1],
        path=tuple(path),
        start_heading=start_heading,
        instruction=synthesize_instruction(
            graph,
            path,
            seed,
            vocab=vocab,
            start_heading=start_heading,
        ),
    )


def observe(
    graphs: Sequence[NavGraph],
    catalog: LandmarkCatalog,
    seed: int = 0,
    k_max: int = 4,
) -> dict[str, PanoramaObservation]:
    """Panorama of every node of the given graphs."""
    return observe_graphs(graphs, catalog, seed, k_max, 0.1)


def tiny_model_config(vocab: Vocabulary, **overrides: int | float) -> ModelConfig:
    """Two-layer model small enough for finite-difference checks."""
    values: dict[str, int | float] = {
        "hidden": 8,
        "n_lang_layers": 2,
        "n_vis_layers": 1,
        "n_coattn_layers": 1,
        "n_heads": 2,
        "d_v": FEATURE_DIM,
        "k_max": 4,
        "n_max": 7,
        "l_max": 60,
        "ffn_multiplier": 2,
    }
    values.update(overrides)
    return ModelConfig(
        vocab_size=vocab.size,
        n_classes=vocab.n_classes,
        **values,  # type: ignore[arg-type]
    )


def tiny_params(
    vocab: Vocabulary,
    seed: int = 0,
    dtype: DTypeLike = np.float32,
    **overrides: int | float,
) -> ModelParams:
    """Freshly initialized tiny model."""
    return ModelParams.init(tiny_model_config(vocab, **overrides), seed, dtype)


def numeric_gradient(
    fn: Callable[[NDArray[np.float64]], float],
    x: NDArray[np.float64],
    eps: float = 1e-6,
) -> NDArray[np.float64]:
    """Central-difference gradient of a scalar function of an array."""
    base = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(base)
    for index in np.ndindex(base.shape):
        plus = base.copy()
        minus = base.copy()
        plus[index] += eps
        minus[index] -= eps
        grad[index] = (fn(plus) - fn(minus)) / (2.0 * eps)
    return grad


def selection_score_gradient(scores: NDArray[np.floating], positive: int) -> NDArray[np.float64]:
    """Closed-form gradient of the selection cross-entropy in the scores: softmax minus one-hot."""
    values = np.asarray(scores, dtype=np.float64)
    p = np.exp(values - values.max())
    p /= p.sum()
    p[positive] -= 1.0
    return p


TINY_RUN: dict[str, object] = {
    "seed": 3,
    "color_flag": False,
    "log_every": 1,
    "environment": {
        "n_train": 2,
        "n_val_unseen": 1,
        "n_nodes": 8,
        "area_m": 10.0,
        "n_classes": 10,
    },
    "episodes": {
        "train": 6,
        "val_seen": 3,
        "val_unseen": 3,
        "pretrain": 4,
        "hop_min": 1,
        "hop_max": 3,
    },
    "model": {
        "hidden": 8,
        "n_lang_layers": 2,
        "n_vis_layers": 1,
        "n_coattn_layers": 1,
        "n_heads": 2,
        "d_v": 8,
        "k_max": 4,
        "ffn_multiplier": 2,
    },
    "stages": {
        "stage1": {"epochs": 1, "batch_size": 2, "corpus_size": 4},
        "stage2": {"epochs": 1, "batch_size": 2, "corpus_size": 4},
        "stage3": {"epochs": 1, "batch_size": 2, "corpus_size": 4},
        "finetune": {"epochs": 2, "batch_size": 2},
    },
    "mining": {"beam_width": 8},
    "evaluation": {"grid_step": 0.25, "early_stop_episodes": 3, "ablation_seeds": 1},
    "analysis": {"episodes": 2, "top_k": 3},
}


def tiny_run_config(workdir: Path, overrides: Sequence[str] = ()) -> RunConfig:
    """Run config for end-to-end command tests, writing below `workdir`."""
    config = build_run_config(dict(TINY_RUN), Path("test.yaml"), overrides, env={})
    config.workdir = str(workdir)
    return config


def lively_params(vocab: Vocabulary, seed: int = 0) -> ModelParams:
    """Float64 tiny model with weights large enough for visible gradients."""
    params = tiny_params(vocab, seed, np.float64)
    return params.replace(
        {
            name: params[name] * 25.0
            for name in params
            if not name.endswith((".gamma", ".beta", ".b"))
        },
    )
