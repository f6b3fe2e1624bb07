"""Region rendering, region deduplication and multimodal sequence assembly."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray

from pathrank.logic.envgraph import wrap_angle
from pathrank.logic.errors import TruncationError
from pathrank.logic.instructions import Instruction


if TYPE_CHECKING:
    from collections.abc import Mapping, Sequence

    from pathrank.logic.envgraph import Box, Node, Trajectory
    from pathrank.logic.vocab import LandmarkCatalog, Vocabulary


SPATIAL_DIM = 11
VIEW_HEADINGS = 12
VIEW_ELEVATIONS_DEG = (-30.0, 0.0, 30.0)
HALF_FOV_RAD = math.radians(40.0)
DEFAULT_CENTER_CUTOFF_DEG = 20.0
DEFAULT_SIM_THRESHOLD = 0.1
FEATURE_NOISE = 0.02
ANGLE_JITTER = 0.005
IMG_REGION = -1


@dataclass(frozen=True, eq=False)
class Region:
    """One detected image region of a panorama.

    `heading` and `elevation` are in the panorama frame; `view_heading` and
    `view_elevation` locate the perspective view the region was detected in.
    """

    feature: NDArray[np.float32]
    box: Box
    heading: float
    elevation: float
    detection_score: float
    landmark_class: int
    view_heading: float = 0.0
    view_elevation: float = 0.0

    def __post_init__(self) -> None:
        """Validate the box and elevation ranges."""
        x1, y1, x2, y2 = self.box
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate region box {self.box}")
        if not -math.pi / 2.0 <= self.elevation <= math.pi / 2.0:
            raise ValueError(f"region elevation {self.elevation} outside [-π/2, π/2]")

    @property
    def off_center(self) -> tuple[float, float]:
        """Absolute heading and elevation offsets from the source view center."""
        return (
            abs(wrap_angle(self.heading - self.view_heading)),
            abs(self.elevation - self.view_elevation),
        )


@dataclass(frozen=True, eq=False)
class PanoramaObservation:
    """Deduplicated regions of one node."""

    node_id: str
    regions: tuple[Region, ...]

    def __len__(self) -> int:
        """Number of regions."""
        return len(self.regions)

    @property
    def features(self) -> NDArray[np.float32]:
        """Region features stacked into one (K, d_v) block."""
        return np.stack([region.feature for region in self.regions]).astype(np.float32)


@dataclass(frozen=True, eq=False)
class MultimodalSequence:
    """Joint input of the two streams, laid out as `<IMG> r.. <IMG> r.. | <CLS> w.. <SEP>`.

    Visual rows at IMG markers carry zero features and spatial vectors, a region index
    of -1 and a landmark class of -1.
    """

    text_ids: NDArray[np.int64]
    text_segments: NDArray[np.int64]
    text_mask: NDArray[np.float32]
    visual_features: NDArray[np.float32]
    visual_spatial: NDArray[np.float32]
    visual_pano: NDArray[np.int64]
    visual_region: NDArray[np.int64]
    visual_classes: NDArray[np.int64]

    @property
    def n_text(self) -> int:
        """Number of text rows, padding included."""
        return int(self.text_ids.shape[0])

    @property
    def n_visual(self) -> int:
        """Number of visual rows, IMG markers included."""
        return int(self.visual_features.shape[0])

    @property
    def region_rows(self) -> NDArray[np.int64]:
        """Visual row indices holding regions, in sequence order."""
        return np.flatnonzero(self.visual_region >= 0).astype(np.int64)

    @property
    def img_rows(self) -> NDArray[np.int64]:
        """Visual row indices of IMG markers."""
        return np.flatnonzero(self.visual_region < 0).astype(np.int64)

    def with_text(
        self,
        text_ids: NDArray[np.int64],
        text_segments: NDArray[np.int64] | None = None,
        text_mask: NDArray[np.float32] | None = None,
    ) -> MultimodalSequence:
        """Copy with a replaced text stream."""
        n = text_ids.shape[0]
        return MultimodalSequence(
            text_ids=text_ids,
            text_segments=np.zeros(n, dtype=np.int64) if text_segments is None else text_segments,
            text_mask=np.ones(n, dtype=np.float32) if text_mask is None else text_mask,
            visual_features=self.visual_features,
            visual_spatial=self.visual_spatial,
            visual_pano=self.visual_pano,
            visual_region=self.visual_region,
            visual_classes=self.visual_classes,
        )

    def with_visual_features(self, features: NDArray[np.float32]) -> MultimodalSequence:
        """Copy with replaced visual features (masking, attribution probes)."""
        return MultimodalSequence(
            text_ids=self.text_ids,
            text_segments=self.text_segments,
            text_mask=self.text_mask,
            visual_features=features,
            visual_spatial=self.visual_spatial,
            visual_pano=self.visual_pano,
            visual_region=self.visual_region,
            visual_classes=self.visual_classes,
        )

    def padded(self, extra: int, pad_id: int) -> MultimodalSequence:
        """Copy with `extra` masked-out padding tokens appended to the text stream."""
        return self.with_text(
            np.concatenate([self.text_ids, np.full(extra, pad_id, dtype=np.int64)]),
            np.concatenate([self.text_segments, np.zeros(extra, dtype=np.int64)]),
            np.concatenate([self.text_mask, np.zeros(extra, dtype=np.float32)]),
        )


def _angle_pair(angle: float) -> tuple[float, float]:
    return (math.cos(angle), math.sin(angle))


def spatial_vector(region: Region, heading_cur: float, heading_next: float) -> NDArray[np.float64]:
    """11-dim box, elevation and relative-heading encoding of one region."""
    x1, y1, x2, y2 = region.box
    h_cur = wrap_angle(region.heading - heading_cur)
    h_next = wrap_angle(region.heading - heading_next)
    return np.array(
        [
            x1,
            y1,
            x2,
            y2,
            (x2 - x1) * (y2 - y1),
            *_angle_pair(region.elevation),
            *_angle_pair(h_cur),
            *_angle_pair(h_next),
        ],
        dtype=np.float64,
    )


def last_step_spatial(region: Region, heading_cur: float) -> NDArray[np.float64]:
    """Spatial vector for the final panorama, which has no next direction."""
    return spatial_vector(region, heading_cur, heading_cur)


def region_distance(a: Region, b: Region) -> float:
    """Cosine distance of features plus absolute heading and elevation gaps, in radians."""
    norm = float(np.linalg.norm(a.feature) * np.linalg.norm(b.feature))
    cosine = float(np.dot(a.feature, b.feature)) / norm if norm > 0.0 else 0.0
    return (
        (1.0 - cosine)
        + abs(wrap_angle(a.heading - b.heading))
        + abs(a.elevation - b.elevation)
    )


def _most_central(regions: Sequence[Region]) -> Region:
    return min(regions, key=lambda region: sum(region.off_center))


def dedup_regions(
    raw: Sequence[Region],
    k_max: int,
    center_cutoff_deg: float = DEFAULT_CENTER_CUTOFF_DEG,
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
    *,
    node_id: str = "",
) -> PanoramaObservation:
    """Drop off-center detections, then greedily thin the most similar pairs.

    While the closest remaining pair is within `sim_threshold` or more than `k_max`
    regions remain, the member of the closest pair with the lower detection score
    (then the higher index) is discarded. The closest pair is recomputed after every
    removal; equal distances resolve to the lexicographically smallest index pair.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if not raw:
        return PanoramaObservation(node_id=node_id, regions=())
    cutoff = math.radians(center_cutoff_deg)
    kept = [region for region in raw if max(region.off_center) <= cutoff]
    if not kept:
        return PanoramaObservation(node_id=node_id, regions=(_most_central(raw),))

    n = len(kept)
    distance = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i + 1, n):
            distance[i, j] = region_distance(kept[i], kept[j])
    alive = np.ones(n, dtype=bool)

    while alive.sum() > 1:
        live = np.flatnonzero(alive)
        block = distance[np.ix_(live, live)]
        flat = int(np.argmin(block))
        a, b = (int(live[k]) for k in np.unravel_index(flat, block.shape))
        if block.flat[flat] > sim_threshold and len(live) <= k_max:
            break
        loser = b if kept[b].detection_score <= kept[a].detection_score else a
        alive[loser] = False

    return PanoramaObservation(
        node_id=node_id,
        regions=tuple(region for region, keep in zip(kept, alive, strict=True) if keep),
    )


def _node_rng(seed: int, node_id: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(node_id.encode("utf-8"))])


def view_centers() -> list[tuple[float, float]]:
    """The 36 perspective view directions (12 headings by 3 elevations)."""
    return [
        (2.0 * math.pi * k / VIEW_HEADINGS, math.radians(elevation))
        for elevation in VIEW_ELEVATIONS_DEG
        for k in range(VIEW_HEADINGS)
    ]


def render_regions(node: Node, catalog: LandmarkCatalog, seed: int) -> list[Region]:
    """Simulate detections of a node's landmarks in every perspective view that sees them."""
    rng = _node_rng(seed, node.id)
    regions: list[Region] = []
    for view_heading, view_elevation in view_centers():
        for landmark in node.landmarks:
            if abs(wrap_angle(landmark.heading - view_heading)) > HALF_FOV_RAD:
                continue
            if abs(landmark.elevation - view_elevation) > HALF_FOV_RAD:
                continue
            prototype = catalog.prototypes[landmark.class_id]
            noise = rng.normal(0.0, FEATURE_NOISE, size=prototype.shape)
            heading, elevation = rng.normal(0.0, ANGLE_JITTER, size=2)
            regions.append(
                Region(
                    feature=(prototype + noise).astype(np.float32),
                    box=landmark.box,
                    heading=float(landmark.heading + heading) % (2.0 * math.pi),
                    elevation=float(np.clip(landmark.elevation + elevation, -1.5, 1.5)),
                    detection_score=float(rng.uniform(0.5, 1.0)),
                    landmark_class=landmark.class_id,
                    view_heading=view_heading,
                    view_elevation=view_elevation,
                ),
            )
    return regions


def observe_panorama(
    node: Node,
    catalog: LandmarkCatalog,
    seed: int,
    k_max: int,
    sim_threshold: float = DEFAULT_SIM_THRESHOLD,
) -> PanoramaObservation:
    """Render and deduplicate the panorama of one node."""
    return dedup_regions(
        render_regions(node, catalog, seed),
        k_max,
        sim_threshold=sim_threshold,
        node_id=node.id,
    )


def encode_text(
    tokens: Sequence[int],
    vocab: Vocabulary,
    second: Sequence[int] | None = None,
) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Lay out `[CLS] a.. [SEP]` or `[CLS] a.. [SEP] b.. [SEP]` with segment ids."""
    ids = [vocab.cls, *tokens, vocab.sep]
    segments = [0] * len(ids)
    if second is not None:
        ids.extend([*second, vocab.sep])
        segments.extend([1] * (len(second) + 1))
    return np.asarray(ids, dtype=np.int64), np.asarray(segments, dtype=np.int64)


def build_sequence(
    text_ids: NDArray[np.int64],
    text_segments: NDArray[np.int64],
    panoramas: Sequence[PanoramaObservation],
    spatial: Sequence[NDArray[np.float64]],
    feature_dim: int,
) -> MultimodalSequence:
    """Stack panoramas behind IMG markers; `spatial[i]` holds the (K_i, 11) block of panorama i.

    An empty panorama list yields a single IMG marker, the visual input of text-only
    examples.
    """
    features: list[NDArray[np.float32]] = []
    spatial_rows: list[NDArray[np.float64]] = []
    pano: list[int] = []
    region: list[int] = []
    classes: list[int] = []
    for index in range(max(len(panoramas), 1)):
        features.append(np.zeros((1, feature_dim), dtype=np.float32))
        spatial_rows.append(np.zeros((1, SPATIAL_DIM)))
        pano.append(index)
        region.append(IMG_REGION)
        classes.append(-1)
        if index >= len(panoramas) or not panoramas[index].regions:
            continue
        panorama = panoramas[index]
        features.append(panorama.features)
        spatial_rows.append(np.asarray(spatial[index], dtype=np.float64))
        pano.extend([index] * len(panorama))
        region.extend(range(len(panorama)))
        classes.extend(r.landmark_class for r in panorama.regions)
    return MultimodalSequence(
        text_ids=text_ids,
        text_segments=text_segments,
        text_mask=np.ones(text_ids.shape[0], dtype=np.float32),
        visual_features=np.concatenate(features).astype(np.float32),
        visual_spatial=np.concatenate(spatial_rows).astype(np.float32),
        visual_pano=np.asarray(pano, dtype=np.int64),
        visual_region=np.asarray(region, dtype=np.int64),
        visual_classes=np.asarray(classes, dtype=np.int64),
    )


def path_spatial(
    trajectory: Trajectory,
    panoramas: Sequence[PanoramaObservation],
) -> list[NDArray[np.float64]]:
    """Spatial blocks for each panorama of a trajectory."""
    blocks: list[NDArray[np.float64]] = []
    last = len(trajectory) - 1
    for i, panorama in enumerate(panoramas):
        heading_cur = trajectory.headings[i]
        rows = [
            last_step_spatial(region, heading_cur)
            if i == last
            else spatial_vector(region, heading_cur, trajectory.headings[i + 1])
            for region in panorama.regions
        ]
        blocks.append(np.asarray(rows, dtype=np.float64).reshape(-1, SPATIAL_DIM))
    return blocks


def assemble_sequence(
    trajectory: Trajectory,
    panoramas: Mapping[str, PanoramaObservation],
    instruction: Instruction | Sequence[int],
    vocab: Vocabulary,
    *,
    n_max: int,
    l_max: int,
    feature_dim: int,
) -> MultimodalSequence:
    """Encode one path-instruction pair."""
    tokens = instruction.tokens if isinstance(instruction, Instruction) else tuple(instruction)
    if len(trajectory) > n_max:
        raise TruncationError(f"trajectory has {len(trajectory)} panoramas, limit is {n_max}")
    if len(tokens) > l_max:
        raise TruncationError(f"instruction has {len(tokens)} tokens, limit is {l_max}")
    observed = [panoramas[node_id] for node_id in trajectory.nodes]
    text_ids, segments = encode_text(tokens, vocab)
    return build_sequence(
        text_ids,
        segments,
        observed,
        path_spatial(trajectory, observed),
        feature_dim,
    )


def single_panorama_sequence(
    panorama: PanoramaObservation,
    tokens: Sequence[int],
    vocab: Vocabulary,
    feature_dim: int,
) -> MultimodalSequence:
    """Encode one panorama with a caption, as in image-text pretraining pairs."""
    text_ids, segments = encode_text(tokens, vocab)
    spatial = [
        np.asarray(
            [last_step_spatial(region, 0.0) for region in panorama.regions],
            dtype=np.float64,
        ).reshape(-1, SPATIAL_DIM),
    ]
    return build_sequence(text_ids, segments, [panorama], spatial, feature_dim)


def text_only_sequence(
    first: Sequence[int],
    vocab: Vocabulary,
    feature_dim: int,
    second: Sequence[int] | None = None,
) -> MultimodalSequence:
    """Encode text with an empty visual stream (a single IMG marker)."""
    text_ids, segments = encode_text(first, vocab, second)
    return build_sequence(text_ids, segments, [], [], feature_dim)
