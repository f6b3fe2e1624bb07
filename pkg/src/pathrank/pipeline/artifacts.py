"""Artifact files of a run: where they live, how they are encoded and where they came from.

JSON artifacts carry a top-level `meta` object and JSONL artifacts start with a
`{"meta": ...}` header line. CSV artifacts start with a `# meta: {...}` comment line.
"""

from __future__ import annotations

import base64
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
import typer

from pathrank.logic.envgraph import Landmark, NavGraph, Node, Trajectory
from pathrank.logic.episodes import EpisodeSpec
from pathrank.logic.errors import ArtifactFormatError, ArtifactMismatchError
from pathrank.logic.featurize import PanoramaObservation, Region
from pathrank.logic.instructions import Instruction
from pathrank.logic.mining import Candidate, CandidateSet
from pathrank.model.params import load_checkpoint, save_checkpoint


if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Mapping, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from pathrank.model.params import ModelParams


logger = logging.getLogger("pathrank")

META_KEY = "meta"
CSV_META_PREFIX = "# meta: "


@dataclass(frozen=True)
class ArtifactMeta:
    """Provenance of one artifact: its config hash and the hashes of what it was built from."""

    config_hash: str
    inputs: dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict[str, object]:
        """JSON-ready mapping."""
        return {"config_hash": self.config_hash, "inputs": dict(sorted(self.inputs.items()))}

    @classmethod
    def from_dict(cls, payload: object, source: Path) -> ArtifactMeta:
        """Parse a meta object, rejecting anything malformed."""
        if not isinstance(payload, dict) or not isinstance(payload.get("config_hash"), str):
            raise ArtifactFormatError(f"'{source}' has no valid meta header")
        inputs = payload.get("inputs", {})
        if not isinstance(inputs, dict) or not all(
            isinstance(key, str) and isinstance(value, str) for key, value in inputs.items()
        ):
            raise ArtifactFormatError(f"'{source}' has malformed meta inputs")
        return cls(config_hash=payload["config_hash"], inputs=dict(inputs))


def require_input(meta: ArtifactMeta, name: str, expected: ArtifactMeta, source: Path) -> None:
    """Check that an artifact was built from the given upstream artifact."""
    recorded = meta.inputs.get(name)
    if recorded != expected.config_hash:
        raise ArtifactMismatchError(
            f"'{source}' was built from {name} {recorded}, found {expected.config_hash}",
        )


@dataclass(frozen=True)
class Workspace:
    """Locations of every artifact below one work directory."""

    root: Path

    @property
    def environments(self) -> Path:
        """Generated navigation graphs."""
        return self.root / "environments.json"

    @property
    def episodes(self) -> Path:
        """Episodes of every split."""
        return self.root / "episodes.jsonl"

    @property
    def panoramas(self) -> Path:
        """Featurized panorama cache."""
        return self.root / "panoramas.jsonl"

    def candidates(self, split: str) -> Path:
        """Mined candidate sets of one split."""
        return self.root / f"candidates-{split}.jsonl"

    def checkpoint(self, name: str) -> Path:
        """Binary checkpoint, with its config JSON beside it."""
        return self.root / "checkpoints" / f"{name}.prnk"

    def training_log(self, name: str) -> Path:
        """Per-step losses of the run that produced one checkpoint."""
        return self.root / f"training-log-{name}.csv"

    def metrics(self, split: str, scorer: str) -> Path:
        """Per-episode metrics of one split and scorer."""
        return self.root / f"metrics-{split}-{scorer}.csv"

    @property
    def ensemble(self) -> Path:
        """Ensemble grid search result."""
        return self.root / "ensemble.json"

    @property
    def profiles(self) -> Path:
        """Importance profiles of the perturbation study."""
        return self.root / "profiles.jsonl"

    @property
    def histogram(self) -> Path:
        """Region importance in sequence order."""
        return self.root / "importance-histogram.csv"

    @property
    def grounding(self) -> Path:
        """Held-out landmark grounding comparison."""
        return self.root / "grounding.json"

    @property
    def ablation(self) -> Path:
        """Curriculum ablation rows."""
        return self.root / "ablation.csv"

    def seed_dir(self, name: str, seed: int) -> Workspace:
        """Nested workspace for one ablation configuration and seed."""
        return Workspace(self.root / "ablation" / f"{name}-seed{seed}")


def _read_text(path: Path) -> str:
    try:
        with path.open(encoding="utf-8") as f:
            logger.info("Reading %s...", path)
            return f.read()
    except FileNotFoundError as err:
        raise typer.BadParameter(f"File '{path}' not found") from err
    except PermissionError as err:
        raise typer.BadParameter(f"Permission denied for '{path}'") from err


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info("Wrote %s", path)


def _dumps(payload: object) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def write_json(path: Path, meta: ArtifactMeta, payload: Mapping[str, object]) -> None:
    """Write a JSON artifact with its meta object."""
    document = {META_KEY: meta.as_dict(), **payload}
    _write_text(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> tuple[ArtifactMeta, dict[str, Any]]:
    """Read a JSON artifact and split off its meta object."""
    try:
        payload = json.loads(_read_text(path))
    except json.JSONDecodeError as err:
        raise ArtifactFormatError(f"'{path}' is not valid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ArtifactFormatError(f"'{path}' must hold a JSON object")
    meta = ArtifactMeta.from_dict(payload.pop(META_KEY, None), path)
    return meta, payload


def write_jsonl(path: Path, meta: ArtifactMeta, records: Iterable[object]) -> None:
    """Write a meta header line followed by one JSON record per line."""
    lines = [_dumps({META_KEY: meta.as_dict()})]
    lines.extend(_dumps(record) for record in records)
    _write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path: Path) -> tuple[ArtifactMeta, list[Any]]:
    """Read a JSONL artifact; the first line must be its meta header."""
    lines = [line for line in _read_text(path).splitlines() if line.strip()]
    if not lines:
        raise ArtifactFormatError(f"'{path}' is empty")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as err:
        raise ArtifactFormatError(f"'{path}' is not valid JSON lines: {err}") from err
    if not isinstance(header, dict):
        raise ArtifactFormatError(f"'{path}' has no meta header")
    return ArtifactMeta.from_dict(header.get(META_KEY), path), records


def write_csv(
    path: Path,
    meta: ArtifactMeta,
    columns: Sequence[str],
    rows: Iterable[Mapping[str, object]],
) -> None:
    """Write a CSV artifact behind a meta comment line."""
    buffer = io.StringIO()
    buffer.write(CSV_META_PREFIX + _dumps(meta.as_dict()) + "\n")
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(dict(row))
    _write_text(path, buffer.getvalue())


def read_csv(path: Path) -> tuple[ArtifactMeta, list[dict[str, str]]]:
    """Read a CSV artifact written by `write_csv`."""
    text = _read_text(path)
    first, _, body = text.partition("\n")
    if not first.startswith(CSV_META_PREFIX):
        raise ArtifactFormatError(f"'{path}' has no meta comment line")
    try:
        meta_payload = json.loads(first.removeprefix(CSV_META_PREFIX))
    except json.JSONDecodeError as err:
        raise ArtifactFormatError(f"'{path}' has a malformed meta line: {err}") from err
    return ArtifactMeta.from_dict(meta_payload, path), list(csv.DictReader(io.StringIO(body)))


def graph_to_dict(graph: NavGraph) -> dict[str, object]:
    """JSON form of a navigation graph."""
    return {
        "id": graph.id,
        "split": graph.split,
        "nodes": [
            {
                "id": node.id,
                "xyz": list(node.xyz),
                "landmarks": [
                    {
                        "class_id": landmark.class_id,
                        "heading": landmark.heading,
                        "elevation": landmark.elevation,
                        "box": list(landmark.box),
                    }
                    for landmark in node.landmarks
                ],
            }
            for node in graph.nodes.values()
        ],
        "edges": [list(edge) for edge in graph.edges],
    }


def graph_from_dict(payload: Mapping[str, Any]) -> NavGraph:
    """Inverse of `graph_to_dict`."""
    nodes = {}
    for item in payload["nodes"]:
        x, y, z = (float(v) for v in item["xyz"])
        landmarks = tuple(
            Landmark(
                class_id=int(entry["class_id"]),
                heading=float(entry["heading"]),
                elevation=float(entry["elevation"]),
                box=_box(entry["box"]),
            )
            for entry in item["landmarks"]
        )
        nodes[item["id"]] = Node(id=item["id"], xyz=(x, y, z), landmarks=landmarks)
    return NavGraph(
        id=payload["id"],
        nodes=nodes,
        edges=tuple((str(a), str(b)) for a, b in payload["edges"]),
        split=payload["split"],
    )


def _box(values: Sequence[float]) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in values)
    return (x1, y1, x2, y2)


def episode_to_dict(episode: EpisodeSpec) -> dict[str, object]:
    """JSON form of an episode and its instruction."""
    return {
        "id": episode.id,
        "split": episode.split,
        "graph_id": episode.graph_id,
        "start": episode.start,
        "goal": episode.goal,
        "path": list(episode.path),
        "start_heading": episode.start_heading,
        "instruction": {
            "tokens": list(episode.instruction.tokens),
            "clauses": [list(span) for span in episode.instruction.clauses],
        },
    }


def episode_from_dict(payload: Mapping[str, Any]) -> EpisodeSpec:
    """Inverse of `episode_to_dict`."""
    path = tuple(str(node) for node in payload["path"])
    instruction = payload["instruction"]
    return EpisodeSpec(
        id=payload["id"],
        split=payload["split"],
        graph_id=payload["graph_id"],
        start=payload["start"],
        goal=payload["goal"],
        path=path,
        start_heading=float(payload["start_heading"]),
        instruction=Instruction(
            tokens=tuple(int(t) for t in instruction["tokens"]),
            clauses=tuple((int(a), int(b)) for a, b in instruction["clauses"]),
            path=path,
        ),
    )


def encode_feature(feature: NDArray[np.floating]) -> str:
    """Base64 of a feature vector as little-endian float32."""
    return base64.b64encode(np.asarray(feature, dtype="<f4").tobytes()).decode("ascii")


def decode_feature(text: str) -> NDArray[np.float32]:
    """Inverse of `encode_feature`."""
    return np.frombuffer(base64.b64decode(text), dtype="<f4").astype(np.float32)


def panorama_to_dict(panorama: PanoramaObservation) -> dict[str, object]:
    """JSON form of a featurized panorama."""
    return {
        "node_id": panorama.node_id,
        "regions": [
            {
                "feature": encode_feature(region.feature),
                "box": list(region.box),
                "heading": region.heading,
                "elevation": region.elevation,
                "detection_score": region.detection_score,
                "landmark_class": region.landmark_class,
                "view_heading": region.view_heading,
                "view_elevation": region.view_elevation,
            }
            for region in panorama.regions
        ],
    }


def panorama_from_dict(payload: Mapping[str, Any]) -> PanoramaObservation:
    """Inverse of `panorama_to_dict`."""
    return PanoramaObservation(
        node_id=payload["node_id"],
        regions=tuple(
            Region(
                feature=decode_feature(item["feature"]),
                box=_box(item["box"]),
                heading=float(item["heading"]),
                elevation=float(item["elevation"]),
                detection_score=float(item["detection_score"]),
                landmark_class=int(item["landmark_class"]),
                view_heading=float(item["view_heading"]),
                view_elevation=float(item["view_elevation"]),
            )
            for item in payload["regions"]
        ),
    )


def candidate_set_to_dict(candidates: CandidateSet) -> dict[str, object]:
    """JSON form of one episode's candidates."""
    return {
        "episode_id": candidates.episode_id,
        "candidates": [
            {
                "nodes": list(candidate.trajectory.nodes),
                "headings": list(candidate.trajectory.headings),
                "elevations": list(candidate.trajectory.elevations),
                "logprob": candidate.logprob,
                "success": candidate.success,
            }
            for candidate in candidates.candidates
        ],
    }


def candidate_set_from_dict(payload: Mapping[str, Any]) -> CandidateSet:
    """Inverse of `candidate_set_to_dict`."""
    return CandidateSet(
        episode_id=payload["episode_id"],
        candidates=tuple(
            Candidate(
                trajectory=Trajectory(
                    nodes=tuple(item["nodes"]),
                    headings=tuple(float(h) for h in item["headings"]),
                    elevations=tuple(float(e) for e in item["elevations"]),
                ),
                logprob=float(item["logprob"]),
                success=bool(item["success"]),
            )
            for item in payload["candidates"]
        ),
    )


def _decode_all[T](path: Path, records: Iterable[Any], decode: Callable[[Any], T]) -> list[T]:
    try:
        return [decode(record) for record in records]
    except (KeyError, TypeError, ValueError) as err:
        raise ArtifactFormatError(f"'{path}' holds a malformed record: {err}") from err


def save_environments(path: Path, meta: ArtifactMeta, graphs: Sequence[NavGraph]) -> None:
    """Write every generated graph."""
    write_json(path, meta, {"graphs": [graph_to_dict(graph) for graph in graphs]})


def load_environments(path: Path) -> tuple[ArtifactMeta, dict[str, NavGraph]]:
    """Read graphs keyed by id."""
    meta, payload = read_json(path)
    graphs = _decode_all(path, payload.get("graphs", ()), graph_from_dict)
    return meta, {graph.id: graph for graph in graphs}


def save_episodes(path: Path, meta: ArtifactMeta, episodes: Sequence[EpisodeSpec]) -> None:
    """Write episodes of every split."""
    write_jsonl(path, meta, (episode_to_dict(episode) for episode in episodes))


def load_episodes(path: Path) -> tuple[ArtifactMeta, list[EpisodeSpec]]:
    """Read episodes in file order."""
    meta, records = read_jsonl(path)
    return meta, _decode_all(path, records, episode_from_dict)


def save_panoramas(
    path: Path,
    meta: ArtifactMeta,
    panoramas: Mapping[str, PanoramaObservation],
) -> None:
    """Write the panorama cache, sorted by node id."""
    ordered = (panorama_to_dict(panoramas[node_id]) for node_id in sorted(panoramas))
    write_jsonl(path, meta, ordered)


def load_panoramas(path: Path) -> tuple[ArtifactMeta, dict[str, PanoramaObservation]]:
    """Read the panorama cache keyed by node id."""
    meta, records = read_jsonl(path)
    panoramas = _decode_all(path, records, panorama_from_dict)
    return meta, {panorama.node_id: panorama for panorama in panoramas}


def save_candidates(path: Path, meta: ArtifactMeta, sets: Sequence[CandidateSet]) -> None:
    """Write mined candidate sets."""
    write_jsonl(path, meta, (candidate_set_to_dict(candidates) for candidates in sets))


def load_candidates(path: Path) -> tuple[ArtifactMeta, list[CandidateSet]]:
    """Read mined candidate sets in file order."""
    meta, records = read_jsonl(path)
    return meta, _decode_all(path, records, candidate_set_from_dict)


def checkpoint_meta_path(path: Path) -> Path:
    """Provenance file written beside a checkpoint."""
    return path.with_suffix(".meta.json")


def save_stage_checkpoint(path: Path, meta: ArtifactMeta, params: ModelParams) -> None:
    """Write a checkpoint, its model config and its provenance."""
    save_checkpoint(params, path)
    write_json(checkpoint_meta_path(path), meta, {"checkpoint": path.name})
    logger.info("Saved checkpoint %s (%d weights)", path, params.n_values())


def load_stage_checkpoint(path: Path) -> tuple[ArtifactMeta, ModelParams]:
    """Read a checkpoint with its provenance."""
    if not path.exists():
        raise typer.BadParameter(f"File '{path}' not found")
    meta, _ = read_json(checkpoint_meta_path(path))
    return meta, load_checkpoint(path)
