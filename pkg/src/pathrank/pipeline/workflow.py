"""Pipeline steps shared by the commands: generate, load, mine, train and score."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

from pathrank.config.app import config_hash
from pathrank.logic.envgraph import make_trajectory
from pathrank.logic.ensemble import (
    FollowerScorer,
    OracleScorer,
    RescoringFollowerScorer,
    SpeakerScorer,
)
from pathrank.logic.episodes import (
    TRAIN,
    VAL_SEEN,
    VAL_UNSEEN,
    derive_seed,
    generate_graphs,
    sample_episodes,
)
from pathrank.logic.errors import ArtifactMismatchError
from pathrank.logic.metrics import compute_metrics, exploration_walk, select_path
from pathrank.logic.mining import beam_search, max_steps_for
from pathrank.logic.vocab import LandmarkCatalog, Vocabulary
from pathrank.model.params import ModelParams
from pathrank.model.scoring import CompatScorer, observe_graphs
from pathrank.pipeline.artifacts import (
    ArtifactMeta,
    load_candidates,
    load_environments,
    load_episodes,
    load_panoramas,
    require_input,
)
from pathrank.pipeline.parallel import parallel_map
from pathrank.training.corpora import (
    build_caption_pairs,
    build_path_pairs,
    build_quads,
    build_sentence_pairs,
)
from pathrank.training.curriculum import CurriculumData, EarlyStopSet, run_curriculum


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    import numpy as np
    from numpy.typing import NDArray

    from pathrank.config.app import RunConfig
    from pathrank.logic.ensemble import Scorer
    from pathrank.logic.envgraph import NavGraph
    from pathrank.logic.episodes import EpisodeSpec
    from pathrank.logic.featurize import PanoramaObservation
    from pathrank.logic.metrics import MetricsRecord
    from pathrank.logic.mining import CandidateSet
    from pathrank.training.corpora import CaptionPair, PathPair, QuadExample, SentencePair
    from pathrank.training.curriculum import CurriculumResult, StageResult


logger = logging.getLogger("pathrank")

PRETRAIN = "pretrain"
EVAL_SPLITS = (VAL_SEEN, VAL_UNSEEN)
MINED_SPLITS = (TRAIN, VAL_SEEN, VAL_UNSEEN)

SCRATCH = "scratch"
CHECKPOINT_NAMES = {"1": "stage1", "2": "stage2", "3": "stage3", "ft": "finetune"}
SCORER_NAMES = ("compat", "follower", "follower2", "speaker", "oracle")

ENVIRONMENT_SECTIONS = ("seed", "preset", "environment", "model")
EPISODE_SECTIONS = (*ENVIRONMENT_SECTIONS, "episodes")
MINING_SECTIONS = (*EPISODE_SECTIONS, "mining")
TRAINING_SECTIONS = (*MINING_SECTIONS, "stages", "evaluation")


@dataclass(frozen=True)
class World:
    """Landmark catalog and the vocabulary built on it."""

    catalog: LandmarkCatalog
    vocab: Vocabulary


def build_world(config: RunConfig) -> World:
    """Catalog and vocabulary, deterministic in the seed and environment settings."""
    catalog = LandmarkCatalog.build(
        config.environment.n_classes,
        config.feature_dim,
        config.environment.held_out_fraction,
        derive_seed(config.seed, 0),
    )
    return World(catalog=catalog, vocab=Vocabulary.for_catalog(catalog))


def environments_meta(config: RunConfig) -> ArtifactMeta:
    """Provenance of the environments file for this config."""
    return ArtifactMeta(config_hash=config_hash(config, ENVIRONMENT_SECTIONS))


def generate_world_graphs(config: RunConfig, world: World) -> dict[str, NavGraph]:
    """Training and val-unseen environments."""
    env = config.environment
    return generate_graphs(
        config.seed,
        world.catalog,
        n_train=env.n_train,
        n_val_unseen=env.n_val_unseen,
        n_nodes=env.n_nodes,
        area_m=env.area_m,
    )


def generate_splits(
    config: RunConfig,
    graphs: dict[str, NavGraph],
    world: World,
) -> dict[str, list[EpisodeSpec]]:
    """Episodes of every split.

    Train, val-seen and pretraining episodes share the training environments but never
    a start/goal pair; val-unseen episodes use the unseen environments only.
    """
    settings = config.episodes
    seen = [graph for graph in graphs.values() if graph.split == TRAIN]
    unseen = [graph for graph in graphs.values() if graph.split == VAL_UNSEEN]
    counts = {
        TRAIN: settings.train,
        VAL_SEEN: settings.val_seen,
        PRETRAIN: settings.pretrain,
    }
    splits: dict[str, list[EpisodeSpec]] = {}
    used: set[tuple[str, str]] = set()
    for index, split in enumerate((TRAIN, VAL_SEEN, PRETRAIN), start=1):
        episodes = sample_episodes(
            seen,
            split,
            counts[split],
            derive_seed(config.seed, 10 + index),
            world.vocab,
            hop_range=settings.hop_range,
            max_len=settings.max_len,
            exclude=frozenset(used),
        )
        used.update((episode.start, episode.goal) for episode in episodes)
        splits[split] = episodes
    splits[VAL_UNSEEN] = sample_episodes(
        unseen,
        VAL_UNSEEN,
        settings.val_unseen,
        derive_seed(config.seed, 14),
        world.vocab,
        hop_range=settings.hop_range,
        max_len=settings.max_len,
    )
    for split, episodes in splits.items():
        logger.info("Sampled %d %s episodes", len(episodes), split)
    return splits


def observe_world(
    config: RunConfig,
    graphs: dict[str, NavGraph],
    world: World,
) -> dict[str, PanoramaObservation]:
    """Panorama of every node of every environment."""
    return observe_graphs(
        graphs.values(),
        world.catalog,
        derive_seed(config.seed, 3),
        config.k_max,
        config.environment.sim_threshold,
    )


@dataclass(frozen=True)
class Benchmark:
    """Loaded environments, episodes and panoramas with their provenance."""

    world: World
    graphs: dict[str, NavGraph]
    splits: dict[str, list[EpisodeSpec]]
    panoramas: dict[str, PanoramaObservation]
    environments: ArtifactMeta
    episodes: ArtifactMeta

    @property
    def episode_map(self) -> dict[str, EpisodeSpec]:
        """Every episode keyed by id."""
        return {episode.id: episode for split in self.splits.values() for episode in split}

    def split(self, name: str) -> list[EpisodeSpec]:
        """Episodes of one split, empty when it was never sampled."""
        return self.splits.get(name, [])


def load_world_graphs(config: RunConfig) -> tuple[ArtifactMeta, dict[str, NavGraph]]:
    """Read the environments file, refusing one generated from another config."""
    path = config.workspace.environments
    env_meta, graphs = load_environments(path)
    expected = environments_meta(config)
    if env_meta.config_hash != expected.config_hash:
        raise ArtifactMismatchError(
            f"'{path}' was generated with config {env_meta.config_hash}, "
            f"current config is {expected.config_hash}",
        )
    return env_meta, graphs


def load_benchmark(config: RunConfig) -> Benchmark:
    """Read generated artifacts and check they belong together and to this config."""
    workspace = config.workspace
    env_meta, graphs = load_world_graphs(config)
    episodes_meta, episodes = load_episodes(workspace.episodes)
    require_input(episodes_meta, "environments", env_meta, workspace.episodes)
    panoramas_meta, panoramas = load_panoramas(workspace.panoramas)
    require_input(panoramas_meta, "environments", env_meta, workspace.panoramas)

    splits: dict[str, list[EpisodeSpec]] = {}
    for episode in episodes:
        splits.setdefault(episode.split, []).append(episode)
    return Benchmark(
        world=build_world(config),
        graphs=graphs,
        splits=splits,
        panoramas=panoramas,
        environments=env_meta,
        episodes=episodes_meta,
    )


def load_split_candidates(
    config: RunConfig,
    bench: Benchmark,
    split: str,
) -> tuple[ArtifactMeta, list[CandidateSet]]:
    """Mined candidates of one split, checked against the loaded episodes."""
    path = config.workspace.candidates(split)
    meta, sets = load_candidates(path)
    require_input(meta, "episodes", bench.episodes, path)
    return meta, sets


@dataclass(frozen=True)
class _MiningJob:
    config: RunConfig
    graphs: dict[str, NavGraph]
    vocab: Vocabulary

    def __call__(self, episode: EpisodeSpec) -> CandidateSet:
        return beam_search(
            self.config.mining.policy(),
            self.graphs[episode.graph_id],
            episode,
            self.vocab,
            beam_width=self.config.mining.beam_width,
            max_steps=max_steps_for(episode, self.config.n_max),
        )


def mine_split(
    config: RunConfig,
    bench: Benchmark,
    split: str,
    jobs: int = 1,
) -> list[CandidateSet]:
    """Beam-search candidates for every episode of one split."""
    job = _MiningJob(config=config, graphs=bench.graphs, vocab=bench.world.vocab)
    sets = parallel_map(job, bench.split(split), jobs)
    logger.info("Mined %d %s candidate sets, coverage %.3f", len(sets), split, coverage(sets))
    return sets


def coverage(sets: Sequence[CandidateSet]) -> float:
    """Share of candidate sets holding at least one successful path."""
    if not sets:
        return 0.0
    return sum(candidates.has_success for candidates in sets) / len(sets)


def init_params(config: RunConfig, world: World, seed: int) -> ModelParams:
    """Freshly initialized model for the configured sizes."""
    return ModelParams.init(config.model_config(world.vocab.size), derive_seed(seed, 5))


def curriculum_data(
    config: RunConfig,
    bench: Benchmark,
    stages: Sequence[str],
    *,
    train_candidates: Sequence[CandidateSet] = (),
    early_stop_candidates: Sequence[CandidateSet] = (),
) -> CurriculumData:
    """Build only the corpora the given stages train on."""
    world = bench.world
    text_episodes = [*bench.split(TRAIN), *bench.split(PRETRAIN)]
    sentences: tuple[SentencePair, ...] = ()
    captions: tuple[CaptionPair, ...] = ()
    paths: tuple[PathPair, ...] = ()
    quads: tuple[QuadExample, ...] = ()
    early_stop: EarlyStopSet | None = None
    if "1" in stages:
        sentences = tuple(
            build_sentence_pairs(
                [episode.instruction for episode in text_episodes],
                config.stages.stage1.corpus_size,
                derive_seed(config.seed, 21),
            ),
        )
    if "2" in stages:
        captions = tuple(
            build_caption_pairs(
                world.catalog,
                world.vocab,
                config.stages.stage2.corpus_size,
                derive_seed(config.seed, 22),
                k_max=config.k_max,
            ),
        )
    if "3" in stages:
        paths = tuple(
            build_path_pairs(text_episodes[: config.stages.stage3.corpus_size], bench.graphs),
        )
    if "ft" in stages:
        built, skipped = build_quads(
            train_candidates,
            bench.episode_map,
            derive_seed(config.seed, 23),
        )
        logger.info("Built %d training quads, skipped %d candidate sets", len(built), skipped)
        quads = tuple(built)
        chosen = tuple(early_stop_candidates[: config.evaluation.early_stop_episodes])
        if chosen:
            early_stop = EarlyStopSet(episodes=bench.episode_map, candidate_sets=chosen)
    return CurriculumData(
        vocab=world.vocab,
        panoramas=bench.panoramas,
        sentences=sentences,
        captions=captions,
        paths=paths,
        quads=quads,
        early_stop=early_stop,
    )


def train(
    config: RunConfig,
    params: ModelParams,
    stages: Sequence[str],
    data: CurriculumData,
    seed: int,
    on_stage_end: Callable[[StageResult], None] | None = None,
) -> CurriculumResult:
    """Run the named stages in curriculum order with the configured hyperparameters."""
    return run_curriculum(
        params,
        [config.stages.spec(stage) for stage in stages],
        data,
        seed,
        log_every=config.log_every,
        on_stage_end=on_stage_end,
    )


def build_scorer(
    name: str,
    config: RunConfig,
    bench: Benchmark,
    params: ModelParams | None = None,
) -> Scorer:
    """Scorer by CLI name; `compat` needs trained parameters."""
    if name == "compat":
        if params is None:
            raise ValueError("the compat scorer needs a checkpoint")
        return CompatScorer(params=params, panoramas=bench.panoramas, vocab=bench.world.vocab)
    if name == "follower":
        return FollowerScorer()
    if name == "follower2":
        return RescoringFollowerScorer(
            graphs=bench.graphs,
            vocab=bench.world.vocab,
            policy=config.mining.policy(second=True),
            max_steps={
                episode.id: max_steps_for(episode, config.n_max)
                for episode in bench.episode_map.values()
            },
        )
    if name == "speaker":
        return SpeakerScorer(graphs=bench.graphs, vocab=bench.world.vocab, seed=config.seed)
    if name == "oracle":
        return OracleScorer()
    raise ValueError(f"unknown scorer '{name}', expected one of {', '.join(SCORER_NAMES)}")


@dataclass(frozen=True)
class _ScoringJob:
    scorer: Scorer
    episodes: dict[str, EpisodeSpec]

    def __call__(self, candidates: CandidateSet) -> NDArray[np.float64]:
        return self.scorer.score(self.episodes[candidates.episode_id], candidates)


def score_split(
    scorer: Scorer,
    bench: Benchmark,
    sets: Sequence[CandidateSet],
    jobs: int = 1,
) -> list[NDArray[np.float64]]:
    """Scores of every candidate set, in input order."""
    return parallel_map(_ScoringJob(scorer=scorer, episodes=bench.episode_map), sets, jobs)


def evaluate_split(
    bench: Benchmark,
    sets: Sequence[CandidateSet],
    scores: Sequence[NDArray[np.float64]],
    *,
    leaderboard_mode: bool = False,
) -> list[MetricsRecord]:
    """Metrics of the top-scoring candidate of every set.

    In leaderboard mode the walk that explores every candidate is charged to the path
    length of the selected one.
    """
    episodes = bench.episode_map
    records = []
    for candidates, candidate_scores in zip(sets, scores, strict=True):
        episode = episodes[candidates.episode_id]
        graph = bench.graphs[episode.graph_id]
        trajectories = [candidate.trajectory for candidate in candidates.candidates]
        selected = select_path(trajectories, candidate_scores)
        exploration = None
        if leaderboard_mode:
            walk = exploration_walk(graph, [trajectory.nodes for trajectory in trajectories])
            exploration = make_trajectory(graph, walk, episode.start_heading)
        records.append(
            compute_metrics(
                graph,
                selected,
                episode,
                leaderboard_mode=leaderboard_mode,
                exploration=exploration,
            ),
        )
    return records
