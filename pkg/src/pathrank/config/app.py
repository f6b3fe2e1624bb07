"""Configuration handling for the pathrank CLI."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, TypeVar

import typer
import yaml

from pathrank.config.overrides import apply_overrides
from pathrank.logic.mining import DEFAULT_BEAM_WIDTH, FollowerPolicy
from pathrank.logic.vocab import LANDMARK_NAMES
from pathrank.model.config import PRESETS, ModelConfig
from pathrank.pipeline.artifacts import Workspace
from pathrank.training.curriculum import StageSpec


if TYPE_CHECKING:
    from collections.abc import Callable, Sequence


DEFAULT_CONFIG_NAME = ".pathrank.yaml"
SEED_ENV_VAR = "PATHRANK_SEED"

T = TypeVar("T")

STAGE_KEYS = {"stage1": "1", "stage2": "2", "stage3": "3", "finetune": "ft"}

PRESET_VALUES: dict[str, dict[str, object]] = {
    "toy": {},
    "paper-scale": {
        "stages": {
            "stage1": {"lr": 4e-5, "batch_size": 64, "epochs": 50},
            "stage2": {"lr": 4e-5, "batch_size": 64, "epochs": 50},
            "stage3": {"lr": 4e-5, "batch_size": 64, "epochs": 50},
            "finetune": {"lr": 4e-5, "batch_size": 64, "epochs": 20},
        },
    },
}


@dataclass
class EnvironmentConfig:
    """Synthetic environment generation."""

    n_train: int = 8
    n_val_unseen: int = 4
    n_nodes: int = 20
    area_m: float = 30.0
    n_classes: int = 40
    held_out_fraction: float = 0.25
    sim_threshold: float = 0.1
    target_degree: float = 5.5

    def __post_init__(self) -> None:
        """Validate ranges."""
        if self.n_train < 1 or self.n_val_unseen < 1:
            raise ValueError("at least one training and one unseen environment are required")
        if self.n_nodes < 2:
            raise ValueError("environments need at least 2 nodes")
        if self.area_m <= 0.0 or self.target_degree <= 0.0:
            raise ValueError("area and target degree must be positive")
        if not 2 <= self.n_classes <= len(LANDMARK_NAMES):
            raise ValueError(f"n_classes must be in [2, {len(LANDMARK_NAMES)}]")
        if not 0.0 <= self.held_out_fraction < 1.0:
            raise ValueError("held_out_fraction must be in [0, 1)")
        if self.sim_threshold < 0.0:
            raise ValueError("sim_threshold cannot be negative")


@dataclass
class EpisodesConfig:
    """Episode counts per split and instruction bounds."""

    train: int = 200
    val_seen: int = 100
    val_unseen: int = 200
    pretrain: int = 300
    hop_min: int = 2
    hop_max: int = 4
    max_len: int = 60

    def __post_init__(self) -> None:
        """Validate ranges."""
        for name in ("train", "val_seen", "val_unseen", "pretrain"):
            if getattr(self, name) < 0:
                raise ValueError(f"episodes.{name} cannot be negative")
        if not 1 <= self.hop_min <= self.hop_max:
            raise ValueError("hop range must satisfy 1 <= hop_min <= hop_max")
        if self.max_len < 1:
            raise ValueError("max_len must be positive")

    @property
    def hop_range(self) -> tuple[int, int]:
        """Inclusive bounds on ground-truth path hops."""
        return (self.hop_min, self.hop_max)


@dataclass
class ModelSectionConfig:
    """Per-field overrides of the preset's model sizes."""

    hidden: int | None = None
    n_lang_layers: int | None = None
    n_vis_layers: int | None = None
    n_coattn_layers: int | None = None
    n_heads: int | None = None
    d_v: int | None = None
    k_max: int | None = None
    n_max: int | None = None
    l_max: int | None = None
    ffn_multiplier: int | None = None
    dropout: float | None = None

    def overrides(self) -> dict[str, int | float]:
        """Fields that were set."""
        return {
            key: value for key, value in dataclasses.asdict(self).items() if value is not None
        }


@dataclass
class StagesConfig:
    """Hyperparameters of every curriculum stage."""

    stage1: StageSpec = field(default_factory=lambda: StageSpec("1", epochs=2, corpus_size=500))
    stage2: StageSpec = field(default_factory=lambda: StageSpec("2", epochs=2, corpus_size=400))
    stage3: StageSpec = field(default_factory=lambda: StageSpec("3", epochs=2))
    finetune: StageSpec = field(default_factory=lambda: StageSpec("ft", epochs=6, batch_size=4))

    def spec(self, stage: str) -> StageSpec:
        """Spec of one stage by its curriculum name."""
        for key, name in STAGE_KEYS.items():
            if name == stage:
                spec: StageSpec = getattr(self, key)
                return spec
        raise KeyError(stage)


@dataclass
class MiningConfig:
    """Scripted follower and beam search settings."""

    beam_width: int = DEFAULT_BEAM_WIDTH
    landmark_weight: float = 2.0
    direction_weight: float = 1.5
    stop_bias: float = -1.0
    goal_weight: float = 2.5
    done_weight: float = 1.0
    noise: float = 0.3
    follower_seed: int = 0
    second_follower_seed: int = 1

    def __post_init__(self) -> None:
        """Validate ranges."""
        if self.beam_width < 1:
            raise ValueError("beam_width must be at least 1")
        if self.noise < 0.0:
            raise ValueError("noise cannot be negative")

    def policy(self, *, second: bool = False) -> FollowerPolicy:
        """Follower policy; `second` selects the independently seeded one."""
        return FollowerPolicy(
            landmark_weight=self.landmark_weight,
            direction_weight=self.direction_weight,
            stop_bias=self.stop_bias,
            goal_weight=self.goal_weight,
            done_weight=self.done_weight,
            noise=self.noise,
            seed=self.second_follower_seed if second else self.follower_seed,
        )


@dataclass
class EvaluationConfig:
    """Ensembling, early stopping and ablation settings."""

    grid_step: float = 0.05
    early_stop_episodes: int = 50
    ablation_seeds: int = 3

    def __post_init__(self) -> None:
        """Validate ranges."""
        if not 0.0 < self.grid_step <= 1.0:
            raise ValueError("grid_step must be in (0, 1]")
        if self.early_stop_episodes < 0 or self.ablation_seeds < 1:
            raise ValueError("early_stop_episodes must be >= 0 and ablation_seeds >= 1")


@dataclass
class AnalysisConfig:
    """Region-importance study settings."""

    top_k: int = 5
    episodes: int = 50

    def __post_init__(self) -> None:
        """Validate ranges."""
        if self.top_k < 1 or self.episodes < 1:
            raise ValueError("top_k and episodes must be positive")


@dataclass
class RunConfig:
    """Structured run configuration passed through ctx.obj."""

    config_path: str
    seed: int = 0
    preset: str = "toy"
    verbose: bool = False
    color_flag: bool | None = None
    jobs: int = 1
    workdir: str = "runs/default"
    log_every: int = 10
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    episodes: EpisodesConfig = field(default_factory=EpisodesConfig)
    model: ModelSectionConfig = field(default_factory=ModelSectionConfig)
    stages: StagesConfig = field(default_factory=StagesConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @property
    def workspace(self) -> Workspace:
        """Artifact locations of this run."""
        return Workspace(Path(self.workdir))

    def model_config(self, vocab_size: int) -> ModelConfig:
        """Model sizes: the preset, then the model section's overrides."""
        return ModelConfig.from_preset(
            self.preset,
            vocab_size=vocab_size,
            n_classes=self.environment.n_classes,
            **self.model.overrides(),  # type: ignore[arg-type]
        )

    @property
    def feature_dim(self) -> int:
        """Region feature width of the configured model."""
        return self.model.d_v if self.model.d_v is not None else PRESETS[self.preset]["d_v"]

    @property
    def k_max(self) -> int:
        """Region cap per panorama of the configured model."""
        return self.model.k_max if self.model.k_max is not None else PRESETS[self.preset]["k_max"]

    @property
    def n_max(self) -> int:
        """Panorama cap per path of the configured model."""
        return self.model.n_max if self.model.n_max is not None else PRESETS[self.preset]["n_max"]


def _jsonable(value: object) -> object:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    return value


def config_hash(config: RunConfig, sections: Sequence[str]) -> str:
    """SHA-256 over the canonical JSON of the named config sections."""
    payload = {name: _jsonable(getattr(config, name)) for name in sorted(sections)}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def load_config(filepath: str) -> tuple[dict[str, object], bool]:
    """Load config from a YAML (or JSON) file.

    Args:
        filepath: Path to config file

    Returns:
        Tuple of (config dict, malformed flag)
    """
    path = Path(filepath)
    try:
        with path.open(encoding="utf-8") as f:
            config = yaml.safe_load(f)
    except FileNotFoundError:
        return ({}, False)
    except (OSError, yaml.YAMLError):
        return ({}, True)

    if config is None:
        return ({}, False)
    if not isinstance(config, dict):
        return ({}, True)

    return (config, False)


def _parse_optional_int_field(
    section: dict[str, object],
    key: str,
) -> tuple[bool, int | None]:
    """Parse one optional integer field from a config section."""
    if key not in section:
        return (True, None)
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        return (False, None)
    return (True, value)


def _parse_optional_float_field(
    section: dict[str, object],
    key: str,
) -> tuple[bool, float | None]:
    """Parse one optional number field from a config section."""
    if key not in section:
        return (True, None)
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return (False, None)
    return (True, float(value))


def _parse_optional_bool_field(
    section: dict[str, object],
    key: str,
) -> tuple[bool, bool | None]:
    """Parse one optional boolean field from a config section."""
    if key not in section:
        return (True, None)
    value = section[key]
    if not isinstance(value, bool):
        return (False, None)
    return (True, value)


def _parse_optional_string_field(
    section: dict[str, object],
    key: str,
) -> tuple[bool, str | None]:
    """Parse one optional non-empty string field from a config section."""
    if key not in section:
        return (True, None)
    value = section[key]
    if not isinstance(value, str) or not value:
        return (False, None)
    return (True, value)


_FIELD_PARSERS: dict[type, Callable[[dict[str, object], str], tuple[bool, object]]] = {
    int: _parse_optional_int_field,
    float: _parse_optional_float_field,
    bool: _parse_optional_bool_field,
    str: _parse_optional_string_field,
}

_MODEL_FIELD_TYPES: dict[str, type] = {
    f.name: float if f.name == "dropout" else int for f in dataclasses.fields(ModelSectionConfig)
}


def _parse_flat_section(
    value: object,
    default: T,
    types: dict[str, type] | None = None,
) -> T | None:
    """Parse a section whose fields are plain scalars, on top of `default`.

    Field types come from the default's values unless `types` names them.
    """
    if not isinstance(value, dict) or not dataclasses.is_dataclass(default):
        return None
    names = {f.name for f in dataclasses.fields(default)} - {"stage"}
    if any(key not in names for key in value):
        return None
    updates: dict[str, object] = {}
    for key in value:
        expected = (types or {}).get(key, type(getattr(default, key)))
        valid, parsed = _FIELD_PARSERS[expected](value, key)
        if not valid:
            return None
        updates[key] = parsed
    try:
        return dataclasses.replace(default, **updates)  # type: ignore[type-var]
    except ValueError as err:
        raise typer.BadParameter(f"Malformed config: {err}") from err


def parse_model_section(value: object) -> ModelSectionConfig | None:
    """Parse the model section."""
    return _parse_flat_section(value, ModelSectionConfig(), _MODEL_FIELD_TYPES)


def parse_stages_section(value: object) -> StagesConfig | None:
    """Parse the stages section, one sub-section per stage."""
    if not isinstance(value, dict) or any(key not in STAGE_KEYS for key in value):
        return None
    defaults = StagesConfig()
    updates: dict[str, StageSpec] = {}
    for key in value:
        parsed = _parse_flat_section(value[key], getattr(defaults, key))
        if parsed is None:
            return None
        updates[key] = parsed
    return dataclasses.replace(defaults, **updates)


def _parse_optional_config_section(
    config: dict[str, object],
    key: str,
    parser: Callable[[object], T | None],
    default: T,
) -> T:
    """Parse one optional config section, returning default when absent."""
    if key not in config:
        return default
    parsed = parser(config[key])
    if parsed is None:
        raise typer.BadParameter(f"Malformed config: invalid section '{key}'")
    return parsed


def _validate_top_level_config_keys(config: dict[str, object]) -> None:
    """Validate allowed top-level config keys."""
    allowed_keys = {
        "seed",
        "preset",
        "verbose",
        "color_flag",
        "jobs",
        "workdir",
        "log_every",
        "environment",
        "episodes",
        "model",
        "stages",
        "mining",
        "evaluation",
        "analysis",
    }
    unknown = sorted(str(key) for key in config if key not in allowed_keys)
    if unknown:
        raise typer.BadParameter(f"Malformed config: unknown keys {', '.join(unknown)}")


def _parse_shared_config(config: dict[str, object], config_path: Path) -> RunConfig:
    """Parse the scalar top-level fields."""
    run_config = RunConfig(config_path=str(config_path))
    for key, parser in (
        ("seed", _parse_optional_int_field),
        ("jobs", _parse_optional_int_field),
        ("log_every", _parse_optional_int_field),
        ("verbose", _parse_optional_bool_field),
        ("color_flag", _parse_optional_bool_field),
        ("preset", _parse_optional_string_field),
        ("workdir", _parse_optional_string_field),
    ):
        valid, value = parser(config, key)
        if not valid:
            raise typer.BadParameter(f"Malformed config: invalid value for '{key}'")
        if value is not None:
            setattr(run_config, key, value)
    if run_config.seed < 0:
        raise typer.BadParameter("Malformed config: seed cannot be negative")
    if run_config.jobs < 1 or run_config.log_every < 1:
        raise typer.BadParameter("Malformed config: jobs and log_every must be positive")
    if run_config.preset not in PRESET_VALUES:
        raise typer.BadParameter(f"Malformed config: unknown preset '{run_config.preset}'")
    return run_config


def _deep_merge(base: dict[str, object], update: dict[str, object]) -> dict[str, object]:
    merged = dict(base)
    for key, value in update.items():
        previous = merged.get(key)
        if isinstance(previous, dict) and isinstance(value, dict):
            merged[key] = _deep_merge(previous, value)
        else:
            merged[key] = value
    return merged


def build_run_config(
    config: dict[str, object],
    config_path: Path,
    overrides: Sequence[str] = (),
    env: dict[str, str] | None = None,
) -> RunConfig:
    """Layer preset values, file values, `--set` overrides and `PATHRANK_SEED`."""
    layered = apply_overrides(config, overrides)
    preset = layered.get("preset", "toy")
    if not isinstance(preset, str) or preset not in PRESET_VALUES:
        raise typer.BadParameter(f"Malformed config: unknown preset '{preset}'")
    layered = _deep_merge(PRESET_VALUES[preset], layered)
    _validate_top_level_config_keys(layered)

    run_config = _parse_shared_config(layered, config_path)
    run_config.environment = _parse_optional_config_section(
        layered,
        "environment",
        lambda value: _parse_flat_section(value, EnvironmentConfig()),
        EnvironmentConfig(),
    )
    run_config.episodes = _parse_optional_config_section(
        layered,
        "episodes",
        lambda value: _parse_flat_section(value, EpisodesConfig()),
        EpisodesConfig(),
    )
    run_config.model = _parse_optional_config_section(
        layered,
        "model",
        parse_model_section,
        ModelSectionConfig(),
    )
    run_config.stages = _parse_optional_config_section(
        layered,
        "stages",
        parse_stages_section,
        StagesConfig(),
    )
    run_config.mining = _parse_optional_config_section(
        layered,
        "mining",
        lambda value: _parse_flat_section(value, MiningConfig()),
        MiningConfig(),
    )
    run_config.evaluation = _parse_optional_config_section(
        layered,
        "evaluation",
        lambda value: _parse_flat_section(value, EvaluationConfig()),
        EvaluationConfig(),
    )
    run_config.analysis = _parse_optional_config_section(
        layered,
        "analysis",
        lambda value: _parse_flat_section(value, AnalysisConfig()),
        AnalysisConfig(),
    )

    seed_text = (os.environ if env is None else env).get(SEED_ENV_VAR)
    if seed_text:
        try:
            run_config.seed = int(seed_text)
        except ValueError as err:
            raise typer.BadParameter(f"{SEED_ENV_VAR} must be an integer") from err
    return run_config


def parse_config_argument(argv: list[str]) -> str:
    """Parse only the --config argument from argv."""
    for idx, arg in enumerate(argv[1:], start=1):
        if arg == "--config" and idx + 1 < len(argv):
            return argv[idx + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return DEFAULT_CONFIG_NAME


def parse_set_arguments(argv: list[str]) -> list[str]:
    """Collect every --set override from argv, in order."""
    overrides: list[str] = []
    for idx, arg in enumerate(argv[1:], start=1):
        if arg == "--set" and idx + 1 < len(argv):
            overrides.append(argv[idx + 1])
        elif arg.startswith("--set="):
            overrides.append(arg.split("=", 1)[1])
    return overrides


def load_cli_config(argv: list[str]) -> RunConfig:
    """Load config defaults from the configured file path and overrides."""
    config_name = parse_config_argument(argv)
    config_path = Path(config_name)
    if not config_path.is_absolute():
        config_path = Path.cwd() / config_name
    config, load_error = load_config(str(config_path))

    if load_error:
        raise typer.BadParameter("Malformed config")

    return build_run_config(config, config_path, parse_set_arguments(argv))


def require_app_config(ctx: typer.Context) -> RunConfig:
    """Return RunConfig stored in the current root context."""
    app_config = ctx.find_root().obj
    if not isinstance(app_config, RunConfig):
        raise typer.BadParameter("Application config is not available")
    return app_config
