"""Configuration management for GUIDER runs."""

import json
import os
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from enum import StrEnum
from pathlib import Path
from typing import Any

import psutil
from dotenv import load_dotenv
from loguru import logger

__all__ = [
    "AmscConfig",
    "ConfigError",
    "CostMode",
    "DataConfig",
    "EvalConfig",
    "KdKind",
    "Mode",
    "ModelConfig",
    "PathsConfig",
    "RunConfig",
    "SinkhornConfig",
    "SynthConfig",
    "TrainConfig",
]

_TRUE_VALUES = ("true", "1", "yes", "on")
_FALSE_VALUES = ("false", "0", "no", "off")

# Flat keys that differ from the dataclass field names.
_KEY_ALIASES = {"sinkhorn.lambda": "sinkhorn.lam", "train.lambda_grid": "train.lambdas", "amsc.S_thres": "amsc.s_thres"}

LR_SEARCH_RANGE = (1e-4, 1e-3)
WEIGHT_DECAY_SEARCH_RANGE = (1e-4, 1e-2)


class ConfigError(Exception):
    """Raised when a configuration file, override or value is invalid."""


class Mode(StrEnum):
    """Training pipeline variant."""

    GUIDER = "guider"
    PLAIN = "plain"
    TEACHER_ONLY = "teacher-only"
    NO_KD = "no-kd"
    NO_DBPR = "no-dbpr"
    NO_AMSC = "no-amsc"


class KdKind(StrEnum):
    """Distillation divergence."""

    OT = "ot"
    KL = "kl"
    NONE = "none"


class CostMode(StrEnum):
    """Values the transport cost matrix is built from."""

    RAW = "raw"
    NORMALIZED = "normalized"


def _env_to_int(key: str, default: int) -> int:
    """Safely convert an environment variable to an integer."""
    val = os.environ.get(key)
    if val is None or not val.strip().isdigit():
        return default
    return int(val.strip())


@dataclass(frozen=True, kw_only=True)
class PathsConfig:
    """Input and output locations."""

    interactions: str | None = None
    text_features: str | None = None
    vision_features: str | None = None
    split_dir: str | None = None
    output_dir: str = "runs/guider"


@dataclass(frozen=True, kw_only=True)
class DataConfig:
    """Ingestion, splitting and noise options."""

    format: str = "tsv"
    ratios: tuple[int, ...] = (8, 1, 1)
    noise_ratios: tuple[float, ...] = (0.0,)


@dataclass(frozen=True, kw_only=True)
class ModelConfig:
    """Shape of the teacher and student models."""

    d: int = 64
    n_layers: int = 2


@dataclass(frozen=True, kw_only=True)
class SinkhornConfig:
    """Entropic transport solver settings (`lam` is the regularization λ)."""

    lam: float = 0.1
    max_iter: int = 1000
    tol: float = 1e-9
    log_domain: bool = True


@dataclass(frozen=True, kw_only=True)
class AmscConfig:
    """Modality similarity calibration settings."""

    s_thres: float = 0.85
    hash_bits: int = 64
    hash_bias: bool = False
    dump_partitions: bool = True


@dataclass(frozen=True, kw_only=True)
class TrainConfig:
    """Optimizer, schedule and pipeline variant."""

    mode: Mode = Mode.GUIDER
    kd: KdKind = KdKind.OT
    cost: CostMode = CostMode.RAW
    lr: float = 5e-4
    weight_decay: float = 1e-3
    batch_size: int = 256
    kd_batch_size: int = 256
    warmup_epochs: int = 5
    patience: int = 10
    max_epochs: int = 100
    kd_weight: float = 1.0
    dbpr_anchor_weight: float = 1.0
    interleaved: bool = False
    threads: int = 0
    lambdas: tuple[float, ...] = ()

    @property
    def resolved_threads(self) -> int:
        """Worker count, defaulting to the available cores."""
        if self.threads > 0:
            return self.threads
        return psutil.cpu_count() or 1


@dataclass(frozen=True, kw_only=True)
class EvalConfig:
    """Ranking cutoffs."""

    ks: tuple[int, ...] = (5, 20)
    validation_k: int = 20


@dataclass(frozen=True, kw_only=True)
class SynthConfig:
    """Planted-cluster corpus generator settings."""

    n_users: int = 500
    n_items: int = 200
    n_clusters: int = 10
    interactions_per_user: int = 10
    max_clusters_per_user: int = 2
    text_dim: int = 32
    vision_dim: int = 32
    modal_noise: float = 0.05
    inconsistent_frac: float = 0.1


@dataclass(frozen=True, kw_only=True)
class RunConfig:
    """Complete configuration of one GUIDER run.

    Every section is frozen; derive variants with ``dataclasses.replace``.
    """

    seed: int = 2024
    paths: PathsConfig = field(default_factory=PathsConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    amsc: AmscConfig = field(default_factory=AmscConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    @classmethod
    def from_mapping(cls, flat: Mapping[str, Any]) -> "RunConfig":
        """Build a configuration from flat dotted keys.

        Args:
            flat: Mapping such as ``{"train.lr": 5e-4, "seed": 7}``. Values may be
                strings (command-line overrides) and are coerced by field type.

        Returns:
            The validated configuration.

        """
        base = cls()
        top_level: dict[str, Any] = {}
        sections: dict[str, dict[str, Any]] = {}

        for raw_key, value in flat.items():
            key = _KEY_ALIASES.get(raw_key, raw_key)
            parts = key.split(".")
            if len(parts) == 1:
                if key != "seed":
                    raise ConfigError(f"Unknown configuration key: {raw_key}")
                top_level[key] = _coerce(value, base.seed, raw_key)
                continue
            if len(parts) != 2:
                raise ConfigError(f"Unknown configuration key: {raw_key}")
            section_name, name = parts
            section = getattr(base, section_name, None) if section_name in _section_names() else None
            if section is None:
                raise ConfigError(f"Unknown configuration section in key: {raw_key}")
            known = {f.name for f in fields(section)}
            if name not in known:
                raise ConfigError(f"Unknown configuration key: {raw_key}")
            sections.setdefault(section_name, {})[name] = _coerce(value, getattr(section, name), raw_key)

        updates: dict[str, Any] = dict(top_level)
        for section_name, values in sections.items():
            updates[section_name] = replace(getattr(base, section_name), **values)

        config = replace(base, **updates)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | os.PathLike[str] | None = None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        """Load configuration from a JSON file, the environment and overrides.

        Precedence, lowest first: defaults, JSON file, ``GUIDER_SEED``, overrides.
        """
        flat: dict[str, Any] = {}
        if path is not None:
            config_path = Path(path)
            if not config_path.exists():
                raise ConfigError(f"Config file not found: {config_path}")
            try:
                with open(config_path, encoding="utf-8") as f:
                    loaded = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"Failed to parse config file {config_path}: {e}") from e
            if not isinstance(loaded, dict):
                raise ConfigError(f"Config file {config_path} must contain a JSON object")
            flat.update(_flatten(loaded))
            logger.debug(f"Loaded {len(flat)} config keys from {config_path}")

        _load_env_files()
        if "GUIDER_SEED" in os.environ:
            env_seed = _env_to_int("GUIDER_SEED", -1)
            if env_seed < 0:
                raise ConfigError(f"GUIDER_SEED must be a non-negative integer, got {os.environ['GUIDER_SEED']!r}")
            flat["seed"] = env_seed
            logger.info(f"Seed overridden from GUIDER_SEED: {env_seed}")

        flat.update(overrides or {})
        return cls.from_mapping(flat)

    def validate(self) -> None:
        """Validate value ranges."""
        checks: list[tuple[bool, str]] = [
            (self.seed >= 0, f"seed must be non-negative, got {self.seed}"),
            (self.data.format in ("tsv", "csv"), f"data.format must be 'tsv' or 'csv', got {self.data.format!r}"),
            (len(self.data.ratios) == 3 and all(r >= 0 for r in self.data.ratios) and sum(self.data.ratios) > 0, f"data.ratios must be three non-negative weights, got {self.data.ratios}"),
            (all(0.0 <= r <= 0.5 for r in self.data.noise_ratios), f"data.noise_ratios must lie in [0, 0.5], got {self.data.noise_ratios}"),
            (len(self.data.noise_ratios) > 0, "data.noise_ratios must not be empty"),
            (self.model.d > 0, f"model.d must be positive, got {self.model.d}"),
            (self.model.n_layers >= 0, f"model.n_layers must be non-negative, got {self.model.n_layers}"),
            (self.sinkhorn.lam > 0, f"sinkhorn.lambda must be positive, got {self.sinkhorn.lam}"),
            (self.sinkhorn.tol > 0, f"sinkhorn.tol must be positive, got {self.sinkhorn.tol}"),
            (self.sinkhorn.max_iter > 0, f"sinkhorn.max_iter must be positive, got {self.sinkhorn.max_iter}"),
            (self.amsc.hash_bits > 0, f"amsc.hash_bits must be positive, got {self.amsc.hash_bits}"),
            (self.train.lr > 0, f"train.lr must be positive, got {self.train.lr}"),
            (self.train.weight_decay >= 0, f"train.weight_decay must be non-negative, got {self.train.weight_decay}"),
            (self.train.batch_size > 0, f"train.batch_size must be positive, got {self.train.batch_size}"),
            (self.train.kd_batch_size >= 2, f"train.kd_batch_size must be at least 2, got {self.train.kd_batch_size}"),
            (self.train.warmup_epochs >= 0, f"train.warmup_epochs must be non-negative, got {self.train.warmup_epochs}"),
            (self.train.patience > 0, f"train.patience must be positive, got {self.train.patience}"),
            (self.train.max_epochs > 0, f"train.max_epochs must be positive, got {self.train.max_epochs}"),
            (self.train.kd_weight >= 0, f"train.kd_weight must be non-negative, got {self.train.kd_weight}"),
            (self.train.dbpr_anchor_weight >= 0, f"train.dbpr_anchor_weight must be non-negative, got {self.train.dbpr_anchor_weight}"),
            (self.train.threads >= 0, f"train.threads must be non-negative, got {self.train.threads}"),
            (all(lam > 0 for lam in self.train.lambdas), f"train.lambdas must be positive, got {self.train.lambdas}"),
            (len(self.eval.ks) > 0 and all(k >= 1 for k in self.eval.ks), f"eval.ks must be positive cutoffs, got {self.eval.ks}"),
            (self.eval.validation_k >= 1, f"eval.validation_k must be positive, got {self.eval.validation_k}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

        if not LR_SEARCH_RANGE[0] <= self.train.lr <= LR_SEARCH_RANGE[1]:
            logger.warning(f"train.lr={self.train.lr} is outside the usual search range {LR_SEARCH_RANGE}")
        if not WEIGHT_DECAY_SEARCH_RANGE[0] <= self.train.weight_decay <= WEIGHT_DECAY_SEARCH_RANGE[1]:
            logger.warning(f"train.weight_decay={self.train.weight_decay} is outside the usual search range {WEIGHT_DECAY_SEARCH_RANGE}")

    def validate_paths(self, *, need_interactions: bool = True, need_features: bool = True) -> None:
        """Check that referenced inputs exist and the output directory is writable."""
        paths = self.paths
        if need_interactions and paths.split_dir is None and paths.interactions is None:
            raise ConfigError("Either paths.interactions or paths.split_dir must be set")
        required: list[tuple[str, str | None]] = []
        if need_interactions:
            required.append(("paths.split_dir", paths.split_dir) if paths.split_dir is not None else ("paths.interactions", paths.interactions))
        if need_features:
            required.extend([("paths.text_features", paths.text_features), ("paths.vision_features", paths.vision_features)])
        for key, value in required:
            if value is None:
                raise ConfigError(f"{key} must be set")
            if not Path(value).exists():
                raise ConfigError(f"{key} does not exist: {value}")

        output_dir = Path(paths.output_dir)
        try:
            output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Output directory {output_dir} is not writable: {e}") from e
        if not os.access(output_dir, os.W_OK):
            raise ConfigError(f"Output directory {output_dir} is not writable")

    def to_flat(self) -> dict[str, Any]:
        """Flatten to dotted keys with JSON-compatible values."""
        flat: dict[str, Any] = {"seed": self.seed}
        for section_name in _section_names():
            section = getattr(self, section_name)
            for f in fields(section):
                flat[f"{section_name}.{f.name}"] = _to_json_value(getattr(section, f.name))
        return flat


def _section_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig) if f.name != "seed")


def _load_env_files() -> None:
    """Load the user env file, then a local .env that overrides it."""
    env_path = Path(os.environ.get("GUIDER_ENV_FILE", "~/.config/guider/guider.env")).expanduser()
    if env_path.exists():
        _ = load_dotenv(env_path)

    local_env = Path(".env")
    if local_env.exists():
        _ = load_dotenv(local_env, override=True)


def _flatten(tree: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))  # pyright: ignore[reportUnknownArgumentType]
        else:
            flat[dotted] = value
    return flat


def _to_json_value(value: Any) -> Any:
    if isinstance(value, StrEnum):
        return str(value)
    if isinstance(value, tuple):
        return [_to_json_value(v) for v in value]  # pyright: ignore[reportUnknownVariableType]
    return value


def _coerce(value: Any, default: Any, key: str) -> Any:
    """Coerce ``value`` to the type of ``default``."""
    try:
        if isinstance(default, bool):
            return _coerce_bool(value, key)
        if isinstance(default, StrEnum):
            return type(default)(str(value))
        if isinstance(default, int):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{key} must be an integer, got {value!r}")
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise ConfigError(f"{key} must be a number, got {value!r}")
            return float(value)
        if isinstance(default, tuple):
            return _coerce_tuple(value, default, key)  # pyright: ignore[reportUnknownArgumentType]
        if value is None or (isinstance(value, str) and value.lower() in ("", "null", "none")):
            return None
        return str(value)
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key}: {value!r} ({e})") from e


def _coerce_bool(value: Any, key: str) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE_VALUES:
        return True
    if text in _FALSE_VALUES:
        return False
    raise ConfigError(f"{key} must be a boolean, got {value!r}")


def _coerce_tuple(value: Any, default: tuple[Any, ...], key: str) -> tuple[Any, ...]:
    if isinstance(value, str):
        items: list[Any] = [part.strip() for part in value.split(",") if part.strip()]
    elif isinstance(value, list | tuple):
        items = list(value)  # pyright: ignore[reportUnknownArgumentType]
    else:
        items = [value]
    element_default: Any = default[0] if default else 0.0
    return tuple(_coerce(item, element_default, key) for item in items)
