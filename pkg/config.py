import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from yaml import safe_dump, safe_load

from scene.grid import GridConfig

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unknown configuration."""


class ConfigMismatchError(ConfigError):
    """An artifact was produced under a different configuration."""


@dataclass(frozen=True)
class GridSection:
    height: int = 76
    width: int = 48
    resolution: float = 1.0
    ego_row: int = 61
    ego_col: int = 24

    def grid(self) -> GridConfig:
        return GridConfig(self.height, self.width, self.resolution, self.ego_row, self.ego_col)


@dataclass(frozen=True)
class ModelSection:
    d_model: int = 32
    strides: Tuple[int, ...] = (4, 8, 16, 32)
    gru_hidden: int = 16
    heads: int = 8
    points: int = 4
    layers: int = 4
    modes: int = 5
    recurrent_steps: int = 3
    chunk: int = 4
    history_steps: int = 3
    future_steps: int = 12
    scale_eps: float = 1e-3


@dataclass(frozen=True)
class AblationSection:
    mode_queries: bool = True
    self_attention: bool = True
    recurrence: bool = True
    ego_position: bool = True


@dataclass(frozen=True)
class OptimSection:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4


@dataclass(frozen=True)
class TrainSection:
    seed: int = 0
    batch_size: int = 16
    epochs: int = 20
    augment: bool = True
    augment_probability: float = 0.75
    normalized_cls: bool = True
    ablation_seeds: Tuple[int, ...] = (0, 1, 2)


@dataclass(frozen=True)
class DataSection:
    manifest: str = "data/manifest.jsonl"
    train_samples: int = 200
    eval_samples: int = 50
    kinds: Tuple[Tuple[str, float], ...] = (
        ("straight", 0.25),
        ("curve", 0.25),
        ("t_junction", 0.25),
        ("fork", 0.25),
    )


SECTIONS = {
    "grid": GridSection,
    "model": ModelSection,
    "ablation": AblationSection,
    "optim": OptimSection,
    "train": TrainSection,
    "data": DataSection,
}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSection = field(default_factory=GridSection)
    model: ModelSection = field(default_factory=ModelSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    optim: OptimSection = field(default_factory=OptimSection)
    train: TrainSection = field(default_factory=TrainSection)
    data: DataSection = field(default_factory=DataSection)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        out = {}
        for name in SECTIONS:
            section = {}
            for key, value in dataclasses.asdict(getattr(self, name)).items():
                if key == "kinds":
                    value = {kind: fraction for kind, fraction in value}
                elif isinstance(value, tuple):
                    value = list(value)
                section[key] = value
            out[name] = section
        return out

    def replace(self, section: str, **values) -> "RunConfig":
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        return dataclasses.replace(self, **{section: _build_section(section, values, getattr(self, section))})

    def validate(self) -> "RunConfig":
        m = self.model
        try:
            self.grid.grid()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if m.d_model <= 0 or m.d_model % m.heads:
            raise ConfigError(f"d_model={m.d_model} must be positive and divisible by heads={m.heads}")
        if m.d_model % 4:
            raise ConfigError(f"d_model={m.d_model} must be divisible by 4 for positional embeddings")
        if any(b <= a for a, b in zip(m.strides, m.strides[1:])):
            raise ConfigError(f"strides {m.strides} must be strictly increasing")
        if m.history_steps < 1:
            raise ConfigError("history_steps must be at least 1")
        if self.ablation.recurrence and m.recurrent_steps * m.chunk != m.future_steps:
            raise ConfigError(
                f"recurrent_steps * chunk = {m.recurrent_steps * m.chunk} != future_steps = {m.future_steps}"
            )
        if self.train.batch_size < 1 or self.train.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        total = sum(fraction for _, fraction in self.data.kinds)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"scene kind fractions sum to {total}, expected 1")
        return self


def _coerce(name: str, key: str, default: Any, value: Any) -> Any:
    if key == "kinds":
        if not isinstance(value, dict):
            raise ConfigError(f"{name}.kinds must be a mapping kind -> fraction")
        return tuple((str(k), float(v)) for k, v in value.items())
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}.{key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name}.{key} must be a list")
        return tuple(type(default[0])(v) if default else v for v in value)
    try:
        return type(default)(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}.{key}: cannot use {value!r} ({e})") from e


def _build_section(name: str, values: Dict[str, Any], base):
    values = values or {}
    if not isinstance(values, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(base)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    coerced = {key: _coerce(name, key, getattr(base, key), value) for key, value in values.items()}
    return dataclasses.replace(base, **coerced)


def run_config_from_dict(data: Optional[Dict[str, Any]], base: Optional[RunConfig] = None) -> RunConfig:
    """Overlay ``data`` on ``base`` (closed world: unknown keys raise ConfigError)"""
    base = base or RunConfig()
    data = data or {}
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    sections = {name: _build_section(name, data.get(name), getattr(base, name)) for name in SECTIONS}
    return RunConfig(**sections).validate()


PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "desk": {},
    "paper": {
        "grid": {"height": 152, "width": 96, "ego_row": 122, "ego_col": 48},
        "model": {"d_model": 64, "gru_hidden": 32},
        "train": {"batch_size": 64},
    },
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}")
    return run_config_from_dict(PRESETS[name])


def config_hash(config: RunConfig) -> str:
    """First 16 hex digits of SHA-256 over the canonical JSON form"""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


class ConfigManager:
    """Manages run configuration stored as YAML"""

    def __init__(self, config_file: Optional[str] = None, preset_name: str = "desk"):
        self.config_file = config_file
        self.preset_name = preset_name
        self.config: Dict[str, Dict[str, Any]] = {}
        self.load_config()

    def load_config(self):
        """Load configuration from file"""
        if not self.config_file:
            logger.info(f"No config file given, using preset {self.preset_name}")
            return
        logger.info(f"Loading config from {self.config_file}")
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                self.config = safe_load(f) or {}
        except OSError as e:
            logger.error(f"Error loading config: {e}")
            raise
        if not isinstance(self.config, dict):
            raise ConfigError(f"{self.config_file}: top level must be a mapping")
        self.preset_name = self.config.pop("preset", self.preset_name)
        logger.info("Loaded config from file")

    def save_config(self, path: Optional[str] = None):
        """Save configuration to file"""
        target = path or self.config_file
        try:
            with open(target, "w", encoding="utf-8") as f:
                safe_dump({"preset": self.preset_name, **self.config}, f, sort_keys=True)
        except OSError as e:
            logger.error(f"Error saving config: {e}")
            raise

    def get(self, section, key, fallback=None):
        """Get configuration value"""
        return self.config.get(section, {}).get(key, fallback)

    def set(self, section, key, value):
        """Set configuration value"""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def run_config(self) -> RunConfig:
        """Preset overlaid with the file contents and any ``set`` values"""
        return run_config_from_dict(self.config, base=preset(self.preset_name))
