"""YAML configuration files: loading with field-level errors, resolved snapshots."""

from dataclasses import asdict, dataclass, field, fields

import yaml

from .dynamics import DynamicsConfig
from .env import ScenarioConfig
from .errors import ConfigError
from .reward import RewardWeights
from .trainer import TrainConfig


@dataclass
class EvalConfig:
    """Defaults for the eval/trace commands; CLI flags override them."""

    trials: int = 50
    seed: int = 0


@dataclass
class FullConfig:
    scenario: ScenarioConfig
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    training: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SECTIONS = {
    "scenario": ScenarioConfig,
    "dynamics": DynamicsConfig,
    "reward": RewardWeights,
    "training": TrainConfig,
    "eval": EvalConfig,
}

# fields without a dataclass default must appear in the file
_REQUIRED = {"scenario": ("kind", "platoon_size")}

# list-valued YAML entries converted to the tuples the dataclasses expect
_TUPLE_FIELDS = {"a_range", "b_range", "seeds", "critic_hidden"}


def _build_section(name, cls, raw):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown field {name}.{sorted(unknown)[0]}")
    for req in _REQUIRED.get(name, ()):
        if req not in raw:
            raise ConfigError(f"missing required field {name}.{req}")
    kwargs = {}
    for key, value in raw.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad section {name}: {exc}") from exc


def load_config(path) -> FullConfig:
    """Parse a config file; errors name the offending section and field."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping of sections")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section {sorted(unknown)[0]}")
    if "scenario" not in raw:
        raise ConfigError("missing required section scenario")
    built = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {}) or {}
        if not isinstance(section, dict):
            raise ConfigError(f"section {name} must be a mapping")
        built[name] = _build_section(name, cls, section)
    cfg = FullConfig(**built)
    cfg.scenario.validate()
    cfg.dynamics.validate()
    cfg.reward.validate()
    cfg.training.validate()
    return cfg


def resolved_dict(cfg: FullConfig) -> dict:
    """Every field of every section, fully materialized (tuples as lists)."""
    out = {}
    for name in _SECTIONS:
        section = asdict(getattr(cfg, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v
                     for k, v in section.items()}
    return out


def save_resolved(cfg: FullConfig, path) -> None:
    """Snapshot from which a run can be reproduced exactly."""
    with open(path, "w") as fh:
        yaml.safe_dump(resolved_dict(cfg), fh, sort_keys=True)
