"""TOML run configuration. Every value has a default; units are in the key names."""

import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class TargetConfig:
    name: str = "hadamard2"
    n: int | None = None
    seed: int | None = None
    matrix: list | None = None  # rows of [re, im] pairs


@dataclass
class WindowConfig:
    K: int = 64
    guard: int = 2
    center: int | None = None
    stride: int = 1


@dataclass
class GateConfig:
    layers: int = 3
    policy: str = "OPEN"
    fidelity_floor: float = 0.999


@dataclass
class OptimizerSection:
    restarts: int = 32
    maxiter: int = 3000
    seed: int = 0
    harmonics: int = 3
    amplitude_bound: float | None = None


@dataclass
class OpticsConfig:
    grid: int = 1080
    pitch_m: float = 8e-6
    wavelength_m: float = 1.55e-6
    stride: int = 4
    ref_charge: int | None = None
    sorter_a_m: float | None = None
    sorter_b_m: float | None = None
    ring_radius_m: float | None = None
    ring_width_m: float | None = None


@dataclass
class PathConfig:
    L_m: float = 2e-3
    f_m: float = 0.4
    wavelength_m: float = 1.55e-6
    samples: int = 2 ** 14


@dataclass
class RunConfig:
    target: TargetConfig = field(default_factory=TargetConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    optics: OpticsConfig = field(default_factory=OpticsConfig)
    path: PathConfig = field(default_factory=PathConfig)


def _fill(cls, table: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    return cls(**table)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    sections = {f.name: f.default_factory for f in fields(RunConfig)}
    unknown = set(data) - set(sections)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    kw = {}
    for name, factory in sections.items():
        table = data.get(name, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{name}] must be a table")
        try:
            kw[name] = _fill(type(factory()), table, name)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    cfg = RunConfig(**kw)
    if cfg.gate.policy.upper() not in ("OPEN", "FILTERED"):
        raise ConfigError("gate.policy must be OPEN or FILTERED")
    cfg.gate.policy = cfg.gate.policy.upper()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(raw.decode("utf-8"))
