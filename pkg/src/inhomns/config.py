"""Experiment configuration: TOML parsing, validation, serialization and hashing."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on older interpreters only
    import tomli as tomllib
import tomli_w

from .errors import ConfigError
from .initial import density_patch, dyadic_band_velocity, single_mode, taylor_green
from .io import read_fields
from .solver import geometric_times, step_schedule
from .spectral import TorusGrid

DENSITY_KINDS = ("constant", "patch", "file")
VELOCITY_KINDS = ("taylor-green", "random-band", "single-mode", "zero", "file")
OUTPUT_KINDS = ("uniform", "geometric", "all")


@dataclass
class GridConfig:
    n: int = 64
    length: float = 2.0 * math.pi


@dataclass
class DensityConfig:
    """Initial density: ``constant`` (``value``), ``patch`` or ``file``.

    ``width_cells`` is the half-width of the smoothed patch interface in grid cells.
    """

    kind: str = "constant"
    value: float = 1.0
    center: list = field(default_factory=lambda: [math.pi, math.pi])
    radius: float = 1.0
    inner: float = 3.0
    outer: float = 1.0
    width_cells: float = 2.0
    path: str = ""


@dataclass
class VelocityConfig:
    """Initial velocity: ``taylor-green``, ``random-band``, ``single-mode``, ``zero`` or ``file``."""

    kind: str = "taylor-green"
    amplitude: float = 1.0
    jmin: int = 0
    jmax: int = 2
    seed: int = 0
    k: list = field(default_factory=lambda: [1, 0])
    path: str = ""


@dataclass
class TimeConfig:
    """Step schedule and output times.

    ``output`` is ``uniform`` (``output_count`` equally spaced times),
    ``geometric`` (from ``t_first`` with ratio ``ratio``) or ``all`` steps.
    The step grows by ``growth`` per step after ``grow_after`` up to ``dt_max``.
    """

    T: float = 1.0
    dt: float = 1e-3
    output: str = "uniform"
    output_count: int = 101
    t_first: float = 0.01
    ratio: float = 1.1
    growth: float = 1.0
    dt_max: float = 0.0
    grow_after: float = 0.0


@dataclass
class DiagnosticsConfig:
    decay: bool = True
    energy: bool = True
    record_environment: bool = False
    q_values: list = field(default_factory=lambda: [4.0])


@dataclass
class ExperimentConfig:
    """Complete description of one run."""

    grid: GridConfig = field(default_factory=GridConfig)
    mu: float = 1.0
    density: DensityConfig = field(default_factory=DensityConfig)
    velocity: VelocityConfig = field(default_factory=VelocityConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    s: float = 0.5
    tolerances: dict = field(default_factory=dict)
    base_dir: str = field(default="", compare=False, repr=False)

    # -- conversions ---------------------------------------------------------
    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(_strip_empty(self.to_dict()))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (independent of key order and formatting)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir or ".") / p

    # -- construction ---------------------------------------------------------
    def build_grid(self) -> TorusGrid:
        return TorusGrid(self.grid.n, self.grid.length)

    def build_density(self, grid: TorusGrid) -> np.ndarray:
        d = self.density
        if d.kind == "constant":
            return np.full((grid.n, grid.n), float(d.value))
        if d.kind == "patch":
            return density_patch(
                grid, tuple(d.center), d.radius, d.inner, d.outer, d.width_cells * grid.h
            )
        return _load_array(self.resolve(d.path), "rho", (grid.n, grid.n), "density.path")

    def build_velocity(self, grid: TorusGrid) -> np.ndarray:
        v = self.velocity
        if v.kind == "taylor-green":
            return taylor_green(grid, v.amplitude)
        if v.kind == "random-band":
            return dyadic_band_velocity(grid, v.jmin, v.jmax, v.seed, v.amplitude)
        if v.kind == "single-mode":
            return single_mode(grid, tuple(v.k), v.amplitude)
        if v.kind == "zero":
            return np.zeros((2, grid.n, grid.n))
        return _load_array(self.resolve(v.path), "u", (2, grid.n, grid.n), "velocity.path")

    def step_times(self) -> np.ndarray:
        t = self.time
        return step_schedule(t.T, t.dt, t.growth, t.dt_max or None, t.grow_after)

    def output_times(self):
        t = self.time
        if t.output == "all":
            return None
        if t.output == "uniform":
            return np.linspace(0.0, t.T, t.output_count)
        return geometric_times(t.t_first, t.T, t.ratio)

    def tolerance(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))


def _strip_empty(obj):
    """TOML has no null; drop empty strings so defaults are restored on parse."""
    if isinstance(obj, dict):
        return {k: _strip_empty(v) for k, v in obj.items() if v != ""}
    return obj


def _load_array(path: Path, tag: str, shape, where: str) -> np.ndarray:
    if not path.exists():
        raise ConfigError(f"{where}: file {path} does not exist")
    _, fields = read_fields(path)
    if tag not in fields:
        raise ConfigError(f"{where}: file {path} has no '{tag}' field")
    array = fields[tag]
    if array.shape != tuple(shape):
        raise ConfigError(f"{where}: expected shape {tuple(shape)}, found {array.shape}")
    return array


# ---------------------------------------------------------------------------
# parsing and validation


def _fill(cls, table, prefix):
    if not isinstance(table, dict):
        raise ConfigError(f"{prefix}: expected a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}: unknown field")
        default = known[key].default
        if default is dataclasses.MISSING and known[key].default_factory is not dataclasses.MISSING:
            default = known[key].default_factory()
        kwargs[key] = _coerce(value, default, f"{prefix}.{key}")
    return cls(**kwargs)


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected an array, got {value!r}")
        return list(value)
    return value


_SECTIONS = {
    "grid": GridConfig,
    "density": DensityConfig,
    "velocity": VelocityConfig,
    "time": TimeConfig,
    "diagnostics": DiagnosticsConfig,
}


def from_dict(data: dict, base_dir: str = "") -> ExperimentConfig:
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _fill(_SECTIONS[key], value, key)
        elif key in ("mu", "s"):
            kwargs[key] = _coerce(value, 1.0, key)
        elif key == "tolerances":
            if not isinstance(value, dict):
                raise ConfigError("tolerances: expected a table")
            kwargs[key] = {k: _coerce(v, 1.0, f"tolerances.{k}") for k, v in value.items()}
        else:
            raise ConfigError(f"{key}: unknown field")
    config = ExperimentConfig(**kwargs, base_dir=base_dir)
    validate(config)
    return config


def validate(config: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` naming the first invalid field."""
    g = config.grid
    if g.n < 8 or g.n % 2:
        raise ConfigError("grid.n: must be an even integer >= 8")
    if not g.length > 0:
        raise ConfigError("grid.length: must be positive")
    if not config.mu > 0:
        raise ConfigError("mu: must be positive")
    if not 0 < config.s < 1:
        raise ConfigError("s: must lie in (0, 1)")
    d = config.density
    if d.kind not in DENSITY_KINDS:
        raise ConfigError(f"density.kind: must be one of {DENSITY_KINDS}")
    if d.kind == "constant" and not d.value > 0:
        raise ConfigError("density.value: must be positive")
    if d.kind == "patch":
        if not (d.inner > 0 and d.outer > 0):
            raise ConfigError("density.inner: patch densities must be positive")
        if not d.radius > 0:
            raise ConfigError("density.radius: must be positive")
        if d.width_cells < 0:
            raise ConfigError("density.width_cells: must be nonnegative")
        if len(d.center) != 2:
            raise ConfigError("density.center: needs two coordinates")
    if d.kind == "file":
        if not d.path or not config.resolve(d.path).exists():
            raise ConfigError(f"density.path: file '{d.path}' does not exist")
    v = config.velocity
    if v.kind not in VELOCITY_KINDS:
        raise ConfigError(f"velocity.kind: must be one of {VELOCITY_KINDS}")
    if v.kind == "random-band":
        if v.jmin < 0 or v.jmax < v.jmin:
            raise ConfigError("velocity.jmax: need 0 <= jmin <= jmax")
        if 2.0**v.jmax >= g.n / 2:
            raise ConfigError("velocity.jmax: band exceeds grid resolution")
    if v.kind == "single-mode" and (len(v.k) != 2 or v.k == [0, 0]):
        raise ConfigError("velocity.k: needs a nonzero pair")
    if v.kind == "file" and (not v.path or not config.resolve(v.path).exists()):
        raise ConfigError(f"velocity.path: file '{v.path}' does not exist")
    t = config.time
    if not t.T > 0:
        raise ConfigError("time.T: must be positive")
    if not 0 < t.dt <= t.T:
        raise ConfigError("time.dt: must lie in (0, T]")
    if t.output not in OUTPUT_KINDS:
        raise ConfigError(f"time.output: must be one of {OUTPUT_KINDS}")
    if t.output == "uniform" and t.output_count < 2:
        raise ConfigError("time.output_count: need at least 2")
    if t.output == "geometric" and not (0 < t.t_first < t.T and t.ratio > 1):
        raise ConfigError("time.t_first: need 0 < t_first < T and ratio > 1")
    if t.growth < 1:
        raise ConfigError("time.growth: must be >= 1")
    for name, value in config.tolerances.items():
        if not value > 0:
            raise ConfigError(f"tolerances.{name}: must be positive")


def loads(text: str, base_dir: str = "") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"syntax: {exc}") from exc
    return from_dict(data, base_dir)


def load(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config: file {path} does not exist")
    return loads(path.read_text(), str(path.parent))


def dumps(config: ExperimentConfig) -> str:
    return config.to_toml()


def set_field(config: ExperimentConfig, dotted: str, value) -> ExperimentConfig:
    """Copy of ``config`` with one dotted field replaced (used by sweeps)."""
    data = config.to_dict()
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"{dotted}: unknown field")
        node = node[part]
    if parts[-1] not in node and parts[0] != "tolerances":
        raise ConfigError(f"{dotted}: unknown field")
    node[parts[-1]] = value
    return from_dict(data, config.base_dir)


__all__ = [
    "DensityConfig",
    "DiagnosticsConfig",
    "ExperimentConfig",
    "GridConfig",
    "TimeConfig",
    "VelocityConfig",
    "dumps",
    "from_dict",
    "load",
    "loads",
    "set_field",
    "validate",
]
