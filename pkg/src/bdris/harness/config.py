"""JSON experiment configuration.

Schema (all keys except ``experiment`` optional)::

    {
      "experiment": "mimo-element-sweep",
      "architectures": ["active-D", "active-BD-group2-R", "passive-BD-full-NR", "no-RIS"],
      "sweep": [8, 16, 32, 64],          # N_I for *-scaling / element sweeps, P^tot dBm for power sweeps
      "trials": 50,
      "master_seed": 0,
      "antennas": {"n_t": 2, "n_r": 2, "n_streams": 2},
      "n_elements": 32,                  # fixed N_I of a power sweep
      "power_dbm": 20.0,                 # fixed P^tot of an element sweep
      "kappa": 1.0,
      "noise_dbm": -90.0,
      "power_split": {"transmit": 0.99, "ris": 0.01},
      "geometry": {"tx": [0, -60], "ris": [300, 10], "rx": [300, 0]},
      "siso": {"pt": 1.9, "pa": 0.1, "pt_passive": 2.0, "zeta_ri_db": -70, "zeta_it_db": -70},
      "solver": {"max_iters": 200, "tol": 1e-5},
      "output": "results"
    }
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

from ..channel import Geometry
from ..netcore import Architecture

EXPERIMENTS = ("siso-scaling", "siso-asymptotic", "mimo-power-sweep", "mimo-element-sweep", "validate")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


_LABEL = re.compile(r"^(active|passive)-(D|BD-(full|group(\d+)))(?:-(R|NR))?$")


class ArchSpec(NamedTuple):
    mode: str  # "active" | "passive" | "none"
    topology: str  # "D" | "full" | "group"
    group_size: int
    reciprocal: bool

    def architecture(self, n_elements: int) -> Architecture:
        if self.topology == "D":
            return Architecture.single(n_elements, self.reciprocal)
        if self.topology == "full":
            return Architecture.fully(n_elements, self.reciprocal)
        return Architecture.grouped(n_elements, self.group_size, self.reciprocal)

    def siso_kind(self) -> str:
        return f"{self.mode}-D" if self.topology == "D" else f"{self.mode}-BD-{self.topology}"


def parse_arch_label(label: str) -> ArchSpec:
    """``no-RIS`` or ``{active|passive}-{D|BD-full|BD-group<K>}[-R|-NR]`` (default NR)."""
    if label == "no-RIS":
        return ArchSpec("none", "D", 1, False)
    m = _LABEL.match(label)
    if m is None:
        raise ValueError(f"bad architecture label {label!r}")
    mode, _, topo, k, rec = m.groups()
    if topo is None:
        return ArchSpec(mode, "D", 1, rec == "R")
    if topo == "full":
        return ArchSpec(mode, "full", 0, rec == "R")
    return ArchSpec(mode, "group", int(k), rec == "R")


@dataclass(frozen=True)
class Antennas:
    n_t: int = 2
    n_r: int = 2
    n_streams: int = 2


@dataclass(frozen=True)
class PowerSplit:
    transmit: float = 0.99
    ris: float = 0.01


@dataclass(frozen=True)
class SisoParams:
    pt: float = 1.9
    pa: float = 0.1
    pt_passive: float = 2.0
    zeta_ri_db: float = -70.0
    zeta_it_db: float = -70.0


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 200
    tol: float = 1e-5


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    architectures: tuple[str, ...] = ()
    sweep: tuple[float, ...] = ()
    trials: int = 1
    master_seed: int = 0
    antennas: Antennas = Antennas()
    n_elements: int = 32
    power_dbm: float = 20.0
    kappa: float = 1.0
    noise_dbm: float = -90.0
    power_split: PowerSplit = PowerSplit()
    geometry: Geometry = field(default_factory=Geometry)
    siso: SisoParams = SisoParams()
    solver: SolverParams = SolverParams()
    output: str = "results"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.experiment != "validate":
            if not self.sweep:
                raise ConfigError("sweep grid must be non-empty")
            if not self.architectures:
                raise ConfigError("architecture list must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        split = self.power_split
        if min(split.transmit, split.ris) < 0 or not math.isclose(split.transmit + split.ris, 1.0, abs_tol=1e-12):
            raise ConfigError("power split fractions must be non-negative and sum to 1")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        for label in self.architectures:
            try:
                parse_arch_label(label)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        a = self.antennas
        if min(a.n_t, a.n_r, a.n_streams) < 1 or a.n_streams > min(a.n_t, a.n_r):
            raise ConfigError("need 1 <= n_streams <= min(n_t, n_r)")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict) or "experiment" not in data:
        raise ConfigError("config must be an object with an 'experiment' key")
    data = dict(data)
    nested = {"antennas": Antennas, "power_split": PowerSplit, "siso": SisoParams, "solver": SolverParams}
    for key, cls in nested.items():
        if key in data:
            data[key] = _build(cls, data[key], key)
    if "geometry" in data:
        geo = data["geometry"]
        if not isinstance(geo, dict) or set(geo) - {"tx", "ris", "rx"}:
            raise ConfigError("geometry must be an object with keys among tx, ris, rx")
        try:
            data["geometry"] = Geometry(**{k: (float(v[0]), float(v[1])) for k, v in geo.items()})
        except (TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"geometry: {exc}") from exc
    for key in ("architectures", "sweep"):
        if key in data:
            if not isinstance(data[key], list):
                raise ConfigError(f"{key} must be a list")
            data[key] = tuple(data[key])
    if "sweep" in data:
        try:
            data["sweep"] = tuple(float(v) for v in data["sweep"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep: {exc}") from exc
    return _build(ExperimentConfig, data, "config")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)
