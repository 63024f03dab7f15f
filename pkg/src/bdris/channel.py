"""Seeded channel generation: path loss, Rician/Rayleigh fading and scene geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LINK_IDS = {"RT": 0, "RI": 1, "IT": 2}


@dataclass(frozen=True)
class Geometry:
    """2-D positions (meters) of transmitter, RIS and receiver."""

    tx: tuple[float, float] = (0.0, -60.0)
    ris: tuple[float, float] = (300.0, 10.0)
    rx: tuple[float, float] = (300.0, 0.0)

    def __post_init__(self):
        for a, b in (("tx", "ris"), ("tx", "rx"), ("ris", "rx")):
            if self.distance(a, b) <= 0:
                raise ValueError(f"{a} and {b} coincide")

    def position(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def distance(self, a: str, b: str) -> float:
        return float(np.linalg.norm(self.position(a) - self.position(b)))

    def angle(self, a: str, b: str) -> float:
        """Direction of ``b`` seen from ``a``, radians from the x-axis."""
        d = self.position(b) - self.position(a)
        return math.atan2(d[1], d[0])


# receiving node, transmitting node per link
_ENDPOINTS = {"RT": ("rx", "tx"), "RI": ("rx", "ris"), "IT": ("ris", "tx")}


def pathloss_db(d) -> float | np.ndarray:
    """Distance path loss ``41.2 + 28.7 log10(d)`` in dB."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 41.2 + 28.7 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def pathloss_gain(d) -> float | np.ndarray:
    """Linear mean power gain ``10^(-PL/10)``."""
    return 10.0 ** (-np.asarray(pathloss_db(d)) / 10.0)


@dataclass(frozen=True)
class FadingSpec:
    """Rician factor, mean power gain and matrix shape of one link."""

    kappa: float
    pathloss_linear: float
    dims: tuple[int, int]
    los: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kappa < 0 or self.pathloss_linear < 0:
            raise ValueError("kappa and pathloss_linear must be non-negative")
        if self.los is not None and np.shape(self.los) != tuple(self.dims):
            raise ValueError("LOS matrix shape does not match dims")


def steering_vector(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA response, unit-modulus entries."""
    return np.exp(1j * math.pi * np.arange(n) * math.sin(angle))


def los_matrix(geometry: Geometry, link: str, dims: tuple[int, int]) -> np.ndarray:
    """Rank-one unit-modulus LOS component of ``link`` from the scene angles."""
    rx_node, tx_node = _ENDPOINTS[link]
    arrival = geometry.angle(rx_node, tx_node)
    departure = geometry.angle(tx_node, rx_node)
    return np.outer(steering_vector(dims[0], arrival), steering_vector(dims[1], departure).conj())


def draw_rician(spec: FadingSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``sqrt(g) (sqrt(k/(k+1)) H_los + sqrt(1/(k+1)) H_nlos)``.

    ``H_nlos`` has i.i.d. CN(0, 1) entries so ``E|h|^2 = g``.  Without an
    explicit LOS matrix an all-ones matrix is used.
    """
    rows, cols = spec.dims
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)
    k = spec.kappa
    if k == 0:
        small = nlos
    else:
        los = np.ones((rows, cols), complex) if spec.los is None else np.asarray(spec.los, complex)
        if math.isinf(k):
            small = los
        else:
            small = math.sqrt(k / (k + 1)) * los + math.sqrt(1 / (k + 1)) * nlos
    return math.sqrt(spec.pathloss_linear) * small


def link_stream(master_seed: int, trial_index: int, link_id: int) -> np.random.Generator:
    """Independent Philox stream keyed by ``(master_seed, trial_index, link_id)``."""
    seq = np.random.SeedSequence([int(master_seed), int(trial_index), int(link_id)])
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class ChannelRealization:
    """``H_RT``, ``H_RI``, ``H_IT`` plus the seed that produced them."""

    H_RT: np.ndarray
    H_RI: np.ndarray
    H_IT: np.ndarray
    master_seed: int | None = None
    trial_index: int | None = None

    def __post_init__(self):
        n_r, n_t = np.shape(self.H_RT)
        n_r2, n_i = np.shape(self.H_RI)
        n_i2, n_t2 = np.shape(self.H_IT)
        if (n_r, n_t, n_i) != (n_r2, n_t2, n_i2):
            raise ValueError("channel dimensions are inconsistent")
        for name in ("H_RT", "H_RI", "H_IT"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(n_t, n_i, n_r)``."""
        return self.H_RT.shape[1], self.H_IT.shape[0], self.H_RT.shape[0]


def generate_realization(geometry: Geometry, dims: tuple[int, int, int], kappa: float,
                         master_seed: int, trial_index: int) -> ChannelRealization:
    """Draw the three links for one Monte-Carlo trial.

    ``dims`` is ``(n_t, n_i, n_r)``.  Each link uses its own keyed stream so
    the result is a pure function of the arguments.
    """
    n_t, n_i, n_r = dims
    shapes = {"RT": (n_r, n_t), "RI": (n_r, n_i), "IT": (n_i, n_t)}
    mats = {}
    for link, shape in shapes.items():
        rx_node, tx_node = _ENDPOINTS[link]
        spec = FadingSpec(kappa, float(pathloss_gain(geometry.distance(rx_node, tx_node))), shape,
                          los_matrix(geometry, link, shape))
        mats[link] = draw_rician(spec, link_stream(master_seed, trial_index, LINK_IDS[link]))
    return ChannelRealization(mats["RT"], mats["RI"], mats["IT"], master_seed, trial_index)
