"""Multiport network algebra for active BD-RIS.

Scattering-matrix partitions, the impedance network that produces the RIS
scattering matrix ``theta``, architecture constraint sets, the Takagi
factorization and the general/simplified end-to-end channel models.

All matrices are dense ``complex128`` numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

DEFAULT_TOL = 1e-10
COND_CAP = 1e12


class NetworkError(ValueError):
    """Raised when a network description violates its declared structure."""


class UnstableNetworkError(NetworkError):
    """Raised when a feedback loop in the network cannot be closed."""


def _as_complex(a) -> np.ndarray:
    return np.asarray(a, dtype=complex)


def _rel_fro(diff: np.ndarray, ref: np.ndarray) -> float:
    scale = np.linalg.norm(ref)
    err = np.linalg.norm(diff)
    return float(err / scale) if scale > 0 else float(err)


def _is_unitary(m: np.ndarray, tol: float) -> bool:
    n = m.shape[0]
    return m.ndim == 2 and m.shape == (n, n) and np.linalg.norm(m.conj().T @ m - np.eye(n)) <= tol * max(n, 1)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionedScattering:
    """System scattering matrix ``S`` partitioned into T/I/R port groups.

    Parameters
    ----------
    S : (N, N) complex array
    n_t, n_i, n_r : int
        Port counts of transmitter, RIS and receiver, ``n_t + n_i + n_r = N``.
    unilateral : bool
        Declare ``S_TR = S_IR = S_TI = 0``.
    matched : bool
        Declare ``S_TT = S_II = S_RR = 0``.
    """

    S: np.ndarray
    n_t: int
    n_i: int
    n_r: int
    unilateral: bool = False
    matched: bool = False
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        S = _as_complex(self.S)
        object.__setattr__(self, "S", S)
        sizes = (self.n_t, self.n_i, self.n_r)
        if min(sizes) < 1:
            raise NetworkError(f"port counts must be positive, got {sizes}")
        n = sum(sizes)
        if S.shape != (n, n):
            raise NetworkError(f"S has shape {S.shape}, partition needs ({n}, {n})")
        scale = max(np.linalg.norm(S), 1.0)
        if self.unilateral:
            for name in ("TR", "IR", "TI"):
                if np.linalg.norm(self.block(name)) > self.tol * scale:
                    raise NetworkError(f"unilateral flag set but S_{name} is non-zero")
        if self.matched:
            for name in ("TT", "II", "RR"):
                if np.linalg.norm(self.block(name)) > self.tol * scale:
                    raise NetworkError(f"matched flag set but S_{name} is non-zero")

    @property
    def N(self) -> int:
        return self.n_t + self.n_i + self.n_r

    def _slice(self, key: str) -> slice:
        start = {"T": 0, "I": self.n_t, "R": self.n_t + self.n_i}[key]
        size = {"T": self.n_t, "I": self.n_i, "R": self.n_r}[key]
        return slice(start, start + size)

    def block(self, name: str) -> np.ndarray:
        """Return the block ``S_<name>``, e.g. ``block("RI")``."""
        if len(name) != 2 or any(c not in "TIR" for c in name):
            raise KeyError(name)
        return self.S[self._slice(name[0]), self._slice(name[1])]

    @classmethod
    def from_blocks(cls, blocks: dict, n_t: int, n_i: int, n_r: int, **flags) -> "PartitionedScattering":
        """Assemble ``S`` from a mapping like ``{"RT": H_RT, "RI": H_RI, "IT": H_IT}``.

        Missing blocks are zero.
        """
        sizes = {"T": n_t, "I": n_i, "R": n_r}
        rows = []
        for r in "TIR":
            row = []
            for c in "TIR":
                b = blocks.get(r + c)
                row.append(np.zeros((sizes[r], sizes[c]), complex) if b is None else _as_complex(b))
            rows.append(row)
        return cls(np.block(rows), n_t, n_i, n_r, **flags)


for _name in ("TT", "TI", "TR", "IT", "II", "IR", "RT", "RI", "RR"):
    setattr(PartitionedScattering, f"S_{_name}", property(lambda self, _n=_name: self.block(_n)))


@dataclass(frozen=True)
class ImpedanceNetworkSpec:
    """Blocks of the ``2 N_I``-port reconfigurable network and the amplifier gains.

    ``amp`` holds the diagonal of ``A`` (non-negative amplification factors).
    """

    phi_II: np.ndarray
    phi_IA: np.ndarray
    phi_AI: np.ndarray
    phi_AA: np.ndarray
    amp: np.ndarray
    lossless: bool = False
    matched: bool = False
    reciprocal: bool = False
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        for name in ("phi_II", "phi_IA", "phi_AI", "phi_AA"):
            object.__setattr__(self, name, _as_complex(getattr(self, name)))
        amp = np.asarray(self.amp, dtype=float).reshape(-1)
        object.__setattr__(self, "amp", amp)
        n = amp.size
        for name in ("phi_II", "phi_IA", "phi_AI", "phi_AA"):
            if getattr(self, name).shape != (n, n):
                raise NetworkError(f"{name} has shape {getattr(self, name).shape}, expected ({n}, {n})")
        if np.any(amp < 0):
            raise NetworkError("amplification factors must be non-negative")
        if self.matched and (np.linalg.norm(self.phi_II) > self.tol or np.linalg.norm(self.phi_AA) > self.tol):
            raise NetworkError("matched/isolated flag set but phi_II or phi_AA is non-zero")
        if self.reciprocal and _rel_fro(self.phi_AI - self.phi_IA.T, self.phi_IA) > self.tol:
            raise NetworkError("reciprocal flag set but phi_AI != phi_IA^T")
        if self.lossless:
            phi = self.phi
            if np.linalg.norm(phi.conj().T @ phi - np.eye(2 * n)) > self.tol * max(2 * n, 1):
                raise NetworkError("lossless flag set but Phi^H Phi != I")

    @property
    def n_elements(self) -> int:
        return self.amp.size

    @property
    def phi(self) -> np.ndarray:
        return np.block([[self.phi_II, self.phi_IA], [self.phi_AI, self.phi_AA]])

    @classmethod
    def ideal(cls, phi_IA, amp, phi_AI=None, tol: float = DEFAULT_TOL) -> "ImpedanceNetworkSpec":
        """Lossless, matched/isolated network.

        Without ``phi_AI`` the network is reciprocal and ``phi_AI := phi_IA^T``.
        """
        phi_IA = _as_complex(phi_IA)
        n = phi_IA.shape[0]
        zero = np.zeros((n, n), complex)
        reciprocal = phi_AI is None
        if reciprocal:
            phi_AI = phi_IA.T
        return cls(zero, phi_IA, _as_complex(phi_AI), zero, amp,
                   lossless=True, matched=True, reciprocal=reciprocal, tol=tol)


@dataclass(frozen=True)
class Architecture:
    """Group-connected topology with ``group_count`` blocks of ``group_size``.

    Single-connected (D-RIS) is ``group_size == 1``; fully-connected is
    ``group_count == 1``.
    """

    group_count: int
    group_size: int
    reciprocal: bool = True

    def __post_init__(self):
        if self.group_count < 1 or self.group_size < 1:
            raise NetworkError(f"invalid architecture G={self.group_count}, N_G={self.group_size}")

    @property
    def n_elements(self) -> int:
        return self.group_count * self.group_size

    @property
    def is_single(self) -> bool:
        return self.group_size == 1

    @property
    def is_fully(self) -> bool:
        return self.group_count == 1

    @classmethod
    def single(cls, n_elements: int, reciprocal: bool = True) -> "Architecture":
        return cls(n_elements, 1, reciprocal)

    @classmethod
    def fully(cls, n_elements: int, reciprocal: bool = True) -> "Architecture":
        return cls(1, n_elements, reciprocal)

    @classmethod
    def grouped(cls, n_elements: int, group_size: int, reciprocal: bool = True) -> "Architecture":
        if group_size < 1 or n_elements % group_size:
            raise NetworkError(f"N_I={n_elements} is not a multiple of group size {group_size}")
        return cls(n_elements // group_size, group_size, reciprocal)

    def group_slices(self) -> list[slice]:
        n = self.group_size
        return [slice(g * n, (g + 1) * n) for g in range(self.group_count)]

    @property
    def label(self) -> str:
        if self.is_single:
            return "D"
        suffix = "R" if self.reciprocal else "NR"
        topo = "full" if self.is_fully else f"group{self.group_size}"
        return f"BD-{topo}-{suffix}"


class ThetaCheck(NamedTuple):
    """Outcome of :func:`validate_theta`; truthy when ``theta`` is feasible."""

    ok: bool
    worst_entry: tuple[int, int] | None
    worst_value: float
    reason: str

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class ThetaMatrix:
    """Scattering matrix of the RIS impedance network, checked against ``arch``."""

    theta: np.ndarray
    arch: Architecture
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        theta = _as_complex(self.theta)
        object.__setattr__(self, "theta", theta)
        check = validate_theta(theta, self.arch, self.tol)
        if not check:
            raise NetworkError(f"theta infeasible for {self.arch}: {check.reason}")

    def blocks(self) -> list[np.ndarray]:
        return [self.theta[s, s] for s in self.arch.group_slices()]


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise power and aggregate RIS dynamic-noise power, in watts."""

    sigma_R_sq: float
    sigma_I_sq: float

    def __post_init__(self):
        if not (self.sigma_R_sq > 0 and self.sigma_I_sq > 0):
            raise ValueError("noise powers must be strictly positive")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def block_diag_mask(arch: Architecture) -> np.ndarray:
    mask = np.zeros((arch.n_elements, arch.n_elements), dtype=bool)
    for s in arch.group_slices():
        mask[s, s] = True
    return mask


def validate_theta(theta, arch: Architecture, tol: float = DEFAULT_TOL) -> ThetaCheck:
    """Check block-diagonal structure (exact) and block symmetry (relative ``tol``).

    The report names the worst violating entry.  Symmetry is measured per
    entry as ``|theta[i, j] - theta[j, i]|`` relative to ``||theta||_F``.
    """
    theta = np.asarray(theta)
    n = arch.n_elements
    if theta.shape != (n, n):
        return ThetaCheck(False, None, float("inf"), f"shape {theta.shape} != ({n}, {n})")
    off = np.where(block_diag_mask(arch), 0, np.abs(theta))
    if np.any(off > 0):
        i, j = np.unravel_index(np.argmax(off), off.shape)
        return ThetaCheck(False, (int(i), int(j)), float(off[i, j]), "non-zero entry outside the diagonal blocks")
    if arch.reciprocal and not arch.is_single:
        scale = np.linalg.norm(theta)
        asym = np.abs(theta - theta.T)
        worst = float(asym.max()) if asym.size else 0.0
        if worst > tol * max(scale, np.finfo(float).tiny):
            i, j = np.unravel_index(np.argmax(asym), asym.shape)
            return ThetaCheck(False, (int(i), int(j)), worst, f"block not symmetric: entry ({i},{j}) vs ({j},{i})")
    return ThetaCheck(True, None, 0.0, "ok")


def assemble_theta(spec: ImpedanceNetworkSpec) -> np.ndarray:
    """Scattering matrix ``Phi_IA diag(amp) Phi_AI`` of an ideal network.

    Requires a lossless, matched/isolated spec; a reciprocal spec yields a
    symmetric result.
    """
    if not (spec.lossless and spec.matched):
        raise NetworkError("assemble_theta needs a lossless, matched/isolated network; "
                           "use general_active_reflection otherwise")
    theta = (spec.phi_IA * spec.amp[None, :]) @ spec.phi_AI
    if spec.reciprocal:
        # Exact symmetrization removes rounding asymmetry of the triple product.
        theta = 0.5 * (theta + theta.T)
    return theta


def general_active_reflection(spec: ImpedanceNetworkSpec, cond_cap: float = COND_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Scattering and amplifier-noise matrices ``(Gamma_I, Pi_I)`` of the active network.

    ``Gamma_I = Phi_II + Phi_IA A (I - Phi_AA A)^-1 Phi_AI`` and
    ``Pi_I = Phi_IA A (I - Phi_AA A)^-1``.
    """
    n = spec.n_elements
    A = np.diag(spec.amp).astype(complex)
    loop = np.eye(n) - spec.phi_AA @ A
    if np.linalg.cond(loop) > cond_cap:
        raise UnstableNetworkError("unstable amplifier loop: I - Phi_AA A is singular")
    Pi_I = spec.phi_IA @ A @ np.linalg.inv(loop)
    Gamma_I = spec.phi_II + Pi_I @ spec.phi_AI
    return Gamma_I, Pi_I


def takagi(sym, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Takagi factorization ``sym = Q diag(sigma) Q^T`` of a complex symmetric matrix.

    Uses the real symmetric embedding ``[[Re, Im], [Im, -Re]]`` whose
    eigenpairs ``([x; y], s)`` give ``sym (x - jy)^* = s (x + jy)``; this is
    robust to repeated singular values where SVD phase fixing is not.
    ``sigma`` is sorted in descending order.
    """
    sym = _as_complex(sym)
    n = sym.shape[0]
    if sym.shape != (n, n):
        raise NetworkError("takagi needs a square matrix")
    if np.linalg.norm(sym - sym.T) > tol * np.linalg.norm(sym):
        raise NetworkError("takagi needs a complex symmetric matrix")
    if n == 0:
        return np.zeros((0, 0), complex), np.zeros(0)
    sym = 0.5 * (sym + sym.T)
    re, im = sym.real, sym.imag
    embed = np.block([[re, im], [im, -re]])
    evals, evecs = np.linalg.eigh(embed)
    order = np.argsort(evals)[::-1][:n]
    evals, evecs = evals[order], evecs[:, order]
    smax = max(evals[0], 0.0)
    cutoff = 8 * n * np.finfo(float).eps * smax
    keep = evals > cutoff
    Q = evecs[:n, keep] + 1j * evecs[n:, keep]
    sigma = evals[keep]
    missing = n - Q.shape[1]
    if missing:
        # Numerically zero singular values: any orthonormal completion works.
        full, _ = np.linalg.qr(np.hstack([Q, np.eye(n)]), mode="complete")
        Q = np.hstack([Q, full[:, Q.shape[1]:n]])
        sigma = np.concatenate([sigma, np.zeros(missing)])
    return Q, sigma


class GeneralChannel(NamedTuple):
    """End-to-end channel and the noise transfer maps of the general model.

    ``ris_noise_map`` multiplies the stacked vector ``[n_in; n_A]``;
    ``rx_noise_map`` multiplies ``n_R``.
    """

    H: np.ndarray
    ris_noise_map: np.ndarray
    rx_noise_map: np.ndarray


def general_channel(S: PartitionedScattering, Gamma_T, Gamma_R, Gamma_I, Pi_I,
                    cond_cap: float = COND_CAP) -> GeneralChannel:
    """Channel of the general (mismatched, coupled) active BD-RIS model.

    ``T = (I - S Gamma)^-1 S`` and
    ``H = (I + Gamma_R) T_RT (I + T_TT + Gamma_T T_TT)^-1``.
    Transmitter-side noise is neglected.
    """
    n_t, n_i, n_r = S.n_t, S.n_i, S.n_r
    Gamma_T, Gamma_R = _as_complex(Gamma_T), _as_complex(Gamma_R)
    Gamma_I, Pi_I = _as_complex(Gamma_I), _as_complex(Pi_I)
    Gamma = sla.block_diag(Gamma_T, Gamma_I, Gamma_R)
    system = np.eye(S.N) - S.S @ Gamma
    if np.linalg.cond(system) > cond_cap:
        raise UnstableNetworkError("resonant/unstable network: I - S Gamma is singular")
    T = np.linalg.solve(system, S.S)
    t_sl, i_sl, r_sl = slice(0, n_t), slice(n_t, n_t + n_i), slice(n_t + n_i, S.N)
    T_TT, T_RT, T_RI, T_RR = T[t_sl, t_sl], T[r_sl, t_sl], T[r_sl, i_sl], T[r_sl, r_sl]
    tx_map = np.eye(n_t) + T_TT + Gamma_T @ T_TT
    if np.linalg.cond(tx_map) > cond_cap:
        raise UnstableNetworkError("resonant/unstable network: transmitter map is singular")
    out = np.eye(n_r) + Gamma_R
    H = out @ np.linalg.solve(tx_map.T, T_RT.T).T
    ris_noise_map = out @ T_RI @ np.hstack([Gamma_I, Pi_I])
    rx_noise_map = out @ (np.eye(n_r) + T_RR @ Gamma_R)
    return GeneralChannel(H, ris_noise_map, rx_noise_map)


def simplified_channel(H_RT, H_RI, H_IT, theta) -> np.ndarray:
    """``H_RT + H_RI theta H_IT``."""
    H_RT, H_RI, H_IT, theta = map(_as_complex, (H_RT, H_RI, H_IT, theta))
    if H_RI.shape[1] != theta.shape[0] or theta.shape[1] != H_IT.shape[0]:
        raise NetworkError("RIS dimensions of H_RI, theta and H_IT do not agree")
    if H_RT.shape != (H_RI.shape[0], H_IT.shape[1]):
        raise NetworkError(f"H_RT has shape {H_RT.shape}, expected {(H_RI.shape[0], H_IT.shape[1])}")
    return H_RT + H_RI @ theta @ H_IT


def passive_reduction(phi_IA, psi, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Passive network obtained by loading the amplifier ports with reactances.

    Returns ``Phi_IA diag(exp(j psi)) Phi_IA^T``, a symmetric unitary matrix.
    """
    phi_IA = _as_complex(phi_IA)
    if not _is_unitary(phi_IA, tol):
        raise NetworkError("phi_IA must be unitary")
    loads = np.exp(1j * np.asarray(psi, dtype=float))
    theta = (phi_IA * loads[None, :]) @ phi_IA.T
    return 0.5 * (theta + theta.T)
