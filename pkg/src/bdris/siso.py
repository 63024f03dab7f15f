"""Closed-form SISO optimization and SNR scaling laws for active (BD-)RIS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .netcore import Architecture, ThetaMatrix

KINDS = ("active-D", "active-BD-group", "active-BD-full", "passive-D", "passive-BD-group", "passive-BD-full")


class AlignmentError(ValueError):
    """A group channel vanishes, so the aligning rotation is undefined."""


@dataclass(frozen=True)
class SisoChannel:
    """Scalar direct link, RIS-from-TX column ``h_IT`` and RX-from-RIS row ``h_RI``."""

    h_RT: complex
    h_IT: np.ndarray
    h_RI: np.ndarray

    def __post_init__(self):
        h_IT = np.asarray(self.h_IT, dtype=complex).reshape(-1)
        h_RI = np.asarray(self.h_RI, dtype=complex).reshape(-1)
        if h_IT.shape != h_RI.shape:
            raise ValueError("h_IT and h_RI must have the same length")
        if not (np.all(np.isfinite(h_IT)) and np.all(np.isfinite(h_RI)) and np.isfinite(self.h_RT)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "h_IT", h_IT)
        object.__setattr__(self, "h_RI", h_RI)
        object.__setattr__(self, "h_RT", complex(self.h_RT))

    @property
    def n_elements(self) -> int:
        return self.h_IT.size


@dataclass(frozen=True)
class PowerBudget:
    """Transmit/RIS powers and noise powers in watts."""

    P_T: float
    P_A: float
    P_T_passive: float = 0.0
    sigma_I_sq: float = 1e-12
    sigma_R_sq: float = 1e-12

    def __post_init__(self):
        vals = (self.P_T, self.P_A, self.P_T_passive, self.sigma_I_sq, self.sigma_R_sq)
        if min(vals) < 0:
            raise ValueError("powers must be non-negative")
        if self.P_T + self.P_A <= 0:
            raise ValueError("P_T + P_A must be positive")


@dataclass(frozen=True)
class SisoSolution:
    theta: ThetaMatrix
    amp_factor: float
    snr_linear: float


def snr(theta, ch: SisoChannel, pb: PowerBudget) -> float:
    """Received SNR ``P_T |h_RT + h_RI theta h_IT|^2 / (s_I ||h_RI theta||^2 + s_R)``."""
    theta = np.asarray(theta)
    row = ch.h_RI @ theta
    signal = pb.P_T * abs(ch.h_RT + row @ ch.h_IT) ** 2
    return float(signal / (pb.sigma_I_sq * np.vdot(row, row).real + pb.sigma_R_sq))


def passive_snr(theta, ch: SisoChannel, pb: PowerBudget) -> float:
    """SNR of a passive RIS: transmit power ``P_T_passive``, no dynamic noise."""
    theta = np.asarray(theta)
    return float(pb.P_T_passive * abs(ch.h_RT + ch.h_RI @ theta @ ch.h_IT) ** 2 / pb.sigma_R_sq)


def radiated_power_siso(theta, ch: SisoChannel, pb: PowerBudget) -> float:
    """Average power re-radiated by the RIS, ``P_T ||theta h_IT||^2 + s_I ||theta||_F^2``."""
    theta = np.asarray(theta)
    out = theta @ ch.h_IT
    return float(pb.P_T * np.vdot(out, out).real + pb.sigma_I_sq * np.linalg.norm(theta) ** 2)


def amp_factor_equal(pb: PowerBudget, h_IT, n_elements: int) -> float:
    """Common amplification factor that spends ``P_A`` exactly under a unitary ``theta``."""
    h_IT = np.asarray(h_IT)
    denom = pb.P_T * float(np.vdot(h_IT, h_IT).real) + pb.sigma_I_sq * n_elements
    if denom <= 0:
        raise ZeroDivisionError("amplification factor undefined: zero incident power and noise")
    return math.sqrt(pb.P_A / denom)


# ---------------------------------------------------------------------------
# Unitary building blocks
# ---------------------------------------------------------------------------


def unitary_with_first_column(v) -> np.ndarray:
    """Deterministic unitary whose first column is the unit vector ``v``.

    A Householder reflector maps ``e_1`` onto ``v`` with its leading phase
    removed; the phase is then restored on the whole matrix.
    """
    v = np.asarray(v, dtype=complex)
    n = v.size
    phase = np.exp(1j * np.angle(v[0])) if v[0] != 0 else 1.0
    u = v / phase
    w = -u.copy()
    w[0] += 1.0
    wn = np.vdot(w, w).real
    if wn < 1e-30:
        return phase * np.eye(n, dtype=complex)
    return phase * (np.eye(n, dtype=complex) - (2.0 / wn) * np.outer(w, w.conj()))


def symmetric_unitary_map(u, v, degenerate_tol: float = 1e-14) -> np.ndarray:
    """Symmetric unitary ``theta`` with ``theta @ u = v`` for unit vectors ``u, v``.

    Built as ``Q Q^T`` with ``Q^T`` sending the pair ``(u, v*)`` onto a pair
    ``(x, x*)`` of equal Gram matrix supported on the first two coordinates.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    n = u.size
    w = v.conj()
    z = u @ v  # u^T v, equals x^T x for the target pair
    alpha = np.vdot(u, w)
    resid = w - alpha * u
    beta = np.linalg.norm(resid)
    half = np.exp(0.5j * np.angle(z)) if z != 0 else 1.0
    if n >= 2 and beta > degenerate_tol:
        t = 0.5 * math.acos(min(max(abs(z), -1.0), 1.0))
        x = np.zeros(n, complex)
        x[0], x[1] = half * math.cos(t), half * 1j * math.sin(t)
        src = np.column_stack([u, resid / beta])
        dst = np.column_stack([x, (x.conj() - alpha * x) / beta])
    else:
        x = np.zeros(n, complex)
        x[0] = half
        src = u[:, None]
        dst = x[:, None]
    k = src.shape[1]
    full, _ = np.linalg.qr(np.hstack([src, np.eye(n)]), mode="complete")
    B_u = np.hstack([src, full[:, k:n]])
    B_x = np.hstack([dst, np.eye(n, dtype=complex)[:, k:]])
    Q = (B_x @ B_u.conj().T).T
    theta = Q @ Q.T
    return 0.5 * (theta + theta.T)


def _group_directions(ch: SisoChannel, arch: Architecture):
    if arch.n_elements != ch.n_elements:
        raise ValueError(f"architecture has {arch.n_elements} elements, channel has {ch.n_elements}")
    for s in arch.group_slices():
        g_it, g_ri = ch.h_IT[s], ch.h_RI[s]
        n_it, n_ri = np.linalg.norm(g_it), np.linalg.norm(g_ri)
        if n_it == 0 or n_ri == 0:
            raise AlignmentError(f"zero channel on group {s.start // arch.group_size}")
        yield s, g_it / n_it, g_ri.conj() / n_ri


def aligning_theta(ch: SisoChannel, arch: Architecture) -> np.ndarray:
    """Block-unitary ``theta_bar`` sending each ``h_IT,g`` direction onto ``h_RI,g^H``.

    Non-reciprocal blocks are ``V U^H`` with prescribed first columns;
    reciprocal blocks are symmetric unitary.
    """
    theta = np.zeros((arch.n_elements, arch.n_elements), complex)
    for s, u, v in _group_directions(ch, arch):
        if arch.reciprocal:
            theta[s, s] = symmetric_unitary_map(u, v)
        else:
            theta[s, s] = unitary_with_first_column(v) @ unitary_with_first_column(u).conj().T
    return theta


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


def _require_no_direct_link(ch: SisoChannel):
    if ch.h_RT != 0:
        raise ValueError("closed-form solution assumes a blocked direct link (h_RT = 0)")


def _finish(theta_bar: np.ndarray, arch: Architecture, ch: SisoChannel, pb: PowerBudget) -> SisoSolution:
    amp = amp_factor_equal(pb, ch.h_IT, arch.n_elements)
    theta = amp * theta_bar
    return SisoSolution(ThetaMatrix(theta, arch), amp, snr(theta, ch, pb))


def solve_drs(ch: SisoChannel, pb: PowerBudget) -> SisoSolution:
    """Active D-RIS optimum: phases ``-angle(h_RI,n h_IT,n)`` and equal amplification."""
    _require_no_direct_link(ch)
    phases = -np.angle(ch.h_RI * ch.h_IT)
    arch = Architecture.single(ch.n_elements)
    return _finish(np.diag(np.exp(1j * phases)), arch, ch, pb)


def solve_bdris_nonreciprocal(ch: SisoChannel, pb: PowerBudget, arch: Architecture) -> SisoSolution:
    """Active non-reciprocal BD-RIS optimum with per-group unitary alignment."""
    _require_no_direct_link(ch)
    if arch.reciprocal:
        arch = Architecture(arch.group_count, arch.group_size, reciprocal=False)
    return _finish(aligning_theta(ch, arch), arch, ch, pb)


def solve_bdris_reciprocal(ch: SisoChannel, pb: PowerBudget, arch: Architecture) -> SisoSolution:
    """Active reciprocal BD-RIS optimum; each block is symmetric unitary."""
    _require_no_direct_link(ch)
    if not arch.reciprocal:
        arch = Architecture(arch.group_count, arch.group_size, reciprocal=True)
    return _finish(aligning_theta(ch, arch), arch, ch, pb)


def _group_gain(ch: SisoChannel, arch: Architecture) -> float:
    """``sum_g ||h_RI,g|| ||h_IT,g||``."""
    shape = (arch.group_count, arch.group_size)
    ri = np.linalg.norm(ch.h_RI.reshape(shape), axis=1)
    it = np.linalg.norm(ch.h_IT.reshape(shape), axis=1)
    return float(ri @ it)


def optimal_snr_active(ch: SisoChannel, pb: PowerBudget, arch: Architecture) -> float:
    """Closed-form optimum SNR of active BD-RIS (any group size, h_RT = 0)."""
    gain = _group_gain(ch, arch)
    n_ri = float(np.vdot(ch.h_RI, ch.h_RI).real)
    n_it = float(np.vdot(ch.h_IT, ch.h_IT).real)
    denom = pb.sigma_I_sq * pb.P_A * n_ri + pb.sigma_R_sq * (pb.P_T * n_it + pb.sigma_I_sq * ch.n_elements)
    return float(pb.P_T * pb.P_A * gain ** 2 / denom)


def optimal_snr_passive(ch: SisoChannel, pb: PowerBudget, arch: Architecture) -> float:
    """Closed-form optimum SNR of passive BD-RIS (any group size, h_RT = 0)."""
    gain = _group_gain(ch, arch)
    return float(pb.P_T_passive * gain ** 2 / pb.sigma_R_sq)


# ---------------------------------------------------------------------------
# Scaling laws
# ---------------------------------------------------------------------------


def gamma_half(n: int) -> float:
    """``Gamma(n + 1/2) = (2n)! / (4^n n!) sqrt(pi)`` for integer ``n >= 0``."""
    return float(Fraction(math.factorial(2 * n), 4 ** n * math.factorial(n))) * math.sqrt(math.pi)


def group_gain_factor(group_size: int) -> float:
    """``Gamma^4(N_G + 1/2) / (N_G^2 Gamma^4(N_G))``.

    The gamma ratio is formed exactly from the factorial identity so large
    group sizes do not overflow.
    """
    n = int(group_size)
    if n < 1:
        raise ValueError("group size must be positive")
    ratio = Fraction(math.factorial(2 * n), 4 ** n * math.factorial(n) * math.factorial(n - 1))
    return float(ratio ** 4 / n ** 2) * math.pi ** 2


def scaling_constants(pb: PowerBudget, zeta_ri_sq: float, zeta_it_sq: float) -> tuple[float, float]:
    """``(alpha, beta)`` prefactors of the active and passive scaling laws."""
    denom = (pb.sigma_I_sq * pb.P_A * zeta_ri_sq + pb.sigma_R_sq * pb.P_T * zeta_it_sq
             + pb.sigma_R_sq * pb.sigma_I_sq)
    alpha = pb.P_T * pb.P_A * zeta_ri_sq * zeta_it_sq / denom
    beta = pb.P_T_passive * zeta_ri_sq * zeta_it_sq / pb.sigma_R_sq
    return alpha, beta


def asymptotic_snr(kind: str, n_elements: int, group_size: int, pb: PowerBudget,
                   zeta_ri_sq: float, zeta_it_sq: float) -> float:
    """Large-``N_I`` SNR under i.i.d. Rayleigh fading.

    Active kinds grow linearly in ``n_elements`` and passive kinds
    quadratically; ``group_size`` only matters for the ``*-group`` kinds.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if kind.endswith("group") and n_elements % group_size:
        raise ValueError("n_elements must be a multiple of group_size")
    alpha, beta = scaling_constants(pb, zeta_ri_sq, zeta_it_sq)
    if kind.endswith("-D"):
        factor = math.pi ** 2 / 16
    elif kind.endswith("group"):
        factor = group_gain_factor(group_size)
    else:
        factor = 1.0
    if kind.startswith("active"):
        return alpha * factor * n_elements
    return beta * factor * n_elements ** 2


def crossover_elements(pb: PowerBudget, zeta_ri_sq: float, zeta_it_sq: float) -> tuple[float, float]:
    """Element counts below which active beats passive.

    Returns ``(N_bar, N_tilde)``: active D-RIS vs passive D-RIS (equivalently
    fully-connected active vs passive BD-RIS) and fully-connected active
    BD-RIS vs passive D-RIS, ``N_tilde = (16 / pi^2) N_bar``.
    """
    if min(pb.P_T, pb.P_A, pb.P_T_passive, pb.sigma_I_sq, pb.sigma_R_sq) <= 0:
        raise ValueError("crossover needs strictly positive powers")
    denom = (pb.sigma_I_sq * pb.P_A * zeta_ri_sq + pb.sigma_R_sq * pb.P_T * zeta_it_sq
             + pb.sigma_R_sq * pb.sigma_I_sq)
    if denom == 0:
        raise ZeroDivisionError("crossover denominator vanishes")
    n_bar = (pb.P_T / pb.P_T_passive) * pb.sigma_R_sq * pb.P_A / denom
    return n_bar, 16 / math.pi ** 2 * n_bar
