"""WMMSE/QCQP spectral-efficiency maximization for active BD-RIS aided MIMO.

The outer loop alternates closed-form combiner ``W`` and weight ``U``
updates with two QCQPs: one over the non-zero blocks of the RIS scattering
matrix ``theta`` (ball constraint from the RIS power budget) and one over
the precoder ``F`` (RIS budget plus transmit budget).

Every ball-constrained quadratic is reduced to a diagonal pencil
``(lam_i, w_i)`` so the Lagrange multiplier is found by bisection on the
scalar ``sum_i w_i / (lam_i + mu)^2``, which is non-increasing in ``mu``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .channel import ChannelRealization
from .netcore import Architecture, NoiseModel, ThetaMatrix, block_diag_mask

log = logging.getLogger(__name__)

MAX_QCQP_DIM = 4096


class QcqpError(RuntimeError):
    """The multiplier search could not bracket a feasible point."""


class InfeasibleThetaError(ValueError):
    """``theta`` leaves no RIS power for the signal (``P_A - s_I ||theta||^2 < 0``)."""


# ---------------------------------------------------------------------------
# Problem and state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MimoProblem:
    """One channel realization with its architecture, stream count and budgets."""

    channels: ChannelRealization
    arch: Architecture
    n_streams: int
    tx_power: float
    ris_power: float
    noise: NoiseModel

    def __post_init__(self):
        n_t, n_i, n_r = self.channels.dims
        if self.n_streams < 1 or self.n_streams > min(n_t, n_r):
            raise ValueError(f"n_streams={self.n_streams} must be in [1, min(N_T, N_R)]")
        if self.arch.n_elements != n_i:
            raise ValueError(f"architecture has {self.arch.n_elements} elements, channel has {n_i}")
        if self.tx_power <= 0 or self.ris_power < 0:
            raise ValueError("tx_power must be positive and ris_power non-negative")

    @property
    def H_RT(self):
        return self.channels.H_RT

    @property
    def H_RI(self):
        return self.channels.H_RI

    @property
    def H_IT(self):
        return self.channels.H_IT

    def effective_channel(self, theta) -> np.ndarray:
        return self.H_RT + self.H_RI @ np.asarray(theta) @ self.H_IT

    def ris_radiated_power(self, theta, F) -> float:
        theta = np.asarray(theta)
        return float(np.linalg.norm(theta @ self.H_IT @ F) ** 2
                     + self.noise.sigma_I_sq * np.linalg.norm(theta) ** 2)


@dataclass
class MimoState:
    W: np.ndarray
    U: np.ndarray
    theta: ThetaMatrix
    F: np.ndarray
    rate_trace: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0

    @property
    def rate(self) -> float:
        return self.rate_trace[-1] if self.rate_trace else float("nan")


@dataclass(frozen=True)
class WmmseOptions:
    tol: float = 1e-5
    max_iters: int = 200
    multiplier_search: str = "bisection"  # or "grid"
    init_fill: float = 0.9
    accelerate: bool = True


@dataclass(frozen=True)
class QcqpCanonical:
    """``min x^H B x - 2 Re(x^H c)  s.t.  x^H D x <= budget``."""

    B: np.ndarray
    c: np.ndarray
    D: np.ndarray
    budget: float
    tol: float = 1e-9

    def __post_init__(self):
        n = np.shape(self.c)[0]
        if np.shape(self.B) != (n, n) or np.shape(self.D) != (n, n):
            raise ValueError("B, c and D dimensions disagree")
        scale_b = max(np.linalg.norm(self.B), np.finfo(float).tiny)
        if np.linalg.norm(self.B - np.conj(self.B).T) > self.tol * scale_b:
            raise ValueError("B must be Hermitian")
        if np.linalg.norm(self.D - np.conj(self.D).T) > self.tol * np.linalg.norm(self.D):
            raise ValueError("D must be Hermitian")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")

    def objective(self, x) -> float:
        x = np.asarray(x)
        return float(np.vdot(x, self.B @ x).real - 2 * np.vdot(x, self.c).real)

    def constraint(self, x) -> float:
        x = np.asarray(x)
        return float(np.vdot(x, self.D @ x).real)


@dataclass(frozen=True)
class QcqpSolution:
    x: np.ndarray
    mu: float
    constraint_value: float


# ---------------------------------------------------------------------------
# Rate and WMMSE pieces
# ---------------------------------------------------------------------------


def noise_covariance(H_RI, theta, noise: NoiseModel) -> np.ndarray:
    """``s_I H_RI theta theta^H H_RI^H + s_R I``."""
    G = np.asarray(H_RI) @ np.asarray(theta)
    R = noise.sigma_I_sq * (G @ G.conj().T) + noise.sigma_R_sq * np.eye(G.shape[0])
    return 0.5 * (R + R.conj().T)


def spectral_efficiency(H, F, Rcov) -> float:
    """``log2 det(I + R^-1 H F F^H H^H)`` in b/s/Hz."""
    HF = np.asarray(H) @ np.asarray(F)
    try:
        L = np.linalg.cholesky(Rcov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("noise covariance is not positive definite") from exc
    G = sla.solve_triangular(L, HF, lower=True)
    M = np.eye(G.shape[1]) + G.conj().T @ G
    sign, logdet = np.linalg.slogdet(M)
    return float(logdet / math.log(2))


def mse_matrix(W, H, F, Rcov) -> np.ndarray:
    """MSE matrix of the estimate ``W^H y`` of the unit-power symbols."""
    WHF = W.conj().T @ H @ F
    E = WHF @ WHF.conj().T - WHF - WHF.conj().T + W.conj().T @ Rcov @ W + np.eye(F.shape[1])
    return 0.5 * (E + E.conj().T)


def update_W(H, F, Rcov) -> np.ndarray:
    """MMSE combiner ``(H F F^H H^H + R)^-1 H F``."""
    HF = H @ F
    return np.linalg.solve(HF @ HF.conj().T + Rcov, HF)


def update_U(F, H, Rcov) -> np.ndarray:
    """Optimal MSE weight ``I + F^H H^H R^-1 H F``."""
    HF = H @ F
    U = np.eye(F.shape[1]) + HF.conj().T @ np.linalg.solve(Rcov, HF)
    return 0.5 * (U + U.conj().T)


def waterfill_powers(gains, power: float) -> np.ndarray:
    """Water-filling allocation over channel gains sorted in decreasing order."""
    gains = np.asarray(gains, dtype=float)
    alloc = np.zeros(gains.size)
    pos = int(np.count_nonzero(gains > 0))
    for k in range(pos, 0, -1):
        g = gains[:k]
        level = (power + np.sum(1 / g)) / k
        if level - 1 / g[-1] >= 0:
            alloc[:k] = level - 1 / g
            break
    return alloc


def waterfilling_rate(H, power: float, noise_power: float, n_streams: int | None = None) -> float:
    """Capacity of ``y = H x + n`` with ``tr(Q) <= power`` using at most ``n_streams`` modes."""
    s = np.linalg.svd(np.asarray(H), compute_uv=False)
    if n_streams is not None:
        s = s[:n_streams]
    gains = s ** 2 / noise_power
    return float(np.sum(np.log2(1 + waterfill_powers(gains, power) * gains)))


# ---------------------------------------------------------------------------
# Ball-constrained quadratic: multiplier search on a diagonal pencil
# ---------------------------------------------------------------------------


def _pencil_multiplier(lam, w, budget: float, max_iter: int = 400) -> tuple[float, np.ndarray]:
    """Smallest ``mu >= 0`` with ``sum w / (lam + mu)^2 <= budget``.

    Returns ``mu`` and a mask of the components to keep: zero-weight
    components are dropped, which gives the minimum-norm solution when
    ``mu = 0`` and ``lam`` has a null space.
    """
    lam = np.maximum(np.asarray(lam, dtype=float), 0.0)
    w = np.asarray(w, dtype=float)
    total = float(w.sum())
    if total == 0.0:
        return 0.0, np.zeros(lam.shape, dtype=bool)
    keep = w > 1e-28 * total
    lam_max = float(lam.max())
    lam_k, w_k = lam[keep], w[keep]
    if np.all(lam_k > 1e-13 * lam_max):
        with np.errstate(divide="ignore", over="ignore"):
            slack = float(np.sum(w_k / lam_k ** 2)) <= budget
        if slack:
            return 0.0, keep
    if budget <= 0:
        raise QcqpError("zero budget with a non-zero linear term: multiplier is unbounded")
    hi = math.sqrt(total / budget)
    lo = max(0.0, hi - lam_max)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 1e-15 * hi:
            break
        if np.sum(w_k / (lam_k + mid) ** 2) > budget:
            lo = mid
        else:
            hi = mid
    return hi, keep


def _round_off(z: np.ndarray, scale: float, n: int) -> np.ndarray:
    """Zero rotated coefficients below the rounding floor of an ``n``-dim rotation.

    Such entries are indistinguishable from exact zeros, but dividing them
    by a near-null eigenvalue would spend the power budget on noise.
    """
    return np.where(np.abs(z) <= 8 * n * np.finfo(float).eps * scale, 0.0, z)


def solve_qcqp_ball(q: QcqpCanonical) -> QcqpSolution:
    """Solve the canonical QCQP via ``x(mu) = (B + mu D)^-1 c`` and bisection on ``mu``.

    The pencil ``(B, D)`` is diagonalized once (``V^H D V = I``) so every
    trial ``mu`` costs O(n).
    """
    n = q.c.shape[0]
    if not np.any(q.c):
        return QcqpSolution(np.zeros(n, complex), 0.0, 0.0)
    B = 0.5 * (q.B + q.B.conj().T)
    D = 0.5 * (q.D + q.D.conj().T)
    try:
        lam, V = sla.eigh(B, D)
    except np.linalg.LinAlgError as exc:
        raise QcqpError("D is not positive definite") from exc
    z = _round_off(V.conj().T @ q.c, np.linalg.norm(q.c) * np.linalg.norm(V, 2), n)
    mu, keep = _pencil_multiplier(lam, np.abs(z) ** 2, q.budget)
    coef = np.zeros(n, complex)
    coef[keep] = z[keep] / (np.maximum(lam[keep], 0.0) + mu)
    x = V @ coef
    return QcqpSolution(x, mu, q.constraint(x))


# ---------------------------------------------------------------------------
# theta subproblem
# ---------------------------------------------------------------------------


def symmetric_map(group_size: int) -> np.ndarray:
    """Binary ``P`` with ``vec(S) = P s_bar`` for symmetric ``S``.

    ``s_bar`` stacks the upper triangle column by column: entry ``(r, c)``
    with ``r <= c`` sits at ``c(c-1)/2 + r`` (1-based).
    """
    n = int(group_size)
    P = np.zeros((n * n, n * (n + 1) // 2))
    for i in range(1, n + 1):  # column of S
        for ip in range(1, n + 1):  # row of S
            row = n * (i - 1) + ip
            if ip <= i:
                col = i * (i - 1) // 2 + ip
            else:
                col = ip * (ip - 1) // 2 + i
            P[row - 1, col - 1] = 1.0
    return P


def _support_indices(arch: Architecture) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of ``theta`` entries in ``[vec(theta_1); ...; vec(theta_G)]`` order."""
    n = arch.group_size
    local_i = np.tile(np.arange(n), n)
    local_j = np.repeat(np.arange(n), n)
    rows, cols = [], []
    for s in arch.group_slices():
        rows.append(s.start + local_i)
        cols.append(s.start + local_j)
    return np.concatenate(rows), np.concatenate(cols)


def qcqp_dimension(arch: Architecture) -> int:
    n = arch.group_size
    per_group = n * (n + 1) // 2 if arch.reciprocal else n * n
    return arch.group_count * per_group


def theta_terms(problem: MimoProblem, W, U, F, sigma_I_sq: float | None = None):
    """Matrices ``(A, K, X)`` with ``Tr(U E) = Tr(th^H A th K) - 2 Re Tr(th^H X) + const``.

    ``A = H_RI^H W U W^H H_RI``, ``K = H_IT F F^H H_IT^H + s_I I`` and
    ``X = H_RI^H W U (I - W^H H_RT F) F^H H_IT^H``.  The RIS power is
    ``Tr(th^H th K)``.
    """
    s_I = problem.noise.sigma_I_sq if sigma_I_sq is None else sigma_I_sq
    GW = problem.H_RI.conj().T @ W
    A = GW @ U @ GW.conj().T
    TF = problem.H_IT @ F
    K = TF @ TF.conj().T + s_I * np.eye(TF.shape[0])
    inner = np.eye(F.shape[1]) - W.conj().T @ problem.H_RT @ F
    X = GW @ U @ inner @ TF.conj().T
    return 0.5 * (A + A.conj().T), 0.5 * (K + K.conj().T), X


def build_theta_qcqp(problem: MimoProblem, W, U, F) -> QcqpCanonical:
    """Vectorized theta subproblem over the block-diagonal support.

    Non-reciprocal: ``x = [vec(theta_1); ...; vec(theta_G)]``.  Reciprocal:
    ``x`` holds the upper triangles and every term is pulled back through
    ``blkdiag(P, ..., P)``.
    """
    arch = problem.arch
    dim = qcqp_dimension(arch)
    if dim > MAX_QCQP_DIM:
        raise ValueError(f"theta QCQP dimension {dim} exceeds the cap {MAX_QCQP_DIM}")
    A, K, X = theta_terms(problem, W, U, F)
    ii, jj = _support_indices(arch)
    # (K^T kron A)[(j,i), (j',i')] = K[j', j] A[i, i']
    B = K.T[np.ix_(jj, jj)] * A[np.ix_(ii, ii)]
    D = K.T[np.ix_(jj, jj)] * (ii[:, None] == ii[None, :])
    c = X[ii, jj]
    if arch.reciprocal:
        Pg = symmetric_map(arch.group_size)
        P = np.kron(np.eye(arch.group_count), Pg)
        B, D, c = P.T @ B @ P, P.T @ D @ P, P.T @ c
    B = 0.5 * (B + B.conj().T)
    D = 0.5 * (D + D.conj().T)
    return QcqpCanonical(B, c, D, problem.ris_power)


def theta_from_vector(x, arch: Architecture) -> np.ndarray:
    """Inverse of the vectorization used by :func:`build_theta_qcqp`."""
    x = np.asarray(x)
    if arch.reciprocal:
        x = np.kron(np.eye(arch.group_count), symmetric_map(arch.group_size)) @ x
    theta = np.zeros((arch.n_elements, arch.n_elements), complex)
    ii, jj = _support_indices(arch)
    theta[ii, jj] = x
    if arch.reciprocal:
        theta = 0.5 * (theta + theta.T)
    return theta


def theta_model(theta, A, K, X) -> float:
    """Quadratic model ``Tr(th^H A th K) - 2 Re Tr(th^H X)``."""
    theta = np.asarray(theta)
    return float(np.vdot(theta, A @ theta @ K).real - 2 * np.vdot(theta, X).real)


def _theta_fully_nonreciprocal(A, K, X, budget) -> np.ndarray:
    """Closed form for an unconstrained-structure theta.

    ``B + mu D = K^T kron (A + mu I)`` so both factors are diagonalized
    separately and ``theta = (A + mu I)^-1 X K^-1``.
    """
    a, Ua = np.linalg.eigh(A)
    k, Uk = np.linalg.eigh(K)
    Xt = _round_off(Ua.conj().T @ X @ Uk, np.linalg.norm(X), X.size)
    lam = np.repeat(a[:, None], k.size, axis=1)
    w = np.abs(Xt) ** 2 / k[None, :]
    mu, keep = _pencil_multiplier(lam.ravel(), w.ravel(), budget)
    keep = keep.reshape(lam.shape)
    denom = (np.maximum(lam, 0.0) + mu) * k[None, :]
    Tt = np.where(keep, Xt / np.where(keep, denom, 1.0), 0.0)
    return Ua @ Tt @ Uk.conj().T


def update_theta(problem: MimoProblem, state: MimoState) -> ThetaMatrix:
    """Exact minimizer of ``Tr(U E)`` over feasible theta with ``W, U, F`` fixed."""
    arch = problem.arch
    A, K, X = theta_terms(problem, state.W, state.U, state.F)
    if arch.is_fully and not arch.reciprocal:
        theta = _theta_fully_nonreciprocal(A, K, X, problem.ris_power)
    else:
        sol = solve_qcqp_ball(build_theta_qcqp(problem, state.W, state.U, state.F))
        theta = theta_from_vector(sol.x, arch)
    theta = np.where(block_diag_mask(arch), theta, 0)
    old = state.theta.theta
    # keep the incumbent if rounding makes the new point worse or infeasible
    new_obj, old_obj = theta_model(theta, A, K, X), theta_model(old, A, K, X)
    power = float(np.vdot(theta, theta @ K).real)
    if new_obj > old_obj + 1e-12 * max(abs(old_obj), 1e-300) or power > problem.ris_power * (1 + 1e-9):
        return state.theta
    return ThetaMatrix(theta, arch)


# ---------------------------------------------------------------------------
# F subproblem
# ---------------------------------------------------------------------------


class _Precoder:
    """``min Tr(F^H Q F) - 2 Re Tr(F^H Y)`` s.t. ``Tr(F^H M F) <= pa`` and ``||F||^2 <= pt``."""

    def __init__(self, Q, Y, M, pa, pt):
        self.Q = 0.5 * (Q + Q.conj().T)
        self.Y = Y
        self.M = None if M is None else 0.5 * (M + M.conj().T)
        self.pa = pa
        self.pt = pt

    def objective(self, F) -> float:
        return float(np.vdot(F, self.Q @ F).real - 2 * np.vdot(F, self.Y).real)

    def ris_load(self, F) -> float:
        return 0.0 if self.M is None else float(np.vdot(F, self.M @ F).real)

    def closed_form(self, mu1: float, mu2: float) -> np.ndarray:
        S = self.Q + mu2 * np.eye(self.Q.shape[0])
        if self.M is not None:
            S = S + mu1 * self.M
        return np.linalg.lstsq(S, self.Y, rcond=None)[0]

    def given_mu1(self, mu1: float) -> tuple[np.ndarray, float]:
        """Optimal ``F`` and ``mu2`` for a fixed RIS multiplier."""
        S = self.Q if self.M is None or mu1 == 0 else self.Q + mu1 * self.M
        e, V = np.linalg.eigh(0.5 * (S + S.conj().T))
        Yt = _round_off(V.conj().T @ self.Y, np.linalg.norm(self.Y), self.Y.size)
        w = np.sum(np.abs(Yt) ** 2, axis=1)
        mu2, keep = _pencil_multiplier(e, w, self.pt)
        Ft = np.zeros_like(Yt)
        Ft[keep] = Yt[keep] / (np.maximum(e[keep], 0.0) + mu2)[:, None]
        return V @ Ft, mu2

    def solve_bisection(self) -> tuple[np.ndarray, float, float]:
        F, mu2 = self.given_mu1(0.0)
        if self.M is None or self.ris_load(F) <= self.pa:
            return F, 0.0, mu2
        if self.pa <= 0:
            return np.zeros_like(self.Y), math.inf, 0.0
        m_max = float(np.linalg.eigvalsh(self.M)[-1])
        q_max = float(np.linalg.eigvalsh(self.Q)[-1])
        hi = q_max / m_max if m_max > 0 and q_max > 0 else 1.0
        lo = 0.0
        for _ in range(200):
            F, mu2 = self.given_mu1(hi)
            if self.ris_load(F) <= self.pa:
                break
            lo, hi = hi, hi * 10
        else:
            return np.zeros_like(self.Y), math.inf, 0.0
        best = (F, hi, mu2)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo <= 1e-13 * hi:
                break
            F, mu2 = self.given_mu1(mid)
            if self.ris_load(F) > self.pa:
                lo = mid
            else:
                hi = mid
                best = (F, mid, mu2)
        return best

    def solve_grid(self, points: int = 32, rounds: int = 3, span=(1e-8, 1e8)) -> tuple[np.ndarray, float, float]:
        """Log-spaced 2-D multiplier grid with local zoom; best feasible point wins."""
        F0 = self.closed_form(0.0, 0.0)
        if self.feasible(F0):
            return F0, 0.0, 0.0
        scale = max(float(np.linalg.eigvalsh(self.Q)[-1]), np.finfo(float).tiny)
        g1 = scale * np.logspace(math.log10(span[0]), math.log10(span[1]), points)
        g2 = g1.copy()
        best = (np.zeros_like(self.Y), math.inf, math.inf)
        best_obj = 0.0
        for _ in range(rounds + 1):
            for m1 in np.concatenate([[0.0], g1]) if self.M is not None else [0.0]:
                for m2 in np.concatenate([[0.0], g2]):
                    F = self.closed_form(m1, m2)
                    if self.feasible(F):
                        obj = self.objective(F)
                        if obj < best_obj:
                            best, best_obj = (F, m1, m2), obj
            _, b1, b2 = best
            step = (g1[1] / g1[0]) if g1.size > 1 else 10.0
            if np.isfinite(b1) and b1 > 0:
                g1 = np.geomspace(b1 / step, b1 * step, points)
            if np.isfinite(b2) and b2 > 0:
                g2 = np.geomspace(b2 / step, b2 * step, points)
        return best

    def feasible(self, F, rel: float = 1e-9) -> bool:
        ok_t = np.linalg.norm(F) ** 2 <= self.pt * (1 + rel)
        ok_a = self.M is None or self.ris_load(F) <= self.pa * (1 + rel) + 1e-300
        return bool(ok_t and ok_a)


def _precoder_problem(problem: MimoProblem, W, U, theta, sigma_I_sq=None, passive=False) -> _Precoder:
    theta = np.asarray(theta)
    H = problem.effective_channel(theta)
    HW = H.conj().T @ W
    Q = HW @ U @ HW.conj().T
    Y = HW @ U
    if passive:
        return _Precoder(Q, Y, None, math.inf, problem.tx_power)
    s_I = problem.noise.sigma_I_sq if sigma_I_sq is None else sigma_I_sq
    pa = problem.ris_power - s_I * np.linalg.norm(theta) ** 2
    if pa < -1e-12 * problem.ris_power:
        raise InfeasibleThetaError("theta consumes the entire amplification budget")
    TH = theta @ problem.H_IT
    return _Precoder(Q, Y, TH.conj().T @ TH, max(pa, 0.0), problem.tx_power)


def update_F(problem: MimoProblem, state: MimoState, method: str = "bisection",
             passive: bool = False) -> np.ndarray:
    """Precoder update under the RIS and transmit power constraints.

    ``method="bisection"`` runs nested bisections on the two multipliers
    (the dual is concave, so the RIS-multiplier derivative is monotone);
    ``method="grid"`` runs the log-spaced 2-D grid search.
    """
    pre = _precoder_problem(problem, state.W, state.U, state.theta.theta, passive=passive)
    if method == "bisection":
        F, _, _ = pre.solve_bisection()
    elif method == "grid":
        F, _, _ = pre.solve_grid()
    else:
        raise ValueError(f"unknown multiplier search {method!r}")
    if state.F is not None and pre.feasible(state.F) and pre.objective(state.F) < pre.objective(F):
        return state.F
    return F


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


def initial_precoder(problem: MimoProblem, power: float | None = None) -> np.ndarray:
    """Equal-power precoder on the dominant right singular vectors of ``H_RT``."""
    n_t = problem.H_RT.shape[1]
    power = problem.tx_power if power is None else power
    ns = problem.n_streams
    if np.any(problem.H_RT):
        _, _, Vh = np.linalg.svd(problem.H_RT)
        basis = Vh.conj().T[:, :ns]
    else:
        basis = np.eye(n_t, ns, dtype=complex)
    return math.sqrt(power / ns) * basis


def initial_theta(problem: MimoProblem, F, fill: float = 0.9) -> ThetaMatrix:
    """Scaled identity spending ``fill * P_A`` of the RIS budget."""
    n = problem.arch.n_elements
    load = np.linalg.norm(problem.H_IT @ F) ** 2 + problem.noise.sigma_I_sq * n
    c = math.sqrt(fill * problem.ris_power / load) if load > 0 else 0.0
    return ThetaMatrix(c * np.eye(n, dtype=complex), problem.arch)


def achieved_rate(problem: MimoProblem, theta, F) -> float:
    theta = np.asarray(theta)
    return spectral_efficiency(problem.effective_channel(theta), F,
                               noise_covariance(problem.H_RI, theta, problem.noise))


def waterfilling_precoder(H, Rcov, power: float, n_streams: int) -> np.ndarray | None:
    """Rate-optimal ``F`` under ``||F||_F^2 <= power`` alone, or ``None`` if a stream gets no power."""
    L = np.linalg.cholesky(Rcov)
    _, s, Vh = np.linalg.svd(sla.solve_triangular(L, np.asarray(H), lower=True))
    if s.size < n_streams:
        return None
    p = waterfill_powers(s[:n_streams] ** 2, power)
    if np.any(p <= 0):
        return None
    return Vh.conj().T[:, :n_streams] * np.sqrt(p)


def _polish_precoder(problem: MimoProblem, theta, F, rate: float):
    """Swap in the water-filling precoder when it is RIS-feasible and better."""
    cand = waterfilling_precoder(problem.effective_channel(theta), noise_covariance(problem.H_RI, theta, problem.noise),
                                 problem.tx_power, problem.n_streams)
    if cand is None or problem.ris_radiated_power(theta, cand) > problem.ris_power:
        return F, rate
    r = achieved_rate(problem, theta, cand)
    return (cand, r) if r > rate else (F, rate)


def _rescale_theta(problem: MimoProblem, theta, F, rate: float, evals: int = 40):
    """Best common scaling ``s * theta`` with ``s`` between 1 and the RIS power limit."""
    load = problem.ris_radiated_power(theta, F)
    if load <= 0:
        return theta, rate
    s_max = math.sqrt(problem.ris_power / load) * (1 - 1e-12)
    if s_max <= 1 + 1e-9:
        return theta, rate

    def neg_rate(s):
        return -achieved_rate(problem, s * theta, F)

    best_s, best = s_max, -neg_rate(s_max)
    if best <= rate:
        res = minimize_scalar(neg_rate, bounds=(1.0, s_max), method="bounded",
                              options={"maxiter": evals, "xatol": 1e-6 * s_max})
        best_s, best = float(res.x), -float(res.fun)
    return (best_s * theta, best) if best > rate else (theta, rate)


def _extrapolate_theta(problem: MimoProblem, old, new, F, rate: float, max_doublings: int = 30):
    """Push ``old + t (new - old)`` for ``t = 2, 4, ...`` while the rate keeps improving.

    Candidates over the RIS budget are scaled back onto it.
    """
    step = new - old
    if not np.any(step):
        return new, rate
    best, best_rate = new, rate
    t = 2.0
    for _ in range(max_doublings):
        cand = old + t * step
        load = problem.ris_radiated_power(cand, F)
        if load > problem.ris_power:
            cand = cand * (math.sqrt(problem.ris_power / load) * (1 - 1e-12))
        r = achieved_rate(problem, cand, F)
        if not r > best_rate:
            break
        best, best_rate = cand, r
        t *= 2.0
    return best, best_rate


def wmmse_optimize(problem: MimoProblem, options: WmmseOptions | None = None,
                   init: tuple[ThetaMatrix, np.ndarray] | None = None) -> MimoState:
    """Alternate ``W, U, theta, F`` updates until the rate stalls.

    Stops when the relative rate gain of an outer iteration drops below
    ``options.tol`` or after ``options.max_iters`` iterations; the state
    records the full rate trace and whether the tolerance was met.
    """
    options = options or WmmseOptions()
    if init is None:
        F = initial_precoder(problem)
        theta = initial_theta(problem, F, options.init_fill)
    else:
        theta, F = init
    ns = problem.n_streams
    state = MimoState(np.zeros((problem.H_RT.shape[0], ns), complex), np.eye(ns, dtype=complex), theta, F)
    state.rate_trace.append(achieved_rate(problem, theta.theta, F))
    for it in range(1, options.max_iters + 1):
        th = state.theta.theta
        H = problem.effective_channel(th)
        R = noise_covariance(problem.H_RI, th, problem.noise)
        state.W = update_W(H, state.F, R)
        state.U = update_U(state.F, H, R)
        previous = state.theta.theta
        state.theta = update_theta(problem, state)
        state.F = update_F(problem, state, options.multiplier_search)
        rate = achieved_rate(problem, state.theta.theta, state.F)
        if options.accelerate:
            state.F, rate = _polish_precoder(problem, state.theta.theta, state.F, rate)
            th, rate = _extrapolate_theta(problem, previous, state.theta.theta, state.F, rate)
            th, rate = _rescale_theta(problem, th, state.F, rate)
            if th is not state.theta.theta:
                state.theta = ThetaMatrix(th, problem.arch)
        prev = state.rate_trace[-1]
        state.rate_trace.append(rate)
        state.iterations = it
        if abs(rate - prev) <= options.tol * max(abs(prev), 1e-12):
            state.converged = True
            break
    else:
        log.info("WMMSE stopped at max_iters=%d without meeting tol", options.max_iters)
    return state
