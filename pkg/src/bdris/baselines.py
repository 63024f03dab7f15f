"""Passive BD-RIS / D-RIS baselines inside the same WMMSE outer loop.

The scattering matrix is parameterized by block-unitary ``Q`` (stored as a
``(G, n, n)`` stack): ``theta_g = Q_g`` for non-reciprocal blocks and
``theta_g = Q_g Q_g^T`` for reciprocal ones.  The theta slot of each outer
iteration runs Riemannian conjugate gradient (Polak-Ribiere+, Armijo
backtracking, QR retraction) on the product of unitary groups.  Passive
surfaces inject no amplifier noise, so ``R = s_R I``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla

from .mimo import (MimoProblem, MimoState, WmmseOptions, initial_precoder, spectral_efficiency, theta_model,
                   theta_terms, update_F, update_U, update_W, waterfilling_precoder)
from .netcore import Architecture, ThetaMatrix

log = logging.getLogger(__name__)

UNITARY_TOL = 1e-9


def _herm(x):
    return np.conj(np.swapaxes(x, -1, -2))


def _skew(x):
    return 0.5 * (x - _herm(x))


def qr_retract(Y: np.ndarray) -> np.ndarray:
    """Q factor of each block with the diagonal of R made real positive."""
    q, r = np.linalg.qr(Y)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1.0)
    return q * phase[..., None, :]


@dataclass(frozen=True)
class ManifoldPoint:
    """Stack of unitary blocks ``Q`` of shape ``(G, n, n)``."""

    Q: np.ndarray
    reciprocal: bool = False

    def __post_init__(self):
        Q = np.asarray(self.Q)
        if Q.ndim != 3 or Q.shape[1] != Q.shape[2]:
            raise ValueError("Q must have shape (G, n, n)")
        err = self.unitarity_error()
        if err > UNITARY_TOL:
            raise ValueError(f"Q blocks are not unitary (error {err:.2e})")

    def unitarity_error(self) -> float:
        n = self.Q.shape[-1]
        gram = _herm(self.Q) @ self.Q - np.eye(n)
        return float(np.max(np.linalg.norm(gram, axis=(1, 2))))

    @classmethod
    def identity(cls, arch: Architecture) -> "ManifoldPoint":
        eye = np.broadcast_to(np.eye(arch.group_size, dtype=complex), (arch.group_count, arch.group_size, arch.group_size))
        return cls(eye.copy(), arch.reciprocal)

    def blocks(self) -> np.ndarray:
        if self.reciprocal:
            return self.Q @ np.swapaxes(self.Q, -1, -2)
        return self.Q

    def theta(self) -> np.ndarray:
        return sla.block_diag(*self.blocks())


def _extract_blocks(M: np.ndarray, G: int, n: int) -> np.ndarray:
    idx = np.arange(G)[:, None] * n + np.arange(n)[None, :]
    return M[idx[:, :, None], idx[:, None, :]]


def tangent_project(Q: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Projection of ``Z`` onto the tangent space ``{Q Omega : Omega skew-Hermitian}``."""
    return Q @ _skew(_herm(Q) @ Z)


def _inner(a, b) -> float:
    return float(np.vdot(a, b).real)


class CgMemory(NamedTuple):
    grad: np.ndarray
    direction: np.ndarray
    step: float


class CgResult(NamedTuple):
    point: ManifoldPoint
    cost: float
    steps: int
    grad_norm: float
    stalled: bool


def riemannian_cg_step(cost: Callable[[ManifoldPoint], float], egrad: Callable[[ManifoldPoint], np.ndarray],
                       point: ManifoldPoint, memory: CgMemory | None = None,
                       c1: float = 1e-4, max_backtracks: int = 50):
    """One PR+ conjugate-gradient step with Armijo backtracking.

    Returns ``(new_point, memory, stalled)``.  A zero gradient returns the
    point unchanged; failed line search returns the current point flagged
    ``stalled``.
    """
    Q = point.Q
    rgrad = tangent_project(Q, egrad(point))
    gnorm2 = _inner(rgrad, rgrad)
    if gnorm2 == 0.0:
        return point, CgMemory(rgrad, np.zeros_like(rgrad), 0.0), False
    if memory is None:
        direction = -rgrad
        t = 1.0 / math.sqrt(gnorm2)
    else:
        old_grad = tangent_project(Q, memory.grad)
        old_dir = tangent_project(Q, memory.direction)
        prev = _inner(memory.grad, memory.grad)
        beta = max(0.0, _inner(rgrad, rgrad - old_grad) / prev) if prev > 0 else 0.0
        direction = -rgrad + beta * old_dir
        if _inner(direction, rgrad) >= 0:
            direction = -rgrad
        t = 2.0 * memory.step if memory.step > 0 else 1.0 / math.sqrt(gnorm2)
    slope = _inner(rgrad, direction)
    f0 = cost(point)
    for _ in range(max_backtracks):
        cand = ManifoldPoint(qr_retract(Q + t * direction), point.reciprocal)
        if cost(cand) <= f0 + c1 * t * slope:
            return cand, CgMemory(rgrad, direction, t), False
        t *= 0.5
    return point, CgMemory(rgrad, -rgrad, 0.0), True


def minimize_unitary(cost, egrad, start: ManifoldPoint, max_steps: int = 100, tol: float = 1e-6) -> CgResult:
    """Run CG until the Riemannian gradient norm drops by ``tol`` relative to the start."""
    point, memory = start, None
    g0 = None
    stalled = False
    gnorm = 0.0
    steps = 0
    for steps in range(1, max_steps + 1):
        rgrad = tangent_project(point.Q, egrad(point))
        gnorm = math.sqrt(_inner(rgrad, rgrad))
        g0 = gnorm if g0 is None else g0
        if gnorm <= tol * max(g0, np.finfo(float).tiny) or gnorm == 0.0:
            steps -= 1
            break
        point, memory, stalled = riemannian_cg_step(cost, egrad, point, memory)
        if stalled:
            break
    return CgResult(point, cost(point), steps, gnorm, stalled)


def _theta_cost(A, K, X, arch: Architecture):
    """Cost and Euclidean gradient (w.r.t. ``conj(Q)``) of the quadratic theta model."""
    G, n = arch.group_count, arch.group_size

    def cost(p: ManifoldPoint) -> float:
        return theta_model(p.theta(), A, K, X)

    def egrad(p: ManifoldPoint) -> np.ndarray:
        theta = p.theta()
        Gb = _extract_blocks(A @ theta @ K - X, G, n)
        if p.reciprocal:
            return (Gb + np.swapaxes(Gb, -1, -2)) @ np.conj(p.Q)
        return Gb

    return cost, egrad


@dataclass(frozen=True)
class PassiveOptions:
    wmmse: WmmseOptions = WmmseOptions()
    cg_steps: int = 100
    cg_tol: float = 1e-6


@dataclass
class PassiveState(MimoState):
    point: ManifoldPoint | None = None


def passive_noise(problem: MimoProblem) -> np.ndarray:
    return problem.noise.sigma_R_sq * np.eye(problem.H_RT.shape[0])


def passive_rate(problem: MimoProblem, theta, F) -> float:
    return spectral_efficiency(problem.effective_channel(theta), F, passive_noise(problem))


def _extrapolate_point(problem: MimoProblem, old: ManifoldPoint, new: ManifoldPoint, F, rate: float,
                       max_doublings: int = 30):
    """Retract ``Q_old + t (Q_new - Q_old)`` for ``t = 2, 4, ...`` while the rate improves."""
    step = new.Q - old.Q
    if not np.any(step):
        return new, rate
    best, best_rate = new, rate
    t = 2.0
    for _ in range(max_doublings):
        cand = ManifoldPoint(qr_retract(old.Q + t * step), new.reciprocal)
        r = passive_rate(problem, cand.theta(), F)
        if not r > best_rate:
            break
        best, best_rate = cand, r
        t *= 2.0
    return best, best_rate


def passive_bdris_mimo(problem: MimoProblem, options: PassiveOptions | None = None,
                       start: ManifoldPoint | None = None) -> PassiveState:
    """WMMSE with a Riemannian-CG theta slot over block-unitary scattering matrices.

    ``problem.tx_power`` is the passive transmit budget; ``ris_power`` and
    ``noise.sigma_I_sq`` are ignored.
    """
    options = options or PassiveOptions()
    arch = problem.arch
    point = start if start is not None else ManifoldPoint.identity(arch)
    if point.reciprocal != arch.reciprocal:
        point = ManifoldPoint(point.Q, arch.reciprocal)
    R = passive_noise(problem)
    F = initial_precoder(problem)
    ns = problem.n_streams
    state = PassiveState(np.zeros((problem.H_RT.shape[0], ns), complex), np.eye(ns, dtype=complex),
                         ThetaMatrix(point.theta(), arch), F, point=point)
    state.rate_trace.append(passive_rate(problem, state.theta.theta, F))
    opts = options.wmmse
    for it in range(1, opts.max_iters + 1):
        H = problem.effective_channel(state.theta.theta)
        state.W = update_W(H, state.F, R)
        state.U = update_U(state.F, H, R)
        A, K, X = theta_terms(problem, state.W, state.U, state.F, sigma_I_sq=0.0)
        cost, egrad = _theta_cost(A, K, X, arch)
        previous = state.point
        res = minimize_unitary(cost, egrad, state.point, options.cg_steps, options.cg_tol)
        if res.cost <= cost(state.point):
            state.point = res.point
            state.theta = ThetaMatrix(res.point.theta(), arch)
        state.F = update_F(problem, state, opts.multiplier_search, passive=True)
        rate = passive_rate(problem, state.theta.theta, state.F)
        if opts.accelerate:
            cand = waterfilling_precoder(problem.effective_channel(state.theta.theta), R, problem.tx_power, ns)
            if cand is not None:
                r = passive_rate(problem, state.theta.theta, cand)
                if r > rate:
                    state.F, rate = cand, r
            point, rate = _extrapolate_point(problem, previous, state.point, state.F, rate)
            if point is not state.point:
                state.point = point
                state.theta = ThetaMatrix(point.theta(), arch)
        prev = state.rate_trace[-1]
        state.rate_trace.append(rate)
        state.iterations = it
        if abs(rate - prev) <= opts.tol * max(abs(prev), 1e-12):
            state.converged = True
            break
    else:
        log.info("passive WMMSE stopped at max_iters=%d without meeting tol", opts.max_iters)
    return state


def passive_drs_mimo(problem: MimoProblem, options: PassiveOptions | None = None) -> PassiveState:
    """Unit-modulus diagonal surface: the ``1 x 1`` block special case."""
    n = problem.channels.dims[1]
    if not problem.arch.is_single:
        problem = MimoProblem(problem.channels, Architecture.single(n, False), problem.n_streams,
                              problem.tx_power, problem.ris_power, problem.noise)
    return passive_bdris_mimo(problem, options)
