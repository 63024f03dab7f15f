"""Invariant suite: seeded residual checks across all modules."""
from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from ..channel import Geometry, generate_realization
from ..mimo import (MimoProblem, QcqpCanonical, mse_matrix, solve_qcqp_ball, spectral_efficiency,
                    update_U, update_W, wmmse_optimize, WmmseOptions)
from ..netcore import Architecture, NoiseModel, PartitionedScattering, general_channel, simplified_channel, takagi, \
    validate_theta
from ..siso import PowerBudget, SisoChannel, crossover_elements, solve_bdris_nonreciprocal, \
    solve_bdris_reciprocal
from .csvio import ANALYTIC_TRIAL, ResultRow


class CheckResult(NamedTuple):
    name: str
    residual: float
    tolerance: float
    passed: bool
    instances: int


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def random_qcqp(rng, n: int) -> QcqpCanonical:
    """Random instance with PSD (possibly singular) ``B`` and PD ``D``."""
    M = _crandn(rng, n, rng.integers(1, n + 1))
    N = _crandn(rng, n, n)
    B = M @ M.conj().T
    D = N @ N.conj().T + 0.1 * np.eye(n)
    c = _crandn(rng, n)
    return QcqpCanonical(B, c, D, float(rng.uniform(0.05, 5.0)))


def check_general_vs_simplified(rng, reps: int) -> float:
    worst = 0.0
    for _ in range(reps):
        n_t, n_i, n_r = (int(x) for x in rng.integers(1, 5, size=3))
        H_RT, H_RI, H_IT = _crandn(rng, n_r, n_t), _crandn(rng, n_r, n_i), _crandn(rng, n_i, n_t)
        theta = _crandn(rng, n_i, n_i)
        blocks = {"RT": H_RT, "RI": H_RI, "IT": H_IT}
        S = PartitionedScattering.from_blocks(blocks, n_t, n_i, n_r, unilateral=True, matched=True)
        gen = general_channel(S, np.zeros((n_t, n_t)), np.zeros((n_r, n_r)), theta, np.zeros((n_i, n_i)))
        ref = simplified_channel(H_RT, H_RI, H_IT, theta)
        worst = max(worst, float(np.linalg.norm(gen.H - ref) / np.linalg.norm(ref)))
    return worst


def check_takagi(rng, reps: int) -> float:
    worst = 0.0
    for _ in range(reps):
        n = int(rng.integers(1, 9))
        M = _crandn(rng, n, n)
        sym = M + M.T
        Q, s = takagi(sym)
        worst = max(worst, float(np.linalg.norm(Q @ np.diag(s) @ Q.T - sym) / np.linalg.norm(sym)),
                    float(np.linalg.norm(Q.conj().T @ Q - np.eye(n))))
    return worst


def check_siso_reciprocal(rng, reps: int) -> float:
    worst = 0.0
    pb = PowerBudget(1.9, 0.1, 2.0, 1e-12, 1e-12)
    for _ in range(reps):
        ng = int(rng.choice([1, 2, 4]))
        n = ng * int(rng.integers(1, 5))
        ch = SisoChannel(0.0, 1e-3 * _crandn(rng, n), 1e-3 * _crandn(rng, n))
        a = solve_bdris_nonreciprocal(ch, pb, Architecture.grouped(n, ng, False)).snr_linear
        b = solve_bdris_reciprocal(ch, pb, Architecture.grouped(n, ng, True)).snr_linear
        worst = max(worst, abs(a - b) / a)
    return worst


def check_qcqp_kkt(rng, reps: int) -> float:
    worst = 0.0
    for _ in range(reps):
        q = random_qcqp(rng, int(rng.integers(1, 9)))
        sol = solve_qcqp_ball(q)
        worst = max(worst, sol.mu * abs(sol.constraint_value - q.budget) / q.budget,
                    max(0.0, sol.constraint_value / q.budget - 1))
    return worst


def _small_problem(rng, arch: Architecture, seed: int) -> MimoProblem:
    ch = generate_realization(Geometry(), (2, arch.n_elements, 2), 1.0, seed, int(rng.integers(0, 2 ** 31)))
    return MimoProblem(ch, arch, 2, 0.99, 0.01, NoiseModel(1e-12, 1e-12))


def check_rate_identity(rng, reps: int) -> float:
    worst = 0.0
    for _ in range(reps):
        n_r, n_t, n_s = 3, 3, int(rng.integers(1, 4))
        H, F = _crandn(rng, n_r, n_t), _crandn(rng, n_t, n_s)
        G = _crandn(rng, n_r, n_r)
        R = G @ G.conj().T + 0.5 * np.eye(n_r)
        W = update_W(H, F, R)
        U = update_U(F, H, R)
        E = mse_matrix(W, H, F, R)
        lhs = np.linalg.slogdet(U)[1] / math.log(2)
        rate = spectral_efficiency(H, F, R)
        worst = max(worst, abs(lhs - rate), abs(np.trace(U @ E).real - n_s))
    return worst


def check_wmmse_monotone(rng, reps: int, seed: int) -> float:
    """Most negative per-iteration rate change (0 when monotone)."""
    worst = 0.0
    archs = [Architecture.fully(8, False), Architecture.grouped(8, 2, True), Architecture.single(8)]
    for k in range(reps):
        p = _small_problem(rng, archs[k % len(archs)], seed)
        st = wmmse_optimize(p, WmmseOptions(max_iters=15))
        worst = min(worst, float(np.min(np.diff(st.rate_trace))))
    return max(0.0, -worst)


def check_theta_negative_control(rng) -> float:
    """1 when an asymmetric reciprocal block is flagged, else 0."""
    arch = Architecture.grouped(4, 2, True)
    theta = np.zeros((4, 4), complex)
    theta[:2, :2] = [[1, 0.5], [0.5, 1]]
    theta[2:, 2:] = np.eye(2)
    theta[0, 1] += 1e-3
    return 0.0 if validate_theta(theta, arch) else 1.0


def check_crossover() -> float:
    n_bar, n_tilde = crossover_elements(PowerBudget(1.9, 0.1, 2.0, 1e-12, 1e-12), 1e-7, 1e-7)
    return max(abs(n_bar / 4.75e5 - 1), abs(n_tilde / 7.70e5 - 1))


def validate_suite(seed: int = 0, reps: int = 100) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    checks: list[tuple[str, Callable[[], float], float, int]] = [
        ("general_vs_simplified", lambda: check_general_vs_simplified(rng, reps), 1e-10, reps),
        ("takagi_reconstruction", lambda: check_takagi(rng, reps), 1e-10, reps),
        ("siso_reciprocal_equivalence", lambda: check_siso_reciprocal(rng, reps), 1e-9, reps),
        ("qcqp_kkt_slackness", lambda: check_qcqp_kkt(rng, reps), 1e-6, reps),
        ("wmmse_rate_identity", lambda: check_rate_identity(rng, reps), 1e-8, reps),
        ("wmmse_monotone", lambda: check_wmmse_monotone(rng, 6, seed), 1e-6, 6),
        ("crossover_reproduction", check_crossover, 1e-2, 1),
    ]
    out = [CheckResult(name, fn(), tol, False, n) for name, fn, tol, n in checks]
    out = [c._replace(passed=bool(c.residual <= c.tolerance)) for c in out]
    flagged = check_theta_negative_control(rng)
    out.append(CheckResult("theta_symmetry_negative_control", 1.0 - flagged, 0.0, flagged == 1.0, 1))
    return out


def report_rows(results: list[CheckResult], seed: int) -> list[ResultRow]:
    rows = []
    for c in results:
        status = "passed" if c.passed else "failed"
        rows.append(ResultRow("validate", "suite", 0.0, ANALYTIC_TRIAL, f"{c.name}:{status}", float(c.residual), seed))
    return rows



def format_report(results: list[CheckResult]) -> str:
    lines = []
    for c in results:
        lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<34} residual={c.residual:.3e}  "
                     f"tol={c.tolerance:.1e}  n={c.instances}")
    return "\n".join(lines)
