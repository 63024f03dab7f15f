"""Experiment recipes and the seeded, order-independent Monte-Carlo runner."""
from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from threadpoolctl import threadpool_limits

from ..baselines import PassiveOptions, passive_bdris_mimo
from ..channel import FadingSpec, draw_rician, generate_realization, link_stream, LINK_IDS
from ..mimo import MimoProblem, QcqpError, WmmseOptions, waterfilling_rate, wmmse_optimize
from ..netcore import NetworkError, NoiseModel
from ..siso import (PowerBudget, SisoChannel, asymptotic_snr, crossover_elements, optimal_snr_active,
                    optimal_snr_passive)
from ..units import db_to_linear, dbm_to_watts
from .config import ExperimentConfig, parse_arch_label
from .csvio import ANALYTIC_TRIAL, ResultRow, summarize

log = logging.getLogger(__name__)

FAILURE_FRACTION = 0.10

# error codes written as the value of an ``error`` row
ERR_NUMERICAL = 1.0
ERR_QCQP = 2.0
ERR_MODEL = 3.0
ERR_OTHER = 9.0

def _error_code(exc: BaseException) -> float:
    if isinstance(exc, QcqpError):
        return ERR_QCQP
    if isinstance(exc, (np.linalg.LinAlgError, FloatingPointError)):
        return ERR_NUMERICAL
    if isinstance(exc, (NetworkError, ValueError)):
        return ERR_MODEL
    return ERR_OTHER


@dataclass(frozen=True)
class WorkUnit:
    config: ExperimentConfig
    sweep: float
    trial: int
    timing: bool = False


# ---------------------------------------------------------------------------
# SISO
# ---------------------------------------------------------------------------


def _siso_budget(cfg: ExperimentConfig) -> PowerBudget:
    noise = float(dbm_to_watts(cfg.noise_dbm))
    s = cfg.siso
    return PowerBudget(s.pt, s.pa, s.pt_passive, noise, noise)


def siso_channel(cfg: ExperimentConfig, n_elements: int, trial: int) -> SisoChannel:
    """No direct link; ``h_RI`` and ``h_IT`` i.i.d. with the configured mean gains."""
    z_ri = float(db_to_linear(cfg.siso.zeta_ri_db))
    z_it = float(db_to_linear(cfg.siso.zeta_it_db))
    h_ri = draw_rician(FadingSpec(cfg.kappa, z_ri, (1, n_elements)), link_stream(cfg.master_seed, trial, LINK_IDS["RI"]))
    h_it = draw_rician(FadingSpec(cfg.kappa, z_it, (n_elements, 1)), link_stream(cfg.master_seed, trial, LINK_IDS["IT"]))
    return SisoChannel(0.0, h_it[:, 0], h_ri[0])


def _siso_unit(unit: WorkUnit) -> list[ResultRow]:
    cfg = unit.config
    n = int(unit.sweep)
    pb = _siso_budget(cfg)
    ch = siso_channel(cfg, n, unit.trial)
    rows = []
    for label in cfg.architectures:
        t0 = time.perf_counter()
        try:
            spec = parse_arch_label(label)
            arch = spec.architecture(n)
            value = optimal_snr_active(ch, pb, arch) if spec.mode == "active" else optimal_snr_passive(ch, pb, arch)
            metric = "snr"
        except Exception as exc:  # noqa: BLE001 - recorded as an error row
            value, metric = _error_code(exc), "error"
        ms = (time.perf_counter() - t0) * 1e3 if unit.timing else 0.0
        rows.append(ResultRow(cfg.experiment, label, unit.sweep, unit.trial, metric, float(value), cfg.master_seed, ms))
    return rows


def _siso_analytic(cfg: ExperimentConfig) -> list[ResultRow]:
    pb = _siso_budget(cfg)
    z_ri, z_it = float(db_to_linear(cfg.siso.zeta_ri_db)), float(db_to_linear(cfg.siso.zeta_it_db))
    rows = []
    for label in cfg.architectures:
        spec = parse_arch_label(label)
        for n in cfg.sweep:
            gs = int(n) if spec.topology == "full" else max(spec.group_size, 1)
            try:
                v = asymptotic_snr(spec.siso_kind(), int(n), gs, pb, z_ri, z_it)
            except ValueError:
                continue
            rows.append(ResultRow(cfg.experiment, label, float(n), ANALYTIC_TRIAL, "snr_asymptotic", v, cfg.master_seed))
    if cfg.experiment == "siso-asymptotic" and min(pb.P_T, pb.P_A, pb.P_T_passive) > 0:
        n_bar, n_tilde = crossover_elements(pb, z_ri, z_it)
        rows.append(ResultRow(cfg.experiment, "crossover", 0.0, ANALYTIC_TRIAL, "N_bar", n_bar, cfg.master_seed))
        rows.append(ResultRow(cfg.experiment, "crossover", 0.0, ANALYTIC_TRIAL, "N_tilde", n_tilde, cfg.master_seed))
    return rows


# ---------------------------------------------------------------------------
# MIMO
# ---------------------------------------------------------------------------


def mimo_point(cfg: ExperimentConfig, sweep: float) -> tuple[int, float]:
    """``(N_I, P^tot in W)`` of one sweep point."""
    if cfg.experiment == "mimo-power-sweep":
        return cfg.n_elements, float(dbm_to_watts(sweep))
    return int(sweep), float(dbm_to_watts(cfg.power_dbm))


def mimo_rate(cfg: ExperimentConfig, label: str, channels, p_tot: float) -> tuple[float, int]:
    """Optimized rate (b/s/Hz) and outer iteration count for one architecture."""
    spec = parse_arch_label(label)
    a = cfg.antennas
    noise_w = float(dbm_to_watts(cfg.noise_dbm))
    if spec.mode == "none":
        return waterfilling_rate(channels.H_RT, p_tot, noise_w, a.n_streams), 0
    arch = spec.architecture(channels.dims[1])
    noise = NoiseModel(noise_w, noise_w)
    opts = WmmseOptions(tol=cfg.solver.tol, max_iters=cfg.solver.max_iters)
    if spec.mode == "passive":
        problem = MimoProblem(channels, arch, a.n_streams, p_tot, 0.0, noise)
        state = passive_bdris_mimo(problem, PassiveOptions(wmmse=opts))
    else:
        split = cfg.power_split
        problem = MimoProblem(channels, arch, a.n_streams, split.transmit * p_tot, split.ris * p_tot, noise)
        state = wmmse_optimize(problem, opts)
    return state.rate, state.iterations


def _mimo_unit(unit: WorkUnit) -> list[ResultRow]:
    cfg = unit.config
    n_i, p_tot = mimo_point(cfg, unit.sweep)
    a = cfg.antennas
    channels = generate_realization(cfg.geometry, (a.n_t, n_i, a.n_r), cfg.kappa, cfg.master_seed, unit.trial)
    rows = []
    for label in cfg.architectures:
        t0 = time.perf_counter()
        try:
            rate, iters = mimo_rate(cfg, label, channels, p_tot)
            values = [("rate", rate), ("iterations", float(iters))]
        except Exception as exc:  # noqa: BLE001 - recorded as an error row
            log.warning("%s sweep=%g trial=%d failed: %s", label, unit.sweep, unit.trial, exc)
            values = [("error", _error_code(exc))]
        ms = (time.perf_counter() - t0) * 1e3 if unit.timing else 0.0
        rows.extend(ResultRow(cfg.experiment, label, unit.sweep, unit.trial, m, float(v), cfg.master_seed, ms)
                    for m, v in values)
    return rows


def _run_unit(unit: WorkUnit) -> list[ResultRow]:
    if unit.config.experiment.startswith("siso"):
        return _siso_unit(unit)
    return _mimo_unit(unit)


def _worker_init():
    # one BLAS thread per process; parallelism lives at the trial level
    global _LIMITER
    _LIMITER = threadpool_limits(limits=1)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------


class RunResult(NamedTuple):
    rows: list[ResultRow]
    summary: list
    units: int
    failed_units: int

    @property
    def failed(self) -> bool:
        return self.units > 0 and self.failed_units > FAILURE_FRACTION * self.units


def resolve_workers(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("BDRIS_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, timing: bool = False) -> RunResult:
    """Run every ``(sweep, trial)`` unit and reduce in trial order.

    Output rows depend only on ``cfg`` (including ``master_seed``); the
    worker count changes wall time only.  With ``timing=False`` the ``ms``
    column is zero so repeated runs are byte-identical.
    """
    workers = resolve_workers(workers)
    if cfg.experiment == "validate":
        from .validate import validate_suite, report_rows
        rows = report_rows(validate_suite(seed=cfg.master_seed), cfg.master_seed)
        failed = sum(r.metric.endswith(":failed") for r in rows)
        return RunResult(rows, summarize(rows), len(rows), failed)
    rows: list[ResultRow] = []
    if cfg.experiment.startswith("siso"):
        rows.extend(_siso_analytic(cfg))
    if cfg.experiment == "siso-asymptotic":
        return RunResult(rows, summarize(rows), 0, 0)
    units = [WorkUnit(cfg, float(s), t, timing) for s in cfg.sweep for t in range(cfg.trials)]
    if workers == 1 or len(units) == 1:
        with threadpool_limits(limits=1):
            results = [_run_unit(u) for u in units]
    else:
        chunk = max(1, len(units) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init) as pool:
            results = list(pool.map(_run_unit, units, chunksize=chunk))
    for part in results:
        rows.extend(part)
    failed = sum(1 for r in rows if r.metric == "error")
    n_cases = len(units) * len(cfg.architectures)
    good = [r for r in rows if r.metric != "error"]
    return RunResult(rows, summarize(good), n_cases, failed)
