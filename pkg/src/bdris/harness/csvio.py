"""Result rows, deterministic CSV persistence and per-point summaries."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, NamedTuple

HEADER = ("experiment", "arch", "sweep", "trial", "metric", "value", "seed", "ms")
SUMMARY_HEADER = ("experiment", "arch", "sweep", "metric", "mean", "std", "count")

# trial index used for analytic (non-random) rows
ANALYTIC_TRIAL = -1


class ResultRow(NamedTuple):
    experiment: str
    arch: str
    sweep: float
    trial: int
    metric: str
    value: float
    seed: int
    ms: float = 0.0

    def sort_key(self):
        return (self.arch, self.sweep, self.trial, self.metric)


class SummaryRow(NamedTuple):
    experiment: str
    arch: str
    sweep: float
    metric: str
    mean: float
    std: float
    count: int


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _write(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(rows: Iterable[ResultRow], path) -> Path:
    """Write rows sorted by ``(arch, sweep, trial, metric)``; floats use shortest round-trip repr."""
    return _write(path, HEADER, sorted(rows, key=ResultRow.sort_key))


def read_csv(path) -> list[ResultRow]:
    path = Path(path)
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            return [ResultRow(e, a, float(s), int(t), m, float(v), int(sd), float(ms))
                    for e, a, s, t, m, v, sd, ms in reader]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def summarize(rows: Iterable[ResultRow]) -> list[SummaryRow]:
    """Mean and sample std per ``(arch, sweep, metric)`` over Monte-Carlo trials.

    Analytic rows (``trial == -1``) pass through with ``std = 0``.
    """
    groups: dict[tuple, list[float]] = defaultdict(list)
    exp = {}
    for r in sorted(rows, key=ResultRow.sort_key):
        key = (r.arch, r.sweep, r.metric)
        groups[key].append(r.value)
        exp[key] = r.experiment
    out = []
    for key, vals in sorted(groups.items()):
        n = len(vals)
        mean = math.fsum(vals) / n
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        out.append(SummaryRow(exp[key], *key, mean, std, n))
    return out


def emit_summary(rows: Iterable[SummaryRow], path) -> Path:
    return _write(path, SUMMARY_HEADER, rows)


def format_summary(summary: Iterable[SummaryRow]) -> str:
    lines = [f"{'arch':<24}{'sweep':>10}  {'metric':<16}{'mean':>14}{'std':>12}{'n':>6}"]
    for s in summary:
        lines.append(f"{s.arch:<24}{s.sweep:>10g}  {s.metric:<16}{s.mean:>14.6g}{s.std:>12.4g}{s.count:>6d}")
    return "\n".join(lines)
