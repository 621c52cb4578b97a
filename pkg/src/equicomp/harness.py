"""Experiment drivers and deterministic report emission."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .befit import BoseFit, cumulative_curve, fit_bose
from .ensemble import (
    MAX_CELLS,
    build_count_table,
    count_variants,
    deviation,
    exact_tail_count,
    full_energy_cap,
    sample_many,
)
from .errors import ValidationError
from .partition import TailBoundParams, _logsumexp, chernoff_tail_bound, partition_exact, partition_saddle
from .spectrum import ValueSpectrum, as_fraction, budget_from_energy, make_budget, replicate_degeneracy

log = logging.getLogger(__name__)

MODES = ("exact", "mc", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    epsilon: float = 0.05
    n_ladder: tuple[int, ...] = (20, 40, 80)
    num_samples: int = 1000
    seed: int = 0
    mode: str = "exact"
    l: int | None = None
    l_quantile: float = 0.5
    eps_q: float = 0.0
    delta_override: float | None = None
    beta_override: float | None = None
    replicate: bool = False
    max_cells: int = MAX_CELLS

    def __post_init__(self):
        object.__setattr__(self, "n_ladder", tuple(int(n) for n in self.n_ladder))
        if not 0 < self.epsilon <= 0.25:
            raise ValidationError(f"epsilon must lie in (0, 1/4], got {self.epsilon}")
        if not self.n_ladder or any(a >= b for a, b in zip(self.n_ladder, self.n_ladder[1:])):
            raise ValidationError("N ladder must be nonempty and strictly increasing")
        if self.n_ladder[0] < 1:
            raise ValidationError("N ladder entries must be positive")
        if self.num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.delta_override is not None and self.delta_override < 0:
            raise ValidationError("delta override must be nonnegative")


@dataclass
class Report:
    kind: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    timings: list[float] = field(default_factory=list)

    def column(self, name):
        return [row[name] for row in self.rows]


def select_split(spectrum: ValueSpectrum, quantile: float = 0.5, eps_q: float = 0.0) -> int:
    """Smallest l with sum_{i<=l} q_i >= max(quantile, eps_q) * Q, kept below s."""
    if spectrum.s < 2:
        raise ValidationError("a split index needs at least two cells")
    target = max(quantile, eps_q) * spectrum.Q
    acc = 0
    for l, q in enumerate(spectrum.multiplicities, start=1):
        acc += q
        if acc >= target:
            return min(l, spectrum.s - 1)
    return spectrum.s - 1


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EQUICOMP_THREADS", "1")))
    except ValueError:
        return 1


def _map_rungs(fn, items):
    items = list(items)
    workers = min(_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _rung_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([seed, n]).generate_state(1, np.uint64)[0])


def _rung_spectrum(spectrum, config, n):
    if not config.replicate:
        return spectrum
    return replicate_degeneracy(spectrum, max(1, round(n / config.n_ladder[0])))


def best_log_bound(spectrum, fit: BoseFit, l: int, delta: float, n, energy) -> tuple[float, float]:
    """Minimise the tail bound over the admissible tilt range; returns (c, ln bound)."""
    gap = fit.beta * spectrum.x[0] - fit.nu
    res = minimize_scalar(
        lambda c: chernoff_tail_bound(spectrum, fit, TailBoundParams(c, delta, l), n, energy),
        bounds=(gap * 1e-6, gap * (1 - 1e-6)),
        method="bounded",
        options={"xatol": gap * 1e-9},
    )
    return float(res.x), float(res.fun)


def _frac(num: int, den: int) -> float:
    return float(Fraction(num, den)) if den else math.nan


CONCENTRATION_COLUMNS = [
    "N", "E", "l", "delta", "curve", "beta", "nu", "nu_nonnegative", "residual_N",
    "residual_E", "total_count", "tail_count", "exact_fraction", "mc_fraction", "mc_samples",
    "mc_stderr", "tilt_c", "log_bound_ratio", "bound_fraction",
]


def _concentration_rung(n, spectrum, mean, config):
    t0 = time.perf_counter()
    sp = _rung_spectrum(spectrum, config, n)
    budget = make_budget(sp, n, mean)
    fit = fit_bose(sp, budget)
    l = config.l if config.l is not None else select_split(sp, config.l_quantile, config.eps_q)
    if not 1 <= l <= sp.s:
        raise ValidationError(f"split index {l} outside 1..{sp.s}")
    if config.delta_override is not None:
        delta = float(config.delta_override)
    else:
        delta = n ** (0.75 + config.epsilon)
    energy = float(budget.energy)
    table = build_count_table(sp, budget, max_cells=config.max_cells)
    total = count_variants(table)
    row = {
        "N": n, "E": energy, "l": l, "delta": delta, "curve": cumulative_curve(fit, l),
        "beta": fit.beta, "nu": fit.nu, "nu_nonnegative": fit.nu_nonnegative,
        "residual_N": fit.residual_n, "residual_E": fit.residual_energy, "total_count": total,
        "tail_count": None, "exact_fraction": None, "mc_fraction": None, "mc_samples": None,
        "mc_stderr": None, "tilt_c": None, "log_bound_ratio": None, "bound_fraction": None,
    }
    if config.mode in ("exact", "both"):
        tail = exact_tail_count(table, fit, l, delta)
        row["tail_count"] = tail
        row["exact_fraction"] = _frac(tail, total)
    if config.mode in ("mc", "both"):
        draws = sample_many(table, config.num_samples, _rung_seed(config.seed, n))
        hits = sum(deviation(occ, fit, l) >= delta for occ in draws)
        p = hits / config.num_samples
        row["mc_fraction"] = p
        row["mc_samples"] = config.num_samples
        row["mc_stderr"] = math.sqrt(p * (1 - p) / config.num_samples)
    if delta > 0 and l < sp.s:
        c, lnb = best_log_bound(sp, fit, l, delta, n, energy)
        ratio = lnb - math.log(total)
        row["tilt_c"] = c
        row["log_bound_ratio"] = ratio
        row["bound_fraction"] = math.exp(min(ratio, 700.0))
    return row, time.perf_counter() - t0


def _decay_exponent(ns, fractions):
    pts = [(math.log(n), math.log(f)) for n, f in zip(ns, fractions) if f is not None and f > 0]
    if len(pts) < 2:
        return None
    xs, ys = zip(*pts)
    return float(-np.polyfit(xs, ys, 1)[0])


def run_concentration(spectrum: ValueSpectrum, mean, config: ExperimentConfig) -> Report:
    """Tail fraction of |B_l - curve_l| >= N^(3/4 + eps) along the N ladder."""
    mean = as_fraction(mean)
    results = _map_rungs(
        partial(_concentration_rung, spectrum=spectrum, mean=mean, config=config), config.n_ladder
    )
    rows = [r for r, _ in results]
    key = "exact_fraction" if config.mode != "mc" else "mc_fraction"
    fractions = [r[key] for r in rows]
    meta = {
        "mean": str(mean), "epsilon": config.epsilon, "mode": config.mode, "seed": config.seed,
        "replicate": config.replicate,
        "strictly_decreasing": all(a > b for a, b in zip(fractions, fractions[1:])),
        "decay_exponent": _decay_exponent(config.n_ladder, fractions),
    }
    return Report("concentration", CONCENTRATION_COLUMNS, rows, meta, [t for _, t in results])


LEMMA2_COLUMNS = ["N", "E", "beta", "cutoff", "total_count", "log_R", "R", "ratio_2N"]


def _lemma2_rung(n, spectrum, mean, config):
    t0 = time.perf_counter()
    sp = _rung_spectrum(spectrum, config, n)
    budget = make_budget(sp, n, mean)
    beta = config.beta_override if config.beta_override is not None else fit_bose(sp, budget).beta
    table = build_count_table(sp, budget, max_cells=config.max_cells)
    total = count_variants(table)
    energy = float(budget.energy)
    cutoff = energy - n ** (0.5 + config.epsilon)
    u = float(sp.quantum)
    log_r = -math.inf
    if cutoff >= 0 and total:
        cut = min(int(math.floor(cutoff / u + 1e-12)), budget.energy_level)
        row = table.full[n]
        log_r = _logsumexp(
            math.log(c) - beta * u * e for e, c in enumerate(row[: cut + 1]) if c
        ) - math.log(total)
    return {
        "N": n, "E": energy, "beta": float(beta), "cutoff": cutoff, "total_count": total,
        "log_R": log_r, "R": math.exp(log_r), "ratio_2N": None,
    }, time.perf_counter() - t0


def run_lemma2(spectrum: ValueSpectrum, mean, config: ExperimentConfig) -> Report:
    """Boltzmann-weighted fraction of variants with energy <= E - N^(1/2 + eps)."""
    mean = as_fraction(mean)
    results = _map_rungs(
        partial(_lemma2_rung, spectrum=spectrum, mean=mean, config=config), config.n_ladder
    )
    rows = [r for r, _ in results]
    by_n = {r["N"]: r for r in rows}
    for r in rows:
        twice = by_n.get(2 * r["N"])
        if twice is not None and r["R"] > 0:
            r["ratio_2N"] = twice["R"] / r["R"]
    rs = [r["R"] for r in rows]
    meta = {
        "mean": str(mean), "epsilon": config.epsilon, "beta_override": config.beta_override,
        "strictly_decreasing": all(a > b for a, b in zip(rs, rs[1:])),
    }
    return Report("lemma2", LEMMA2_COLUMNS, rows, meta, [t for _, t in results])


SADDLE_COLUMNS = ["N", "lnZ_exact", "lnZ_saddle", "rel_err", "non_decreasing"]


def run_saddle_scan(spectrum: ValueSpectrum, beta: float, n_ladder, max_cells: int = MAX_CELLS) -> Report:
    """Exact ln Z against the saddle-point estimate along the ladder."""
    ladder = sorted(int(n) for n in n_ladder)
    t0 = time.perf_counter()
    n_top = ladder[-1]
    budget = budget_from_energy(spectrum, n_top, 0)
    table = build_count_table(
        spectrum, budget, energy_cap=full_energy_cap(spectrum, n_top), max_cells=max_cells
    )
    rows, prev = [], None
    for n in ladder:
        exact = partition_exact(table, beta, n)
        saddle = partition_saddle(spectrum, beta, n)
        err = abs(saddle - exact) / abs(exact) if exact else abs(saddle - exact)
        rows.append({
            "N": n, "lnZ_exact": exact, "lnZ_saddle": saddle, "rel_err": err,
            "non_decreasing": prev is not None and err >= prev,
        })
        prev = err
    errs = [r["rel_err"] for r in rows]
    meta = {
        "beta": beta,
        "degenerate": spectrum.s == 1,
        "strictly_decreasing": all(a > b for a, b in zip(errs, errs[1:])),
    }
    return Report("saddle-scan", SADDLE_COLUMNS, rows, meta, [time.perf_counter() - t0])


def _normalize(value):
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return float(f"{value:.12g}")
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _normalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_normalize(v) for v in value]
    return str(value)


def _csv_cell(value) -> str:
    value = _normalize(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def report_to_json(report: Report) -> str:
    payload = {
        "kind": report.kind,
        "columns": list(report.columns),
        "meta": _normalize(report.meta),
        "rows": [_normalize(row) for row in report.rows],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def report_to_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(report.columns)
    for row in report.rows:
        writer.writerow([_csv_cell(row.get(col)) for col in report.columns])
    return buf.getvalue()


def emit_report(report: Report, path, fmt: str = "json") -> None:
    """Write ``report`` as sorted-key JSON or CSV with 12 significant digits."""
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    Path(path).write_text(text, encoding="utf-8")
