"""Bose-Einstein fit of (beta', nu') to a particle count and energy budget.

The occupation of cell i is ``phi_i = q_i / (exp(beta*x_i - nu) - 1)``.
Both fit conditions are handled by nested one-dimensional root finding:
for fixed beta the occupation sum is strictly increasing in nu, and with
nu slaved to the number condition the energy is strictly decreasing in beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, ValidationError
from .spectrum import EnsembleBudget, ValueSpectrum

INNER_RTOL = 1e-12
OUTER_RTOL = 1e-10
_MAXIT = 400


def _occupations(x, q, beta, nu):
    with np.errstate(over="ignore"):
        return q / np.expm1(beta * x - nu)


def _occupation_slopes(x, q, beta, nu):
    """d phi_i / d nu = q_i e^a / (e^a - 1)^2 with a = beta x_i - nu."""
    a = beta * x - nu
    with np.errstate(over="ignore"):
        return q / (np.expm1(a) * -np.expm1(-a))


def _safe_root(f, df, lo, hi, f_lo, f_hi, tol, maxit=_MAXIT):
    """Safeguarded Newton inside a sign-changing bracket [lo, hi].

    ``f`` is assumed monotone on the bracket.  Falls back to bisection
    whenever the Newton step leaves the bracket or stalls.
    """
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    increasing = f_hi > f_lo
    x = 0.5 * (lo + hi)
    for _ in range(maxit):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx < 0.0) == increasing:
            lo = x
        else:
            hi = x
        d = df(x)
        step_ok = d != 0.0 and np.isfinite(d)
        if step_ok:
            x_new = x - fx / d
            step_ok = lo < x_new < hi
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= tol * max(1.0, abs(x_new)) or hi - lo <= tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def solve_nu(spectrum: ValueSpectrum, beta: float, n: float) -> float:
    """Return the unique nu < min_i beta*x_i with sum_i phi_i(beta, nu) = n."""
    if not np.isfinite(beta):
        raise ValidationError("beta must be finite")
    if not n > 0:
        raise ValidationError(f"particle count must be positive, got {n}")
    x, q = spectrum.x, spectrum.q
    return _solve_nu(x, q, float(beta), float(n))


def _solve_nu(x, q, beta, n):
    a0 = float(np.min(beta * x))
    shift = beta * x - a0  # >= 0, zero for the lowest cell

    # total occupation as a function of the gap g = a0 - nu > 0 (decreasing)
    def excess(log_g):
        g = math.exp(log_g)
        with np.errstate(over="ignore"):
            return float(np.sum(q / np.expm1(shift + g))) - n

    lo, hi = -1.0, 1.0
    f_lo, f_hi = excess(lo), excess(hi)
    while f_lo < 0.0:
        lo -= 2.0 * (hi - lo)
        f_lo = excess(lo)
    while f_hi > 0.0:
        hi += 2.0 * (hi - lo)
        f_hi = excess(hi)
    # coarse bisection in log(gap), then Newton in nu
    while hi - lo > 1e-2:
        mid = 0.5 * (lo + hi)
        f_mid = excess(mid)
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
    nu_lo, nu_hi = a0 - math.exp(lo), a0 - math.exp(hi)

    def f(nu):
        return float(np.sum(_occupations(x, q, beta, nu))) - n

    def df(nu):
        return float(np.sum(_occupation_slopes(x, q, beta, nu)))

    return _safe_root(f, df, nu_hi, nu_lo, f(nu_hi), f(nu_lo), tol=1e-16)


@dataclass(frozen=True)
class BoseFit:
    """Fitted (beta', nu') and the expected occupation ``phi`` of each cell."""

    beta: float
    nu: float
    phi: tuple[float, ...]
    n: float
    energy: float
    residual_n: float
    residual_energy: float

    @property
    def nu_nonnegative(self) -> bool:
        return self.nu >= 0.0

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "nu": self.nu,
            "phi": list(self.phi),
            "residual_N": self.residual_n,
            "residual_E": self.residual_energy,
            "nu_nonnegative": self.nu_nonnegative,
        }


def _energy_slope(x, q, beta, nu):
    """d E / d beta along the curve nu(beta) fixed by the number condition."""
    w = _occupation_slopes(x, q, beta, nu)
    sw, swx, swx2 = w.sum(), (w * x).sum(), (w * x * x).sum()
    return -(swx2 - swx * swx / sw)


def _make_fit(x, q, beta, nu, n, energy):
    phi = _occupations(x, q, beta, nu)
    res_n = abs(phi.sum() - n) / n
    res_e = abs((phi * x).sum() - energy) / energy if energy else abs((phi * x).sum())
    return BoseFit(float(beta), float(nu), tuple(float(p) for p in phi), float(n),
                   float(energy), float(res_n), float(res_e))


def fit_bose_targets(spectrum: ValueSpectrum, n: float, energy: float) -> BoseFit:
    """Solve both fit conditions for real-valued targets ``n`` and ``energy``.

    Reachable means lie in ``(x_1, xbar]``.  The endpoint ``mean == xbar`` is
    the beta -> 0+ limit, where every cell holds ``n * q_i / Q``; it is
    returned with ``beta = 0``.
    """
    n, energy = float(n), float(energy)
    if not n > 0:
        raise ValidationError("particle count must be positive")
    x, q = spectrum.x, spectrum.q
    xbar = float(spectrum.xbar)
    mean = energy / n
    lo_mean = x[0]
    if abs(mean - xbar) <= 1e-13 * max(1.0, xbar):
        nu = -math.log1p(q.sum() / n)
        return _make_fit(x, q, 0.0, nu, n, energy)
    if not lo_mean < mean < xbar:
        raise FitError(
            f"energy {energy:g} unreachable for N = {n:g}: achievable energies over "
            f"beta in (0, inf) are ({n * lo_mean:g}, {n * xbar:g}]"
        )

    def resid(beta):
        nu = _solve_nu(x, q, beta, n)
        return float((_occupations(x, q, beta, nu) * x).sum()) - energy

    def slope(beta):
        nu = _solve_nu(x, q, beta, n)
        return _energy_slope(x, q, beta, nu)

    # bracket: energy(beta) decreases from n*xbar (beta -> 0) to n*x_1
    scale = 1.0 / (x[-1] - x[0])
    lo, hi = 0.0, scale
    f_lo = n * xbar - energy
    f_hi = resid(hi)
    while f_hi > 0.0:
        lo, f_lo = hi, f_hi
        hi *= 2.0
        if hi > 1e300:
            raise FitError(f"failed to bracket beta for N = {n:g}, E = {energy:g}")
        f_hi = resid(hi)
    beta = _safe_root(resid, slope, lo, hi, f_lo, f_hi, tol=1e-16)
    nu = _solve_nu(x, q, beta, n)
    return _make_fit(x, q, beta, nu, n, energy)


def fit_bose(spectrum: ValueSpectrum, budget: EnsembleBudget) -> BoseFit:
    """Fit (beta', nu') so that sum phi_i = N and sum phi_i x_i = E."""
    if budget.n < 1:
        raise ValidationError("fit requires N >= 1")
    return fit_bose_targets(spectrum, budget.n, float(budget.energy))


def cumulative_curve(fit: BoseFit, l: int) -> float:
    """Predicted cumulative occupancy of the first ``l`` cells."""
    if not 0 <= l <= len(fit.phi):
        raise ValidationError(f"cell index {l} outside 0..{len(fit.phi)}")
    return math.fsum(fit.phi[:l])
