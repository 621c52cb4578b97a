"""Grand and canonical partition functions, saddle-point asymptotics and
the exponential (cosh-tilted) tail bound.

Cell factor:  xi_i(beta, nu) = (1 - exp(nu - beta x_i)) ** -q_i
Grand sum:    zeta over a cell range is the product of the xi_i.
Everything is returned in log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .befit import BoseFit, _solve_nu
from .ensemble import CountTable
from .errors import ValidationError
from .spectrum import ValueSpectrum


@dataclass(frozen=True)
class GrandParams:
    beta: float
    nu: float


@dataclass(frozen=True)
class TailBoundParams:
    c: float
    delta: float
    l: int

    def __post_init__(self):
        if not self.c > 0:
            raise ValidationError(f"tilt c must be positive, got {self.c}")
        if not self.delta > 0:
            raise ValidationError(f"Delta must be positive, got {self.delta}")
        if self.l < 1:
            raise ValidationError(f"split index must be >= 1, got {self.l}")


def _exponents(spectrum, params, lo=0, hi=None):
    a = params.nu - params.beta * spectrum.x[lo:hi]
    if np.any(a >= 0):
        raise ValidationError(
            f"inadmissible parameters: nu = {params.nu} must be below beta*x_i for every cell"
        )
    return a


def xi(spectrum: ValueSpectrum, i: int, params: GrandParams) -> float:
    """Grand factor of cell ``i`` (0-based)."""
    a = _exponents(spectrum, params, i, i + 1)[0]
    return float(math.exp(-spectrum.multiplicities[i] * math.log1p(-math.exp(a))))


def log_zeta(spectrum: ValueSpectrum, params: GrandParams, lo: int = 0, hi: int | None = None) -> float:
    """ln of the product of xi over cells lo..hi-1 (0-based, half-open)."""
    a = _exponents(spectrum, params, lo, hi)
    if a.size == 0:
        return 0.0
    q = spectrum.q[lo:hi]
    return math.fsum(-q * np.log1p(-np.exp(a)))


def log_zeta_derivative(spectrum: ValueSpectrum, params: GrandParams, lo=0, hi=None) -> float:
    """d/dnu ln zeta over the range, i.e. the expected occupation of the range."""
    a = _exponents(spectrum, params, lo, hi)
    return math.fsum(spectrum.q[lo:hi] / np.expm1(-a))


def zeta_curvature(spectrum: ValueSpectrum, params: GrandParams, lo=0, hi=None) -> tuple[float, float]:
    """Return (d^2/dnu^2 ln zeta over the range, Q*d).

    ``d = e^a1 / (1 - e^a1)^2`` with ``a1 = nu - beta*x_1`` for the lowest
    cell of the whole spectrum, so ``Q*d`` dominates every range.
    """
    a = _exponents(spectrum, params, lo, hi)
    curv = math.fsum(spectrum.q[lo:hi] * np.exp(a) / np.expm1(a) ** 2)
    a1 = params.nu - params.beta * spectrum.x[0]
    d = math.exp(a1) / math.expm1(a1) ** 2
    return curv, spectrum.Q * d


def _log_zeta_shifted(spectrum, beta, nu, alpha):
    alpha = np.asarray(alpha, dtype=float)
    z = np.exp(nu + 1j * alpha[..., None] - beta * spectrum.x)
    return -np.sum(spectrum.q * np.log1p(-z), axis=-1)


def phase(spectrum: ValueSpectrum, beta: float, nu: float, alpha, n: float):
    """Exponent -i N alpha + ln zeta(beta, nu + i alpha) of the Fourier integrand for Z.

    Vectorised in ``alpha``; stationary at 0 when nu solves the number condition.
    """
    alpha = np.asarray(alpha, dtype=float)
    return -1j * n * alpha + _log_zeta_shifted(spectrum, beta, nu, alpha)


def log_abs_zeta(spectrum: ValueSpectrum, beta: float, nu: float, alpha) -> np.ndarray:
    """ln |zeta(beta, nu + i alpha)|."""
    return np.real(_log_zeta_shifted(spectrum, beta, nu, alpha))


def _logsumexp(terms):
    terms = [t for t in terms if t != -math.inf]
    if not terms:
        return -math.inf
    top = max(terms)
    return top + math.log(math.fsum(math.exp(t - top) for t in terms))


def partition_exact(table: CountTable, beta: float, n: int | None = None) -> float:
    """ln Z(beta, N) summed over every energy at fixed particle count."""
    sp = table.spectrum
    n = table.budget.n if n is None else n
    if not 0 <= n <= table.n_max:
        raise ValidationError(f"N = {n} outside table range 0..{table.n_max}")
    need = n * sp.levels[-1]
    if table.e_max < need:
        raise ValidationError(
            f"table truncated: energy axis ends at {table.e_max}, Z(beta, {n}) needs {need}"
        )
    u = float(sp.quantum)
    row = table.full[n]
    return _logsumexp(
        math.log(c) - beta * u * e for e, c in enumerate(row[: need + 1]) if c
    )


def partition_saddle(spectrum: ValueSpectrum, beta: float, n: int) -> float:
    """Gaussian saddle-point estimate of ln Z(beta, N)."""
    if not beta > 0:
        raise ValidationError("saddle-point estimate needs beta > 0")
    if n < 1:
        raise ValidationError("N must be >= 1")
    nu = _solve_nu(spectrum.x, spectrum.q, float(beta), float(n))
    params = GrandParams(float(beta), nu)
    curv, _ = zeta_curvature(spectrum, params)
    return -nu * n + log_zeta(spectrum, params) - 0.5 * math.log(2 * math.pi * curv)


def tilt_for_threshold(delta: float, n: int, alpha: float) -> float:
    """Tilt c = Delta / N^(1 + alpha)."""
    return delta / n ** (1.0 + alpha)


def chernoff_tail_bound(
    spectrum: ValueSpectrum,
    fit: BoseFit,
    tparams: TailBoundParams,
    n: float,
    energy: float,
    rigorous: bool = True,
) -> float:
    """ln of an upper bound on the weight of budget variants with S_l >= Delta.

    With ``rigorous=False`` this is the closed form
    ``ln zeta_s - c Delta + (c^2/2) beta^2 Q d + beta E - nu N`` evaluated at
    the fit point with ``d`` taken at nu'.

    With ``rigorous=True`` (default) the curvature is taken at ``nu' + c``,
    where the second-order remainder attains its maximum, the ``beta^2``
    factor is dropped, and ``ln 2`` accounts for the two exponential tails
    of the cosh.  This requires ``nu' + c < beta' x_1``.
    """
    if not 1 <= tparams.l < spectrum.s:
        raise ValidationError(f"split index {tparams.l} outside 1..{spectrum.s - 1}")
    beta, nu = fit.beta, fit.nu
    params = GrandParams(beta, nu)
    c, delta = tparams.c, tparams.delta
    base = log_zeta(spectrum, params) + beta * energy - nu * n - c * delta
    if not rigorous:
        _, qd = zeta_curvature(spectrum, params)
        return base + 0.5 * c * c * beta * beta * qd
    if nu + c >= beta * spectrum.x[0]:
        raise ValidationError(
            f"tilt c = {c} too large: nu' + c must stay below beta' x_1 = {beta * spectrum.x[0]}"
        )
    _, qd = zeta_curvature(spectrum, GrandParams(beta, nu + c))
    return base + math.log(2.0) + 0.5 * c * c * qd


def exact_tilted_bound(
    spectrum: ValueSpectrum, fit: BoseFit, tparams: TailBoundParams, n: float, energy: float
) -> float:
    """The same bound before the Taylor step: both cosh branches summed exactly."""
    beta, nu, c, l = fit.beta, fit.nu, tparams.c, tparams.l
    if nu + c >= beta * spectrum.x[0]:
        raise ValidationError("tilt too large for the head factor to converge")
    phi_l = math.fsum(fit.phi[:l])
    tail = log_zeta(spectrum, GrandParams(beta, nu), l)
    plus = log_zeta(spectrum, GrandParams(beta, nu + c), 0, l) - c * phi_l
    minus = log_zeta(spectrum, GrandParams(beta, nu - c), 0, l) + c * phi_l
    return beta * energy - nu * n - c * tparams.delta + tail + _logsumexp([plus, minus])


def cosh_product_dominates(u: float, v: float, delta: float) -> bool:
    """2 cosh(u) cosh(v) > e^delta whenever |u|, |v| >= delta > 0."""
    return 2.0 * math.cosh(u) * math.cosh(v) > math.exp(delta)
