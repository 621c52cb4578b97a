"""Exact and asymptotic tools for the equiprobable bosonic occupancy ensemble."""

from .errors import EquicompError, FitError, GuardExceeded, RegimeWarning, ValidationError
from .spectrum import EnsembleBudget, ValueSpectrum, as_spectrum, load_spectrum, make_budget
from .befit import BoseFit, cumulative_curve, fit_bose, fit_bose_targets, solve_nu
from .ensemble import (
    CountTable,
    Occupancy,
    build_count_table,
    count_variants,
    deviation,
    exact_tail_count,
    sample_many,
    sample_uniform,
)
from .partition import (
    GrandParams,
    TailBoundParams,
    chernoff_tail_bound,
    log_zeta,
    partition_exact,
    partition_saddle,
    xi,
    zeta_curvature,
)

__version__ = "0.1.0"
