"""Value spectra, ensemble budgets and spectrum file ingestion.

All energies live on an integer grid ``x = k * quantum`` so that counting
downstream can be done with exact integer arithmetic.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import RegimeWarning, ValidationError

GRID_TOLERANCE = Fraction(1, 10**9)


def as_fraction(value) -> Fraction:
    """Convert ints, floats, decimal strings and ``p/q`` strings to Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValidationError(f"not a number: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not np.isfinite(value):
            raise ValidationError(f"not a finite number: {value!r}")
        # repr gives the shortest round-tripping decimal, so 0.1 -> 1/10
        return Fraction(repr(value))
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError(f"cannot parse {value!r} as a rational number") from exc


def snap_to_grid(value: Fraction, quantum: Fraction) -> int:
    """Return the integer k with value == k * quantum (within 1e-9 quantum)."""
    ratio = value / quantum
    k = round(ratio)
    if abs(ratio - k) > GRID_TOLERANCE:
        raise ValidationError(f"value {value} is not on the energy grid of quantum {quantum}")
    return int(k)


@dataclass(frozen=True)
class ValueSpectrum:
    """Distinct energies with multiplicities on an integer grid.

    ``values[i]`` is the energy of cell ``i`` and ``multiplicities[i]`` the
    number of coincident slots merged into it.  ``bound`` is an optional
    declared upper bound on the energies; exceeding it only warns.
    """

    values: tuple[Fraction, ...]
    multiplicities: tuple[int, ...]
    quantum: Fraction = Fraction(1)
    bound: Fraction | None = None

    def __post_init__(self):
        values = tuple(as_fraction(v) for v in self.values)
        mults = tuple(self.multiplicities)
        quantum = as_fraction(self.quantum)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "multiplicities", mults)
        object.__setattr__(self, "quantum", quantum)
        if quantum <= 0:
            raise ValidationError("quantum must be positive")
        if not values:
            raise ValidationError("spectrum needs at least one value")
        if len(values) != len(mults):
            raise ValidationError("values and multiplicities differ in length")
        for q in mults:
            if not isinstance(q, (int, np.integer)) or isinstance(q, bool) or q < 1:
                raise ValidationError(f"multiplicity must be a positive integer, got {q!r}")
        object.__setattr__(self, "multiplicities", tuple(int(q) for q in mults))
        if values[0] < 0:
            raise ValidationError("energies must be nonnegative")
        if any(a >= b for a, b in zip(values, values[1:])):
            raise ValidationError("values must be strictly increasing")
        levels = tuple(snap_to_grid(v, quantum) for v in values)
        object.__setattr__(self, "values", tuple(k * quantum for k in levels))
        object.__setattr__(self, "_levels", levels)
        if self.bound is not None:
            bound = as_fraction(self.bound)
            object.__setattr__(self, "bound", bound)
            if values[-1] > bound:
                warnings.warn(
                    f"largest energy {values[-1]} exceeds declared bound {bound}",
                    RegimeWarning,
                    stacklevel=2,
                )

    @property
    def s(self) -> int:
        return len(self.values)

    @property
    def Q(self) -> int:
        return sum(self.multiplicities)

    @property
    def levels(self) -> tuple[int, ...]:
        """Energies as integer multiples of the quantum."""
        return self._levels

    @property
    def xbar(self) -> Fraction:
        return sum(q * x for q, x in zip(self.multiplicities, self.values)) / self.Q

    @property
    def x(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    @property
    def q(self) -> np.ndarray:
        return np.array(self.multiplicities, dtype=float)

    def subspectrum(self, start: int, stop: int) -> "ValueSpectrum":
        return ValueSpectrum(self.values[start:stop], self.multiplicities[start:stop], self.quantum)

    def to_json(self) -> dict:
        return {
            "quantum": str(self.quantum),
            "values": [str(v) for v in self.values],
            "multiplicities": list(self.multiplicities),
        }


def spectrum_from_rows(rows: Iterable[tuple], quantum=1, bound=None) -> ValueSpectrum:
    """Merge ``(value, multiplicity)`` rows into a sorted spectrum."""
    quantum = as_fraction(quantum)
    if quantum <= 0:
        raise ValidationError("quantum must be positive")
    merged: dict[int, int] = {}
    for value, mult in rows:
        level = snap_to_grid(as_fraction(value), quantum)
        if isinstance(mult, str):
            try:
                mult = int(mult.strip())
            except ValueError as exc:
                raise ValidationError(f"multiplicity {mult!r} is not an integer") from exc
        if int(mult) != mult or mult < 1:
            raise ValidationError(f"multiplicity must be a positive integer, got {mult!r}")
        merged[level] = merged.get(level, 0) + int(mult)
    if not merged:
        raise ValidationError("spectrum has no rows")
    levels = sorted(merged)
    return ValueSpectrum(
        tuple(k * quantum for k in levels), tuple(merged[k] for k in levels), quantum, bound
    )


def load_spectrum(path, quantum=None, bound=None) -> ValueSpectrum:
    """Read a spectrum from CSV (``value,multiplicity``) or from its JSON dump.

    For JSON input the stored quantum is used unless ``quantum`` is given.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
            q = data["quantum"] if quantum is None else quantum
            rows = list(zip(data["values"], data["multiplicities"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: malformed spectrum JSON ({exc})") from exc
        return spectrum_from_rows(rows, q, bound)

    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or [h.strip().lower() for h in header] != ["value", "multiplicity"]:
        raise ValidationError(f"{path}: expected header 'value,multiplicity', got {header}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 2:
            raise ValidationError(f"{path}: row {lineno}: expected 2 columns, got {len(row)}")
        value, mult = row
        try:
            value = as_fraction(value)
        except ValidationError as exc:
            raise ValidationError(f"{path}: row {lineno}, column 'value': {exc}") from exc
        try:
            mult = int(mult.strip())
        except ValueError as exc:
            raise ValidationError(
                f"{path}: row {lineno}, column 'multiplicity': {mult!r} is not an integer"
            ) from exc
        rows.append((value, mult))
    try:
        return spectrum_from_rows(rows, 1 if quantum is None else quantum, bound)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def save_spectrum(spectrum: ValueSpectrum, path) -> None:
    Path(path).write_text(json.dumps(spectrum.to_json(), sort_keys=True) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class EnsembleBudget:
    """Particle count ``n`` and energy budget ``energy`` for one ensemble."""

    n: int
    energy: Fraction
    xbar: Fraction
    quantum: Fraction = Fraction(1)

    @property
    def mean(self) -> Fraction:
        return self.energy / self.n if self.n else Fraction(0)

    @property
    def energy_level(self) -> int:
        return snap_to_grid(self.energy, self.quantum)

    # short aliases
    @property
    def N(self) -> int:
        return self.n

    @property
    def E(self) -> Fraction:
        return self.energy

    @property
    def M(self) -> Fraction:
        return self.mean


def budget_from_energy(spectrum: ValueSpectrum, n: int, energy) -> EnsembleBudget:
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValidationError(f"particle count must be a nonnegative integer, got {n!r}")
    n = int(n)
    energy = as_fraction(energy)
    if energy < 0:
        raise ValidationError("energy budget must be nonnegative")
    try:
        snap_to_grid(energy, spectrum.quantum)
    except ValidationError as exc:
        raise ValidationError(f"energy budget off grid: {exc}") from exc
    xbar = spectrum.xbar
    if energy > n * xbar:
        raise ValidationError(
            f"inadmissible budget: mean {energy / n if n else energy} exceeds xbar = {xbar}"
        )
    return EnsembleBudget(n, energy, xbar, spectrum.quantum)


def make_budget(spectrum: ValueSpectrum, n: int, mean) -> EnsembleBudget:
    """Budget with energy ``E = mean * n``; rejects ``mean > xbar``."""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"particle count must be a positive integer, got {n!r}")
    mean = as_fraction(mean)
    if mean > spectrum.xbar:
        raise ValidationError(f"inadmissible mean {mean} > xbar = {spectrum.xbar}")
    return budget_from_energy(spectrum, int(n), mean * int(n))


def check_regime(
    spectrum: ValueSpectrum, n: int, a1: float = 0.0, a2: float = float("inf")
) -> list[str]:
    """Warn when ``a1*n <= s <= a2*n`` or the declared energy bound fails."""
    problems = []
    if not a1 * n <= spectrum.s <= a2 * n:
        problems.append(f"s = {spectrum.s} outside [{a1 * n:g}, {a2 * n:g}] for N = {n}")
    if spectrum.bound is not None and spectrum.values[-1] > spectrum.bound:
        problems.append(f"largest energy {spectrum.values[-1]} exceeds bound {spectrum.bound}")
    for msg in problems:
        warnings.warn(msg, RegimeWarning, stacklevel=2)
    return problems


def replicate_degeneracy(spectrum: ValueSpectrum, factor: int) -> ValueSpectrum:
    """Scale every multiplicity by ``factor`` (grows Q proportionally to N)."""
    if factor < 1:
        raise ValidationError("replication factor must be >= 1")
    return ValueSpectrum(
        spectrum.values, tuple(q * factor for q in spectrum.multiplicities), spectrum.quantum,
        spectrum.bound,
    )


def as_spectrum(values: Sequence, multiplicities: Sequence[int] | None = None, quantum=1):
    """Convenience constructor used by tests and the CLI."""
    if multiplicities is None:
        multiplicities = [1] * len(values)
    return spectrum_from_rows(zip(values, multiplicities), quantum)
