"""Exact counting, uniform sampling and tail counts for the occupancy ensemble.

An aggregate occupancy {N_i} stands for every slot-level assignment that
puts N_i particles into the q_i coincident slots of cell i, so it carries
weight prod_i C(N_i + q_i - 1, q_i - 1).  Counts are Python ints held in
numpy object arrays; nothing on the counting path touches floating point.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .befit import BoseFit, cumulative_curve
from .errors import GuardExceeded, ValidationError
from .spectrum import EnsembleBudget, ValueSpectrum

MAX_PARTICLES = 10_000
MAX_CELLS = 10**6


@dataclass(frozen=True)
class Occupancy:
    counts: tuple[int, ...]
    energy_level: int
    quantum: object = 1

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def cumulative(self) -> tuple[int, ...]:
        out, acc = [], 0
        for c in self.counts:
            acc += c
            out.append(acc)
        return tuple(out)

    @property
    def energy(self):
        return self.energy_level * self.quantum


def _check_guard(n_max, e_max, max_particles, max_cells):
    if n_max > max_particles:
        raise GuardExceeded(f"N = {n_max} exceeds the particle guard {max_particles}")
    if (n_max + 1) * (e_max + 1) > max_cells:
        raise GuardExceeded(
            f"table of {(n_max + 1) * (e_max + 1)} (particle, energy) cells exceeds "
            f"the guard {max_cells}"
        )


def _empty_layer(n_max, e_max):
    layer = np.zeros((n_max + 1, e_max + 1), dtype=object)
    layer[0, 0] = 1
    return layer


def _add_cell(prev, level, q):
    """Fold one cell (energy ``level``, multiplicity ``q``) into a layer."""
    n_max, e_max = prev.shape[0] - 1, prev.shape[1] - 1
    out = np.zeros_like(prev)
    for m in range(n_max + 1):
        shift = m * level
        if shift > e_max:
            break
        w = comb(m + q - 1, q - 1)
        out[m:, shift:] += w * prev[: n_max + 1 - m, : e_max + 1 - shift]
    return out


def _layers(levels, mults, n_max, e_max):
    layers = [_empty_layer(n_max, e_max)]
    for level, q in zip(levels, mults):
        layers.append(_add_cell(layers[-1], level, q))
    return layers


@dataclass(frozen=True)
class CountTable:
    """Weighted variant counts ``counts[k][n, e]`` for the first k cells.

    ``n`` runs over 0..N and ``e`` over the integer energy grid 0..e_max,
    with ``e_max >= budget.energy_level``.
    """

    spectrum: ValueSpectrum
    budget: EnsembleBudget
    layers: tuple
    e_max: int
    max_cells: int = MAX_CELLS
    _suffix_cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def counts(self):
        return self.layers

    @property
    def n_max(self) -> int:
        return self.layers[0].shape[0] - 1

    @property
    def full(self) -> np.ndarray:
        return self.layers[-1]

    def suffix(self, l: int) -> np.ndarray:
        """Counts for cells l+1..s (0-based cells l..s-1) with the same dims."""
        if l not in self._suffix_cache:
            sp = self.spectrum
            layer = _empty_layer(self.n_max, self.e_max)
            for level, q in zip(sp.levels[l:], sp.multiplicities[l:]):
                layer = _add_cell(layer, level, q)
            self._suffix_cache[l] = layer
        return self._suffix_cache[l]


def build_count_table(
    spectrum: ValueSpectrum,
    budget: EnsembleBudget,
    energy_cap: int | None = None,
    max_particles: int = MAX_PARTICLES,
    max_cells: int = MAX_CELLS,
) -> CountTable:
    """Fill the exact (cells x particles x energy) table by cell-wise convolution.

    ``energy_cap`` (grid units) widens the energy axis beyond the budget,
    which ``partition_exact`` needs to see every energy at fixed N.
    """
    e_budget = budget.energy_level
    e_max = e_budget if energy_cap is None else max(int(energy_cap), e_budget)
    _check_guard(budget.n, e_max, max_particles, max_cells)
    layers = _layers(spectrum.levels, spectrum.multiplicities, budget.n, e_max)
    return CountTable(spectrum, budget, tuple(layers), e_max, max_cells)


def full_energy_cap(spectrum: ValueSpectrum, n: int) -> int:
    return n * spectrum.levels[-1]


def count_variants(table: CountTable, n: int | None = None, energy_level: int | None = None) -> int:
    """Total weight of occupancies with sum N_i = N and energy <= E.

    ``n`` and ``energy_level`` default to the table's budget and may be
    lowered to query smaller budgets from the same table.
    """
    n = table.budget.n if n is None else n
    e = table.budget.energy_level if energy_level is None else energy_level
    if not 0 <= n <= table.n_max or e > table.e_max:
        raise ValidationError(f"query (N={n}, E_grid={e}) outside table dims")
    if e < 0:
        return 0
    return int(sum(table.full[n, : e + 1]))


def _pick(weights, r):
    acc = 0
    for i, w in enumerate(weights):
        acc += w
        if r < acc:
            return i
    raise AssertionError("weights exhausted")  # pragma: no cover


def _walk(table: CountTable, rng: random.Random) -> Occupancy:
    sp, n, e_budget = table.spectrum, table.budget.n, table.budget.energy_level
    top = table.full[n, : e_budget + 1]
    total = int(sum(top))
    if total == 0:
        raise ValidationError("cannot sample from an empty ensemble")
    e = _pick(top, rng.randrange(total))
    counts = [0] * sp.s
    for k in range(sp.s, 0, -1):
        level, q = sp.levels[k - 1], sp.multiplicities[k - 1]
        prev = table.layers[k - 1]
        weights = []
        for m in range(n + 1):
            if m * level > e:
                break
            weights.append(comb(m + q - 1, q - 1) * prev[n - m, e - m * level])
        m = _pick(weights, rng.randrange(int(table.layers[k][n, e])))
        counts[k - 1] = m
        n -= m
        e -= m * level
    e_total = sum(c * lv for c, lv in zip(counts, sp.levels))
    return Occupancy(tuple(counts), e_total, sp.quantum)


def sample_uniform(table: CountTable, seed: int) -> Occupancy:
    """Draw one occupancy with probability proportional to its weight."""
    return _walk(table, random.Random(seed))


def sample_many(table: CountTable, count: int, seed: int) -> list[Occupancy]:
    rng = random.Random(seed)
    return [_walk(table, rng) for _ in range(count)]


def deviation(occupancy: Occupancy, fit: BoseFit, l: int) -> float:
    """|B_l - predicted cumulative occupancy| for the first ``l`` cells."""
    if not 1 <= l <= len(occupancy.counts):
        raise ValidationError(f"split index {l} outside 1..{len(occupancy.counts)}")
    return abs(sum(occupancy.counts[:l]) - cumulative_curve(fit, l))


def _head_tail_weights(table: CountTable, l: int):
    """Weight of variants in the budget, resolved by head particle count b."""
    n, e_budget = table.budget.n, table.budget.energy_level
    head = table.layers[l]
    tail_cum = np.cumsum(table.suffix(l)[:, : e_budget + 1], axis=1)
    out = []
    for b in range(n + 1):
        h = head[b, : e_budget + 1]
        t = tail_cum[n - b, ::-1]
        out.append(int(np.dot(h, t)))
    return out


def exact_tail_count(table: CountTable, fit: BoseFit, l: int, delta: float) -> int:
    """Exact weight of variants in the budget with |B_l - curve_l| >= delta."""
    if not 1 <= l <= table.spectrum.s:
        raise ValidationError(f"split index {l} outside 1..{table.spectrum.s}")
    if delta < 0:
        raise ValidationError("delta must be nonnegative")
    curve = cumulative_curve(fit, l)
    weights = _head_tail_weights(table, l)
    return sum(w for b, w in enumerate(weights) if abs(b - curve) >= delta)


def head_count_distribution(table: CountTable, l: int) -> list[int]:
    """Exact weight of budget variants for every value b of B_l."""
    return _head_tail_weights(table, l)


def log_count(value: int) -> float:
    return math.log(value) if value > 0 else -math.inf
