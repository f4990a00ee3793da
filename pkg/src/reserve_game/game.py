"""Exact transferable-utility game tools: Shapley value, core test, axiom checks.

Every routine enumerates all 2**n coalitions, so n is capped at MAX_PLAYERS.
Sums over coalitions use math.fsum (correctly rounded), which makes results
independent of evaluation order and therefore bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import MAX_PLAYERS, CoalitionTable, ValidationError, members_of

TOL = 1e-9


def enumerate_coalitions(n: int) -> range:
    """All coalition masks for n players, ascending from the empty coalition."""
    if not 1 <= n <= MAX_PLAYERS:
        raise ValidationError(f"player count must be in 1..{MAX_PLAYERS}, got {n}")
    return range(1 << n)


@lru_cache(maxsize=None)
def _popcounts(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int64)
    for j in range(n):
        counts += (masks >> j) & 1
    counts.setflags(write=False)
    return counts


@lru_cache(maxsize=None)
def shapley_weights(n: int) -> np.ndarray:
    """Weight (s-1)!(n-s)!/n! for coalition size s = 0..n (entry 0 unused)."""
    w = [0.0] + [
        float(Fraction(math.factorial(s - 1) * math.factorial(n - s), math.factorial(n)))
        for s in range(1, n + 1)
    ]
    arr = np.array(w)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ShapleyResult:
    values: np.ndarray
    efficiency_residual: float

    @property
    def n(self) -> int:
        return len(self.values)

    def normalized(self) -> np.ndarray:
        total = math.fsum(self.values)
        if not total > 0:
            raise ValidationError("characteristic function degenerate: Shapley values sum to %r" % total)
        return self.values / total


def shapley(table: CoalitionTable) -> ShapleyResult:
    n = table.n
    v = table.values
    masks = np.arange(1 << n, dtype=np.int64)
    weights = shapley_weights(n)[_popcounts(n)]
    psi = np.empty(n)
    for j in range(n):
        bit = 1 << j
        with_j = masks[(masks & bit) != 0]
        terms = weights[with_j] * (v[with_j] - v[with_j ^ bit])
        psi[j] = math.fsum(terms.tolist())
    psi.setflags(write=False)
    residual = abs(math.fsum(psi) - table.grand)
    return ShapleyResult(psi, residual)


def coalition_sums(allocation: Sequence[float], n: int) -> np.ndarray:
    """Sum of allocation over each coalition, indexed by mask."""
    a = np.asarray(allocation, dtype=float)
    sums = np.zeros(1 << n)
    for j in range(n):
        bit = 1 << j
        sums[bit : 2 * bit] = sums[:bit] + a[j]
    return sums


@dataclass(frozen=True)
class CoreCheck:
    in_core: bool
    efficient: bool
    violations: tuple[int, ...]  # masks of blocking coalitions

    def violated_coalitions(self) -> list[list[int]]:
        return [members_of(m) for m in self.violations]


def in_core(allocation: Sequence[float], table: CoalitionTable) -> CoreCheck:
    """Check every efficiency and coalitional-rationality constraint directly."""
    if len(allocation) != table.n:
        raise ValueError(f"allocation has {len(allocation)} entries for a {table.n}-player game")
    n = table.n
    sums = coalition_sums(allocation, n)
    total = math.fsum(allocation)
    efficient = abs(total - table.grand) <= TOL * max(1.0, abs(table.grand))
    proper = np.arange(1, (1 << n) - 1)
    blocked = proper[sums[proper] < table.values[proper] - TOL]
    violations = tuple(int(m) for m in blocked)
    return CoreCheck(efficient and not violations, efficient, violations)


# -- axioms ------------------------------------------------------------------


def _tol(table: CoalitionTable) -> float:
    return TOL * max(1.0, float(np.max(np.abs(table.values))))


def is_superadditive(table: CoalitionTable, max_n: int = 14) -> bool:
    """V(S | T) >= V(S) + V(T) for all disjoint S, T.

    Costs O(3**n); refuses tables larger than max_n unless the caller raises it.
    """
    n = table.n
    if n > max_n:
        raise ValueError(f"superadditivity check limited to n <= {max_n} (got {n})")
    v = table.values
    tol = _tol(table)
    masks = np.arange(1 << n, dtype=np.int64)
    for s in range(1, 1 << n):
        others = masks[(masks & s) == 0]
        others = others[others > s]  # each unordered pair once
        if others.size and np.any(v[others | s] < v[s] + v[others] - tol):
            return False
    return True


def symmetric_pairs(table: CoalitionTable) -> list[tuple[int, int]]:
    """Players (1-based) i < j with equal marginal contribution to every S excluding both."""
    n, v, tol = table.n, table.values, _tol(table)
    masks = np.arange(1 << n, dtype=np.int64)
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            bi, bj = 1 << i, 1 << j
            rest = masks[(masks & (bi | bj)) == 0]
            if np.all(np.abs(v[rest | bi] - v[rest | bj]) <= tol):
                pairs.append((i + 1, j + 1))
    return pairs


def dummy_players(table: CoalitionTable) -> list[int]:
    n, v, tol = table.n, table.values, _tol(table)
    masks = np.arange(1 << n, dtype=np.int64)
    out = []
    for i in range(n):
        bit = 1 << i
        rest = masks[(masks & bit) == 0]
        if np.all(np.abs(v[rest | bit] - v[rest]) <= tol):
            out.append(i + 1)
    return out


@dataclass
class AxiomReport:
    efficiency: bool
    superadditive: bool | None  # None: not checked (table too large)
    individual_rationality: bool | None  # None: not applicable
    symmetry: list[tuple[int, int, bool]] = field(default_factory=list)
    dummy: list[tuple[int, bool]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return (
            self.efficiency
            and self.individual_rationality is not False
            and all(ok for *_, ok in self.symmetry)
            and all(ok for _, ok in self.dummy)
        )

    def as_dict(self) -> dict:
        return {
            "efficiency": self.efficiency,
            "superadditive": self.superadditive,
            "individual_rationality": self.individual_rationality,
            "symmetry": [{"players": [i, j], "pass": ok} for i, j, ok in self.symmetry],
            "dummy": [{"player": i, "pass": ok} for i, ok in self.dummy],
            "passed": self.passed,
        }


def check_axioms(table: CoalitionTable, result: ShapleyResult, max_superadditive_n: int = 14) -> AxiomReport:
    """Efficiency, individual rationality (superadditive tables only), symmetry and dummy.

    Linearity concerns pairs of tables and is covered by the property tests instead.
    """
    psi = result.values
    scale = max(1.0, abs(table.grand))
    efficiency = abs(math.fsum(psi) - table.grand) <= TOL * scale

    superadditive = None
    rationality = None
    if table.n <= max_superadditive_n:
        superadditive = is_superadditive(table, max_superadditive_n)
        if superadditive:
            singles = np.array([table[1 << j] for j in range(table.n)])
            rationality = bool(np.all(psi >= singles - TOL * scale))

    tol = TOL * max(1.0, float(np.max(np.abs(psi))))
    symmetry = [(i, j, abs(psi[i - 1] - psi[j - 1]) <= tol) for i, j in symmetric_pairs(table)]
    dummy = [(i, abs(psi[i - 1]) <= tol) for i in dummy_players(table)]
    return AxiomReport(efficiency, superadditive, rationality, symmetry, dummy)
