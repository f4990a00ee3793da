"""Reserve allocation among DERs from two characteristic functions.

Unpriced headroom (sellable minus cleared capacity) is used first. Any command
beyond it is split by distribution factors: the average of the normalized
Shapley values of the worthiness-index game and the power-loss-reduction game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .game import ShapleyResult
from .model import CoalitionTable, FleetConfig, InfeasibleError, ValidationError

RESERVE_TOL = 1e-6  # kW


@dataclass(frozen=True, eq=False)
class CapacitySplit:
    ucar: np.ndarray  # unpriced capacity available for reserve, kW
    tucar: float
    pcar: np.ndarray  # priced capacity available for reserve, kW


def capacity_split(fleet: FleetConfig) -> CapacitySplit:
    ucar = fleet.column("p_c") - fleet.column("p_e")
    pcar = (1.0 - fleet.alpha_c) * fleet.column("p_e")
    return CapacitySplit(ucar, math.fsum(ucar), pcar)


def worthiness(fleet: FleetConfig, split: CapacitySplit) -> np.ndarray:
    missing = [d.id for d in fleet.ders if d.pi is None]
    if missing:
        raise ValidationError(f"DER {missing[0]}: pi: no performance index given or computed")
    return split.pcar / fleet.column("rbp") * fleet.column("pi")


def build_wi_table(fleet: FleetConfig, split: CapacitySplit) -> CoalitionTable:
    """Additive game: a coalition is worth the sum of its members' worthiness indices."""
    return CoalitionTable.additive(worthiness(fleet, split))


def normalized_shapley(wi_shapley: ShapleyResult, plr_shapley: ShapleyResult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (normalized WI Shapley, normalized PLR Shapley, their average)."""
    if wi_shapley.n != plr_shapley.n:
        raise ValueError("Shapley vectors differ in length")
    norm1 = wi_shapley.normalized()
    norm2 = plr_shapley.normalized()
    return norm1, norm2, (norm1 + norm2) / 2


def distribution_factors(wi_shapley: ShapleyResult, plr_shapley: ShapleyResult) -> np.ndarray:
    eqv = normalized_shapley(wi_shapley, plr_shapley)[2]
    # eqv already sums to 1 analytically; renormalize anyway
    return eqv / math.fsum(eqv)


@dataclass(frozen=True, eq=False)
class AllocationResult:
    df: np.ndarray
    allocated_reserve: np.ndarray  # kW
    priced_reserve: np.ndarray  # kW
    set_point: np.ndarray  # kW
    total_cost: float  # $
    utilities: np.ndarray
    utility_stddev: float
    regime: str  # "priced" when P_R > TUCAR, else "unpriced-pro-rata"; "capacity" for the baseline


def _cost(rbp: np.ndarray, priced: np.ndarray) -> float:
    return math.fsum(rbp * priced)


def _utilities(fleet: FleetConfig, allocated: np.ndarray, ucar: np.ndarray) -> tuple[np.ndarray, float]:
    excess = np.maximum(0.0, allocated - ucar)
    p_c = fleet.column("p_c")
    bad = (p_c == 0) & (excess > 0)
    if np.any(bad):
        der = fleet.ders[int(np.flatnonzero(bad)[0])].id
        raise ValidationError(f"DER {der}: p_c is zero but priced reserve is allocated")
    pi = np.array([d.pi if d.pi is not None else math.nan for d in fleet.ders])
    safe_pc = np.where(p_c == 0, 1.0, p_c)
    u = np.where(excess > 0, fleet.column("rbp") * excess * pi / safe_pc, 0.0)
    stddev = float(np.std(u, ddof=1)) if len(u) > 1 else 0.0
    return u, stddev


def reserve_cost(fleet: FleetConfig, result: AllocationResult) -> float:
    """Each DER's bid price times the reserve it must carve out of cleared output."""
    return _cost(fleet.column("rbp"), result.priced_reserve)


def individual_utilities(fleet: FleetConfig, result: AllocationResult) -> tuple[np.ndarray, float]:
    """Per-DER utility RBP * max(0, AR - UCAR) * PI / P_c and its sample standard deviation."""
    return _utilities(fleet, result.allocated_reserve, capacity_split(fleet).ucar)


def _finish(fleet, split, df, allocated, priced, regime) -> AllocationResult:
    over = priced > split.pcar + RESERVE_TOL
    if np.any(over):
        k = int(np.flatnonzero(over)[0])
        raise InfeasibleError(
            f"DER {fleet.ders[k].id}: distribution factor exceeds priced capacity "
            f"({priced[k]:.4f} kW needed, {split.pcar[k]:.4f} kW available)"
        )
    set_point = fleet.column("p_e") - priced
    u, sd = _utilities(fleet, allocated, split.ucar)
    return AllocationResult(df, allocated, priced, set_point, _cost(fleet.column("rbp"), priced), u, sd, regime)


def allocate(fleet: FleetConfig, split: CapacitySplit, df: np.ndarray) -> AllocationResult:
    p_r = fleet.p_r
    if p_r < 0:
        raise ValidationError(f"reserve command must be nonnegative, got {p_r}")
    df = np.asarray(df, dtype=float)
    if p_r > split.tucar:
        extra = p_r - split.tucar
        if extra > math.fsum(split.pcar) + RESERVE_TOL:
            raise InfeasibleError(
                f"infeasible reserve command: {p_r} kW exceeds unpriced plus priced capacity "
                f"({split.tucar + math.fsum(split.pcar):.4f} kW)"
            )
        priced = extra * df
        allocated = split.ucar + priced
        regime = "priced"
    else:
        priced = np.zeros(fleet.n)
        if split.tucar > 0:
            allocated = p_r * split.ucar / split.tucar
        else:
            allocated = np.zeros(fleet.n)
        regime = "unpriced-pro-rata"
    return _finish(fleet, split, df, allocated, priced, regime)


def capacity_baseline(fleet: FleetConfig, split: CapacitySplit) -> AllocationResult:
    """Split the whole command by sellable-capacity share, ignoring unpriced headroom ordering."""
    p_c = fleet.column("p_c")
    total = math.fsum(p_c)
    if total <= 0:
        raise InfeasibleError("infeasible reserve command: fleet has no sellable capacity")
    if fleet.p_r > total + RESERVE_TOL:
        raise InfeasibleError(f"infeasible reserve command: {fleet.p_r} kW exceeds total sellable capacity {total} kW")
    df = p_c / total
    allocated = fleet.p_r * df
    priced = np.maximum(0.0, allocated - split.ucar)
    return _finish(fleet, split, df, allocated, priced, "capacity")
