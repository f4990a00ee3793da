"""End-to-end allocation: fleet and loss-reduction game in, allocation out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .allocation import (
    AllocationResult,
    CapacitySplit,
    allocate,
    build_wi_table,
    capacity_baseline,
    capacity_split,
    distribution_factors,
    normalized_shapley,
    worthiness,
)
from .game import AxiomReport, ShapleyResult, check_axioms, shapley
from .model import CoalitionTable, FleetConfig, ValidationError, validate_fleet
from .performance import HistoryRecord, PiStats, group_by_der, pi_stats


@dataclass(frozen=True, eq=False)
class PipelineResult:
    fleet: FleetConfig
    split: CapacitySplit
    wi: np.ndarray
    wi_table: CoalitionTable
    plr_table: CoalitionTable
    wi_shapley: ShapleyResult
    plr_shapley: ShapleyResult
    wi_normalized: np.ndarray
    plr_normalized: np.ndarray
    equivalent: np.ndarray
    allocation: AllocationResult
    baseline: AllocationResult | None = None
    axioms: dict[str, AxiomReport] | None = None


def apply_history(fleet: FleetConfig, history: Sequence[HistoryRecord]) -> tuple[FleetConfig, list[PiStats]]:
    """Replace direct PI inputs with R-squared scores for every DER that has history."""
    known = {d.id: d for d in fleet.ders}
    grouped = group_by_der(history)
    for der_id in grouped:
        if der_id not in known:
            raise ValidationError(f"DER {der_id}: history references an unknown DER")
        if known[der_id].pi is not None:
            raise ValidationError(f"DER {der_id}: pi: given directly and via history; use one")
    stats = [pi_stats(grouped[i], i) for i in sorted(grouped)]
    return fleet.with_pi({s.der_id: s.pi for s in stats}), stats


def run(
    fleet: FleetConfig,
    plr_table: CoalitionTable,
    wi_table: CoalitionTable | None = None,
    baseline: bool = False,
    axioms: bool = False,
) -> PipelineResult:
    fleet = validate_fleet(fleet)
    split = capacity_split(fleet)
    wi = worthiness(fleet, split)
    if wi_table is None:
        wi_table = build_wi_table(fleet, split)
    for name, table in (("WI", wi_table), ("PLR", plr_table)):
        if table.n != fleet.n:
            raise ValidationError(f"{name} table has {table.n} players, fleet has {fleet.n}")

    wi_shapley = shapley(wi_table)
    plr_shapley = shapley(plr_table)
    norm1, norm2, eqv = normalized_shapley(wi_shapley, plr_shapley)
    df = distribution_factors(wi_shapley, plr_shapley)
    result = allocate(fleet, split, df)

    base = capacity_baseline(fleet, split) if baseline else None
    reports = None
    if axioms:
        reports = {"wi": check_axioms(wi_table, wi_shapley), "plr": check_axioms(plr_table, plr_shapley)}
    return PipelineResult(
        fleet, split, wi, wi_table, plr_table, wi_shapley, plr_shapley, norm1, norm2, eqv, result, base, reports
    )


def run_with_values(fleet: FleetConfig, plr_values: Mapping[int, float], **kw) -> PipelineResult:
    """Convenience wrapper taking the loss-reduction game as {mask: value}."""
    return run(fleet, CoalitionTable.from_mapping(fleet.n, plr_values), **kw)
