"""Coalitional-game allocation of spinning reserve among distributed energy resources."""

from .allocation import (
    AllocationResult,
    CapacitySplit,
    allocate,
    build_wi_table,
    capacity_baseline,
    capacity_split,
    distribution_factors,
    individual_utilities,
    reserve_cost,
)
from .game import ShapleyResult, check_axioms, enumerate_coalitions, in_core, shapley
from .model import (
    CoalitionTable,
    DerParams,
    FleetConfig,
    InfeasibleError,
    ReserveGameError,
    ValidationError,
    validate_fleet,
)
from .performance import HistoryRecord, compute_pi
from .powerflow import Branch, Bus, DivergenceError, NetworkModel, plr_table, solve

__all__ = [
    "AllocationResult",
    "Branch",
    "Bus",
    "CapacitySplit",
    "CoalitionTable",
    "DerParams",
    "DivergenceError",
    "FleetConfig",
    "HistoryRecord",
    "InfeasibleError",
    "NetworkModel",
    "ReserveGameError",
    "ShapleyResult",
    "ValidationError",
    "allocate",
    "build_wi_table",
    "capacity_baseline",
    "capacity_split",
    "check_axioms",
    "compute_pi",
    "distribution_factors",
    "enumerate_coalitions",
    "in_core",
    "individual_utilities",
    "plr_table",
    "reserve_cost",
    "shapley",
    "solve",
    "validate_fleet",
]
