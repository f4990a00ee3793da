"""Shared domain types: DER parameters, fleets, coalitions and characteristic tables.

Players are 1-based integers. A coalition is an int bitmask where bit ``i - 1``
is set when player ``i`` belongs to it; mask 0 is the empty coalition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_PLAYERS = 20


class ReserveGameError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(ReserveGameError, ValueError):
    """Input violates a domain invariant."""


class InfeasibleError(ReserveGameError):
    """A reserve command cannot be met by the fleet."""


@dataclass(frozen=True)
class DerParams:
    id: int
    node: str
    p_c: float  # sellable capacity, kW
    p_e: float  # energy-market cleared capacity, kW
    rbp: float  # reserve bid price, $/kW
    pi: float | None = None  # performance index; None until computed from history


@dataclass(frozen=True)
class FleetConfig:
    ders: tuple[DerParams, ...]
    alpha_c: float = 0.5
    p_r: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "ders", tuple(self.ders))

    @property
    def n(self) -> int:
        return len(self.ders)

    def column(self, name: str) -> np.ndarray:
        """Per-DER attribute as a float array, in player order."""
        return np.array([getattr(d, name) for d in self.ders], dtype=float)

    def with_pi(self, pi: Mapping[int, float]) -> FleetConfig:
        ders = tuple(
            DerParams(d.id, d.node, d.p_c, d.p_e, d.rbp, pi[d.id]) if d.id in pi else d
            for d in self.ders
        )
        return FleetConfig(ders, self.alpha_c, self.p_r)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate_fleet(config: FleetConfig) -> FleetConfig:
    """Check every fleet invariant and return the config unchanged.

    Raises ValidationError naming the DER id and field at fault.
    """
    n = len(config.ders)
    if not 1 <= n <= MAX_PLAYERS:
        raise ValidationError(f"fleet must have between 1 and {MAX_PLAYERS} DERs, got {n}")
    if not _finite(config.alpha_c) or not 0 <= config.alpha_c < 1:
        raise ValidationError(f"alpha_c must be in [0, 1), got {config.alpha_c!r}")
    if not _finite(config.p_r) or config.p_r < 0:
        raise ValidationError(f"p_r must be a finite nonnegative power, got {config.p_r!r}")

    ids = [d.id for d in config.ders]
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"DER {i}: duplicate id")
        seen.add(i)
    missing = sorted(set(range(1, n + 1)) - seen)
    if missing:
        raise ValidationError(f"DER ids must be contiguous 1..{n}; missing id {missing[0]}")
    if ids != sorted(ids):
        raise ValidationError("DERs must be listed in ascending id order")

    for d in config.ders:
        for name in ("p_c", "p_e", "rbp"):
            if not _finite(getattr(d, name)):
                raise ValidationError(f"DER {d.id}: {name} must be a finite number")
        if d.p_e < 0:
            raise ValidationError(f"DER {d.id}: p_e must be nonnegative")
        if d.p_e > d.p_c:
            raise ValidationError(f"DER {d.id}: p_e: cleared capacity exceeds sellable capacity")
        if d.rbp <= 0:
            raise ValidationError(f"DER {d.id}: rbp must be positive")
        if d.pi is not None and (not _finite(d.pi) or not 0 <= d.pi <= 1):
            raise ValidationError(f"DER {d.id}: pi must be in [0, 1], got {d.pi!r}")
    return config


# -- coalitions --------------------------------------------------------------


def mask_of(members: Iterable[int]) -> int:
    mask = 0
    for i in members:
        if i < 1:
            raise ValueError(f"player ids are 1-based, got {i}")
        mask |= 1 << (i - 1)
    return mask


def members_of(mask: int) -> list[int]:
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def coalition_key(mask: int) -> str:
    """File key for a coalition: sorted, comma-joined member ids ("" for the empty set)."""
    return ",".join(str(i) for i in members_of(mask))


def parse_coalition_key(key: str, n: int) -> int:
    parts = [p.strip() for p in key.split(",")]
    try:
        ids = [int(p) for p in parts]
    except ValueError:
        raise ValidationError(f"bad coalition key {key!r}") from None
    if len(set(ids)) != len(ids):
        raise ValidationError(f"coalition key {key!r} repeats a player")
    if any(not 1 <= i <= n for i in ids):
        raise ValidationError(f"coalition key {key!r} names a player outside 1..{n}")
    return mask_of(ids)


@dataclass(frozen=True, eq=False)
class CoalitionTable:
    """A characteristic function stored densely, indexed by coalition mask."""

    n: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not 1 <= self.n <= MAX_PLAYERS:
            raise ValidationError(f"player count must be in 1..{MAX_PLAYERS}, got {self.n}")
        v = np.array(self.values, dtype=float)
        if v.shape != (1 << self.n,):
            raise ValidationError(f"table for n={self.n} needs {1 << self.n} values, got shape {v.shape}")
        if v[0] != 0.0:
            raise ValidationError("value of the empty coalition must be 0")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValidationError(f"non-finite value for coalition {{{coalition_key(bad)}}}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_mapping(cls, n: int, values: Mapping[int, float]) -> CoalitionTable:
        """Build from {mask: value}; every nonempty coalition must be present."""
        v = np.zeros(1 << n)
        for mask in range(1, 1 << n):
            if mask not in values:
                raise ValidationError(f"missing value for coalition {{{coalition_key(mask)}}}")
            v[mask] = values[mask]
        return cls(n, v)

    @classmethod
    def additive(cls, weights: Sequence[float]) -> CoalitionTable:
        """V(S) = sum of member weights."""
        w = np.asarray(weights, dtype=float)
        n = len(w)
        v = np.zeros(1 << n)
        for j in range(n):
            bit = 1 << j
            v[bit : 2 * bit] = v[:bit] + w[j]
        return cls(n, v)

    def __getitem__(self, mask: int) -> float:
        return float(self.values[mask])

    @property
    def grand(self) -> float:
        return float(self.values[-1])

    def __add__(self, other: CoalitionTable) -> CoalitionTable:
        if other.n != self.n:
            raise ValueError("tables differ in player count")
        return CoalitionTable(self.n, self.values + other.values)

    def scaled(self, c: float) -> CoalitionTable:
        return CoalitionTable(self.n, self.values * c)

    def __eq__(self, other):
        if not isinstance(other, CoalitionTable):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.values, other.values)

    __hash__ = None
