"""Performance index of a DER from its committed vs. supplied power history."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HistoryRecord:
    der_id: int
    committed: float  # kW
    supplied: float  # kW

    def __post_init__(self):
        for name in ("committed", "supplied"):
            x = getattr(self, name)
            if not math.isfinite(x) or x < 0:
                raise ValidationError(f"DER {self.der_id}: {name} must be finite and >= 0, got {x!r}")


@dataclass(frozen=True)
class PiStats:
    der_id: int
    record_count: int
    ess: float
    tss: float
    raw_r2: float
    pi: float

    @property
    def clamped(self) -> bool:
        return self.raw_r2 < 0


def pi_stats(history: Sequence[HistoryRecord], der_id: int | None = None) -> PiStats:
    """R-squared of supplied power as a predictor of committed power.

    ESS is the squared error between committed and supplied power; TSS is the
    spread of committed power about its mean. A negative score is clamped to 0.
    """
    if der_id is None and history:
        der_id = history[0].der_id
    if not history:
        raise ValidationError(f"DER {der_id}: empty history")
    if any(r.der_id != der_id for r in history):
        raise ValidationError(f"DER {der_id}: history mixes records of several DERs")

    committed = [r.committed for r in history]
    mean = math.fsum(committed) / len(committed)
    ess = math.fsum((r.committed - r.supplied) ** 2 for r in history)
    tss = math.fsum((c - mean) ** 2 for c in committed)
    if tss == 0:
        raise ValidationError(
            f"DER {der_id}: insufficient history, committed power never varies (R-squared undefined)"
        )
    raw = 1.0 - ess / tss
    if raw < 0:
        log.warning("DER %s: R-squared %.6g is negative, performance index clamped to 0", der_id, raw)
    return PiStats(der_id, len(history), ess, tss, raw, max(0.0, raw))


def compute_pi(history: Sequence[HistoryRecord]) -> float:
    return pi_stats(history).pi


def group_by_der(records: Iterable[HistoryRecord]) -> dict[int, list[HistoryRecord]]:
    out: dict[int, list[HistoryRecord]] = {}
    for r in records:
        out.setdefault(r.der_id, []).append(r)
    return out
