"""Execution schedules, drift-time mapping and the schedule-exposure factor."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .contexts import CONTEXTS, normalize_context
from .errors import ValidationError


class ScheduleKind(str, Enum):
    ROUND_ROBIN = "round_robin"
    BLOCKED = "blocked"
    CUSTOM = "custom"


class DriftIndexRule(str, Enum):
    """How the drift clock advances.

    ``PER_BIN``: a slot sees the drift value of its bin label.
    ``PER_SLOT``: a slot sees the drift value at its wall-clock position,
    i.e. the K-level quantile of its index in the global slot order.
    """

    PER_BIN = "per_bin"
    PER_SLOT = "per_slot"


_KIND_ALIASES = {
    "round_robin": ScheduleKind.ROUND_ROBIN,
    "roundrobin": ScheduleKind.ROUND_ROBIN,
    "rr": ScheduleKind.ROUND_ROBIN,
    "balanced": ScheduleKind.ROUND_ROBIN,
    "interleaved": ScheduleKind.ROUND_ROBIN,
    "blocked": ScheduleKind.BLOCKED,
    "ub": ScheduleKind.BLOCKED,
    "unbalanced": ScheduleKind.BLOCKED,
    "custom": ScheduleKind.CUSTOM,
}


def parse_kind(kind) -> ScheduleKind:
    if isinstance(kind, ScheduleKind):
        return kind
    try:
        return _KIND_ALIASES[str(kind).strip().lower().replace("-", "_")]
    except KeyError:
        raise ValidationError(f"unknown schedule kind {kind!r}") from None


@dataclass(frozen=True)
class Schedule:
    """Global execution order of (context, bin) slots; bins are 1-based."""

    num_bins: int
    slots: tuple[tuple[str, int], ...]
    kind: ScheduleKind = ScheduleKind.CUSTOM
    contexts: tuple[str, ...] = CONTEXTS

    def __post_init__(self):
        if self.num_bins < 1:
            raise ValidationError(f"num_bins must be >= 1, got {self.num_bins}")
        slots = tuple((normalize_context(c), int(b)) for c, b in self.slots)
        for c, b in slots:
            if not 1 <= b <= self.num_bins:
                raise ValidationError(f"slot ({c}, {b}) references a bin outside 1..{self.num_bins}")
        if len(set(slots)) != len(slots):
            raise ValidationError("schedule contains duplicate (context, bin) slots")
        object.__setattr__(self, "slots", slots)
        object.__setattr__(self, "kind", parse_kind(self.kind))

    def bins_for(self, context: str) -> tuple[int, ...]:
        """Bin labels executed for ``context``, in execution order."""
        c = normalize_context(context)
        return tuple(b for cc, b in self.slots if cc == c)

    def covers_all_contexts(self) -> bool:
        return all(self.bins_for(c) for c in self.contexts)

    def default_rule(self) -> DriftIndexRule:
        return DriftIndexRule.PER_SLOT if self.kind is ScheduleKind.BLOCKED else DriftIndexRule.PER_BIN


def make_schedule(kind, num_bins: int) -> Schedule:
    kind = parse_kind(kind)
    if num_bins < 1:
        raise ValidationError(f"num_bins must be >= 1, got {num_bins}")
    bins = range(1, num_bins + 1)
    if kind is ScheduleKind.ROUND_ROBIN:
        slots = [(c, k) for k in bins for c in CONTEXTS]
    elif kind is ScheduleKind.BLOCKED:
        slots = [(c, k) for c in CONTEXTS for k in bins]
    else:
        raise ValidationError("custom schedules are built with Schedule(...) or split_schedule()")
    return Schedule(num_bins, tuple(slots), kind)


def split_schedule(num_bins: int) -> Schedule:
    """Custom schedule: xy, xy' on the early half of bins, x'y, x'y' on the late half.

    Within each half the two contexts alternate. Requires an even bin count.
    """
    if num_bins < 2 or num_bins % 2:
        raise ValidationError(f"split schedule needs an even num_bins >= 2, got {num_bins}")
    half = num_bins // 2
    early = [(c, k) for k in range(1, half + 1) for c in CONTEXTS[:2]]
    late = [(c, k) for k in range(half + 1, num_bins + 1) for c in CONTEXTS[2:]]
    return Schedule(num_bins, tuple(early + late), ScheduleKind.CUSTOM)


def drift_indices(schedule: Schedule, rule: DriftIndexRule | str | None = None) -> np.ndarray:
    """0-based drift-profile index (over ``num_bins`` levels) for every slot."""
    rule = schedule.default_rule() if rule is None else DriftIndexRule(rule)
    if rule is DriftIndexRule.PER_BIN:
        return np.array([b - 1 for _, b in schedule.slots], dtype=int)
    n = len(schedule.slots)
    return (np.arange(n) * schedule.num_bins) // n


@dataclass(frozen=True)
class ExposureReport:
    occupancy: dict[str, np.ndarray]
    delta_sched: float
    rule: DriftIndexRule
    pair: tuple[str, str] | None = None


def exposure(schedule: Schedule, rule: DriftIndexRule | str | None = None) -> ExposureReport:
    """Max pairwise TV distance between per-context drift-time occupancy histograms."""
    rule = schedule.default_rule() if rule is None else DriftIndexRule(rule)
    idx = drift_indices(schedule, rule)
    occupancy = {}
    for c in schedule.contexts:
        mask = np.array([cc == c for cc, _ in schedule.slots])
        hist = np.bincount(idx[mask], minlength=schedule.num_bins).astype(float)
        if hist.sum() > 0:
            hist /= hist.sum()
        occupancy[c] = hist
    best, pair = 0.0, None
    for a, b in itertools.combinations(schedule.contexts, 2):
        if occupancy[a].sum() == 0 or occupancy[b].sum() == 0:
            continue
        # occupancies are ratios of small integers; rounding removes float residue
        tv = round(0.5 * float(np.abs(occupancy[a] - occupancy[b]).sum()), 12)
        if tv > best:
            best, pair = tv, (a, b)
    return ExposureReport(occupancy, min(1.0, best), rule, pair)
