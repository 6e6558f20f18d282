"""Drifting finite deterministic local-hidden-variable model.

Five hidden-variable points, deterministic +/-1 responses, and
per-bin preparation ensembles parameterised by a mixture weight
``p_k`` in ``[0, 1/3]``. Within a bin every context shares the same
``p_k``; scheduling decides which bins each context samples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .contexts import CHSH_SIGNS, CONTEXTS, context_settings, normalize_context
from .errors import ValidationError
from .schedule import DriftIndexRule, Schedule, drift_indices

NUM_LAMBDA = 5
P_MAX = 1.0 / 3.0

# rows: lambda_1..lambda_5; columns A(x), A(x'), B(y), B(y')
_DEFAULT_RESPONSES = np.array(
    [
        [+1, +1, +1, +1],
        [+1, -1, +1, +1],
        [+1, +1, +1, -1],
        [+1, -1, -1, +1],
        [+1, +1, +1, +1],
    ]
)

# lambda index carrying zero weight in each context's ensemble
_ZERO_SLOT = {"xy": 3, "xy'": 2, "x'y": 1, "x'y'": 0}


@dataclass(frozen=True)
class ResponseTable:
    """Deterministic local responses; ``a_values[s, j] = A(setting s, lambda_j)``."""

    a_values: np.ndarray
    b_values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_values, dtype=int)
        b = np.asarray(self.b_values, dtype=int)
        if a.shape != (2, NUM_LAMBDA) or b.shape != (2, NUM_LAMBDA):
            raise ValidationError(f"response tables must be 2x{NUM_LAMBDA}")
        if not (np.all(np.abs(a) == 1) and np.all(np.abs(b) == 1)):
            raise ValidationError("response values must be +1 or -1")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "b_values", b)

    @classmethod
    def default(cls) -> "ResponseTable":
        return cls(_DEFAULT_RESPONSES[:, :2].T, _DEFAULT_RESPONSES[:, 2:].T)

    def products(self, context: str) -> np.ndarray:
        """``A(a, lambda_j) * B(b, lambda_j)`` over the five points."""
        sa, sb = context_settings(context)
        return self.a_values[sa] * self.b_values[sb]

    def outcome_index(self, context: str) -> np.ndarray:
        """Two-bit outcome index per lambda (+1 -> bit 0, A is the left bit)."""
        sa, sb = context_settings(context)
        bit_a = (1 - self.a_values[sa]) // 2
        bit_b = (1 - self.b_values[sb]) // 2
        return 2 * bit_a + bit_b

    def outcome_map(self, context: str) -> np.ndarray:
        """4x5 0/1 matrix sending a lambda distribution to an outcome distribution."""
        m = np.zeros((4, NUM_LAMBDA))
        m[self.outcome_index(context), np.arange(NUM_LAMBDA)] = 1.0
        return m


DEFAULT_TABLE = ResponseTable.default()


def _check_p(p: float) -> float:
    p = float(p)
    if not (-1e-15 <= p <= P_MAX + 1e-15):
        raise ValidationError(f"mixture weight p must lie in [0, 1/3], got {p}")
    return min(max(p, 0.0), P_MAX)


def ensemble(context: str, p: float) -> np.ndarray:
    """Preparation ensemble over the five lambda points for one context."""
    c = normalize_context(context)
    p = _check_p(p)
    w = np.full(NUM_LAMBDA, p)
    w[_ZERO_SLOT[c]] = 0.0
    w[4] = 1.0 - 3.0 * p
    return w


def ensemble_table(p: float) -> dict[str, np.ndarray]:
    return {c: ensemble(c, p) for c in CONTEXTS}


@dataclass(frozen=True)
class PProfile:
    values: tuple[float, ...]
    kind: str = "custom"

    def __post_init__(self):
        vals = tuple(_check_p(v) for v in self.values)
        if not vals:
            raise ValidationError("a p-profile needs at least one bin")
        object.__setattr__(self, "values", vals)

    @property
    def num_bins(self) -> int:
        return len(self.values)

    @classmethod
    def constant(cls, p: float, num_bins: int) -> "PProfile":
        if num_bins < 1:
            raise ValidationError(f"num_bins must be >= 1, got {num_bins}")
        return cls((float(p),) * num_bins, "constant")

    @classmethod
    def linear_ramp(cls, p_lo: float, p_hi: float, num_bins: int) -> "PProfile":
        """``p_k = p_lo + (p_hi - p_lo) (k - 1) / (K - 1)``; K = 1 gives ``p_lo``."""
        if num_bins < 1:
            raise ValidationError(f"num_bins must be >= 1, got {num_bins}")
        if num_bins == 1:
            return cls((float(p_lo),), "linear_ramp")
        k = np.arange(num_bins)
        vals = p_lo + (p_hi - p_lo) * k / (num_bins - 1)
        return cls(tuple(float(v) for v in vals), "linear_ramp")


def analytic_correlator(context: str, p: float, table: ResponseTable = DEFAULT_TABLE) -> float:
    return float(ensemble(context, p) @ table.products(context))


def analytic_S(p: float, table: ResponseTable = DEFAULT_TABLE) -> float:
    """Bell parameter of the single-bin model; ``2 + 6p`` for the default table."""
    return float(sum(CHSH_SIGNS[c] * analytic_correlator(c, p, table) for c in CONTEXTS))


def _check_schedule(profile: PProfile, schedule: Schedule) -> None:
    if schedule.num_bins != profile.num_bins:
        raise ValidationError(
            f"schedule has {schedule.num_bins} bins but the p-profile has {profile.num_bins}"
        )


def slot_weights(profile: PProfile, schedule: Schedule, rule=None) -> np.ndarray:
    """Mixture weight seen by every slot of ``schedule``."""
    _check_schedule(profile, schedule)
    return np.asarray(profile.values)[drift_indices(schedule, rule)]


def sample_lhv_counts(
    profile: PProfile,
    schedule: Schedule,
    shots_per_bin: int,
    seed,
    rule: DriftIndexRule | str | None = None,
    table: ResponseTable = DEFAULT_TABLE,
):
    """Sample outcome counts for every executed (context, bin) slot."""
    from .stats import BinnedCounts

    if shots_per_bin < 1:
        raise ValidationError(f"shots_per_bin must be >= 1, got {shots_per_bin}")
    if not schedule.covers_all_contexts():
        raise ValidationError("schedule must execute every CHSH context at least once")
    weights = slot_weights(profile, schedule, rule)
    rng = np.random.default_rng(seed)
    cells: dict[str, dict[int, np.ndarray]] = {c: {} for c in CONTEXTS}
    for (context, b), p in zip(schedule.slots, weights):
        lam_counts = rng.multinomial(shots_per_bin, ensemble(context, p))
        cells[context][b] = np.bincount(
            table.outcome_index(context), weights=lam_counts, minlength=4
        ).astype(np.int64)
    return BinnedCounts.from_cells(cells, shots_per_bin)


def time_averaged_ensembles(
    profile: PProfile, schedule: Schedule, rule: DriftIndexRule | str | None = None
) -> dict[str, np.ndarray]:
    """Per-context ensemble averaged over the drift times that context samples."""
    _check_schedule(profile, schedule)
    idx = drift_indices(schedule, rule)
    out = {}
    for c in CONTEXTS:
        ks = [k for (cc, _), k in zip(schedule.slots, idx) if cc == c]
        if not ks:
            raise ValidationError(f"context {c} is never executed by the schedule")
        out[c] = np.mean([ensemble(c, profile.values[k]) for k in ks], axis=0)
    return out


def mean_weights(profile: PProfile, schedule: Schedule, rule=None) -> dict[str, float]:
    """Effective mixture weight per context (mean of p over its sampled drift times)."""
    _check_schedule(profile, schedule)
    idx = drift_indices(schedule, rule)
    out = {}
    for c in CONTEXTS:
        ks = [k for (cc, _), k in zip(schedule.slots, idx) if cc == c]
        if not ks:
            raise ValidationError(f"context {c} is never executed by the schedule")
        out[c] = float(np.mean([profile.values[k] for k in ks]))
    return out


def model_delta_ens(ensembles: dict[str, np.ndarray]) -> float:
    """Max pairwise exact TV distance between the context ensembles."""
    best = 0.0
    for a, b in itertools.combinations(ensembles, 2):
        best = max(best, 0.5 * float(np.abs(np.asarray(ensembles[a]) - np.asarray(ensembles[b])).sum()))
    return best
