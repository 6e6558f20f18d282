"""CHSH estimation and relaxed-bound arithmetic."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .contexts import CHSH_SIGNS, CONTEXTS, PARITY, context_settings, normalize_context
from .errors import ValidationError

CLASSICAL_BOUND = 2.0
ALGEBRAIC_MAX = 4.0
TSIRELSON = 2.0 * math.sqrt(2.0)
# measurement dependence at which 2 + 3M reaches 2*sqrt(2)
HALL_THRESHOLD = 2.0 * (math.sqrt(2.0) - 1.0) / 3.0
HALL_QUOTED_FRACTION = 0.14
HALL_NOTE = (
    f"2(sqrt2-1)/3 = {HALL_THRESHOLD:.5f}; the commonly quoted '~14%' figure "
    f"({HALL_QUOTED_FRACTION}) does not equal this value"
)


def _check_unit(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValidationError(f"{name} must lie in [0, 1], got {value}")
    return value


def correlator(counts) -> tuple[float, float]:
    """``E = (n00 + n11 - n01 - n10) / N`` and its plug-in standard error."""
    n = np.asarray(counts, dtype=float)
    if n.shape != (4,):
        raise ValidationError(f"expected 4 outcome counts, got shape {n.shape}")
    total = n.sum()
    if total <= 0:
        raise ValidationError("correlator needs at least one shot")
    e = float(PARITY @ n / total)
    e = min(1.0, max(-1.0, e))
    return e, math.sqrt(max(0.0, 1.0 - e * e) / total)


@dataclass
class ChshReport:
    correlators: dict[str, float]
    errors: dict[str, float]
    S: float
    S_err: float
    mitigated: bool = False
    schedule: str | None = None

    def check(self, tol: float = 1e-12) -> None:
        """Validate ``|E| <= 1`` and the sign convention of ``S``."""
        for c, e in self.correlators.items():
            if abs(e) > 1 + tol:
                raise ValidationError(f"|E_{c}| = {abs(e)} exceeds 1")
        s = sum(CHSH_SIGNS[c] * self.correlators[c] for c in CONTEXTS)
        if abs(s - self.S) > tol:
            raise ValidationError(f"S = {self.S} inconsistent with its correlators ({s})")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def chsh_S(correlators: Mapping[str, object], mitigated: bool = False, schedule: str | None = None) -> ChshReport:
    """Combine four correlators as ``E_xy + E_xy' + E_x'y - E_x'y'``.

    Values may be plain floats or ``(E, standard_error)`` pairs.
    """
    es, ses = {}, {}
    for c, v in correlators.items():
        key = normalize_context(c)
        if isinstance(v, (tuple, list)):
            es[key], ses[key] = float(v[0]), float(v[1])
        else:
            es[key], ses[key] = float(v), 0.0
    missing = [c for c in CONTEXTS if c not in es]
    if missing:
        raise ValidationError(f"missing correlators for contexts {missing}")
    s = sum(CHSH_SIGNS[c] * es[c] for c in CONTEXTS)
    s_err = math.sqrt(sum(ses[c] ** 2 for c in CONTEXTS))
    report = ChshReport({c: es[c] for c in CONTEXTS}, {c: ses[c] for c in CONTEXTS}, s, s_err, mitigated, schedule)
    report.check()
    return report


def chsh_from_counts(aggregated: Mapping[str, np.ndarray], **kwargs) -> ChshReport:
    return chsh_S({c: correlator(v) for c, v in aggregated.items()}, **kwargs)


def relaxed_bound(delta_ens: float) -> float:
    """``2 + 6 delta_ens`` (unclamped; may exceed the algebraic maximum 4)."""
    return 2.0 + 6.0 * _check_unit("delta_ens", delta_ens)


def min_delta_required(s: float) -> float:
    """Smallest ensemble divergence compatible with ``|S|`` under the relaxed bound."""
    if not math.isfinite(s):
        raise ValidationError(f"S must be finite, got {s}")
    return max(0.0, (abs(s) - 2.0) / 6.0)


def schedule_aware_bound(delta_sched: float, delta_op: float) -> float:
    """``2 + 6 delta_sched delta_op``."""
    return 2.0 + 6.0 * _check_unit("delta_sched", delta_sched) * _check_unit("delta_op", delta_op)


def hall_bound(m: float) -> float:
    """Measurement-dependence bound ``2 + 3M``."""
    return 2.0 + 3.0 * _check_unit("M", m)


def hall_required(s: float) -> float:
    """Measurement dependence solving ``2 + 3M = |S|`` (0 if no violation)."""
    return max(0.0, (abs(s) - 2.0) / 3.0)


def clamp_bound(value: float) -> tuple[float, str | None]:
    if value > ALGEBRAIC_MAX:
        return ALGEBRAIC_MAX, f"formula value {value:.6g} exceeds the algebraic maximum {ALGEBRAIC_MAX:g}"
    return value, None


class Verdict(str, Enum):
    NO_VIOLATION = "no_violation"
    WITHIN_RELAXED_BOUND = "within_relaxed_bound"
    EXCEEDS_SCHEDULE_AWARE_BOUND = "exceeds_schedule_aware_bound"


@dataclass
class BoundCertificate:
    s_abs: float
    delta_ens_min: float
    delta_sched: float
    delta_op: float
    s_lhv_min: float
    hall_m_required: float
    verdict: Verdict
    delta_ens: float | None = None
    relaxed_bound: float | None = None
    relaxed_bound_clamped: float | None = None
    notes: list[str] = field(default_factory=list)

    def check(self) -> None:
        if self.delta_ens_min < 0 or self.s_lhv_min < 2:
            raise ValidationError("certificate violates delta_ens_min >= 0 / s_lhv_min >= 2")
        expected = _verdict(self.s_abs, self.s_lhv_min)
        if expected is not self.verdict:
            raise ValidationError(f"verdict {self.verdict} inconsistent with |S| and S_LHV^min")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["verdict"] = self.verdict.value
        return d


def _verdict(s_abs: float, s_lhv_min: float) -> Verdict:
    if s_abs <= CLASSICAL_BOUND:
        return Verdict.NO_VIOLATION
    if s_abs <= s_lhv_min:
        return Verdict.WITHIN_RELAXED_BOUND
    return Verdict.EXCEEDS_SCHEDULE_AWARE_BOUND


def certificate(s: float, delta_sched: float, delta_op: float, delta_ens: float | None = None) -> BoundCertificate:
    """Bound bookkeeping for a measured Bell parameter.

    ``delta_ens`` is optional and only known for models (it is not observable).
    """
    s_abs = abs(float(s))
    s_min = schedule_aware_bound(delta_sched, delta_op)
    cert = BoundCertificate(
        s_abs=s_abs,
        delta_ens_min=min_delta_required(s_abs),
        delta_sched=float(delta_sched),
        delta_op=float(delta_op),
        s_lhv_min=s_min,
        hall_m_required=hall_required(s_abs),
        verdict=_verdict(s_abs, s_min),
        notes=[HALL_NOTE],
    )
    if delta_ens is not None:
        cert.delta_ens = float(delta_ens)
        cert.relaxed_bound = relaxed_bound(delta_ens)
        cert.relaxed_bound_clamped, note = clamp_bound(cert.relaxed_bound)
        if note:
            cert.notes.append(note)
    if cert.hall_m_required > 1.0:
        cert.notes.append("|S| exceeds 5; Hall bound cannot accommodate it")
    return cert


# ---------------------------------------------------------------------------
# brute-force verification of the relaxed bound
# ---------------------------------------------------------------------------

STRATEGIES = np.array(list(itertools.product((1, -1), repeat=4)))  # A(x), A(x'), B(y), B(y')


def strategy_products() -> np.ndarray:
    """``X_ab(s) = A(a) B(b)`` for each of the 16 strategies, shape (16, 4)."""
    cols = []
    for c in CONTEXTS:
        sa, sb = context_settings(c)
        cols.append(STRATEGIES[:, sa] * STRATEGIES[:, 2 + sb])
    return np.stack(cols, axis=1)


_SIGNS = np.array([CHSH_SIGNS[c] for c in CONTEXTS], dtype=float)


def deterministic_chsh_values() -> np.ndarray:
    """CHSH value of each of the 16 deterministic strategies (integers)."""
    return strategy_products() @ _SIGNS.astype(int)


def worst_case_S(ensembles: np.ndarray) -> np.ndarray:
    """Max ``|S|`` over all deterministic response assignments.

    ``ensembles`` has shape ``(..., 4, L)`` (context order xy, xy', x'y, x'y').
    The maximum separates over lambda points, so each point independently
    takes the best of the 16 strategies.
    """
    pi = np.asarray(ensembles, dtype=float) * _SIGNS[:, None]
    vals = np.einsum("...cl,sc->...ls", pi, strategy_products().astype(float))
    hi = vals.max(axis=-1).sum(axis=-1)
    lo = vals.min(axis=-1).sum(axis=-1)
    return np.maximum(hi, -lo)


def max_pairwise_tv_contexts(ensembles: np.ndarray) -> np.ndarray:
    e = np.asarray(ensembles, dtype=float)
    diff = np.abs(e[..., :, None, :] - e[..., None, :, :]).sum(axis=-1)
    return 0.5 * diff.max(axis=(-1, -2))


def random_ensembles(delta: float, trials: int, rng: np.random.Generator, n_lambda: int = 5) -> np.ndarray:
    """Four ensembles per trial with max pairwise TV <= ``delta``.

    A random base distribution is mixed toward four random targets with the
    largest weight the TV budget allows. Half of the targets are point masses
    so that extreme, sparse configurations are explored. About a tenth of the
    trials use the saturating five-point family (zero weight on a
    context-specific point, ``p = min(delta, 1/3)`` elsewhere) with the points
    randomly relabelled.
    """
    base = rng.dirichlet(np.ones(n_lambda), size=trials)
    dense = rng.dirichlet(np.full(n_lambda, 0.3), size=(trials, 4))
    points = np.eye(n_lambda)[rng.integers(n_lambda, size=(trials, 4))]
    use_point = rng.random((trials, 4, 1)) < 0.5
    targets = np.where(use_point, points, dense)
    spread = max_pairwise_tv_contexts(targets)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(spread > 0, np.minimum(1.0, delta / spread), 0.0)
    ens = (1 - t)[:, None, None] * base[:, None, :] + t[:, None, None] * targets
    if n_lambda >= 5:
        p = min(delta, 1.0 / 3.0)
        family = np.zeros((4, n_lambda))
        family[:, :4] = p
        family[:, 4] = 1.0 - 3.0 * p
        family[[0, 1, 2, 3], [3, 2, 1, 0]] = 0.0
        rows = np.nonzero(rng.random(trials) < 0.1)[0]
        for r in rows:
            ens[r] = family[:, rng.permutation(n_lambda)]
    return ens


@dataclass
class BruteForceResult:
    delta: float
    bound: float
    trials: int
    worst_S: float
    max_tv: float
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def bound_bruteforce_check(delta: float, trials: int, seed, n_lambda: int = 5, tol: float = 1e-9) -> BruteForceResult:
    """Search random ensembles within the TV budget for violations of ``2 + 6 delta``."""
    delta = _check_unit("delta", delta)
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    ens = random_ensembles(delta, trials, rng, n_lambda)
    s = worst_case_S(ens)
    bound = 2.0 + 6.0 * delta
    return BruteForceResult(
        delta=delta,
        bound=bound,
        trials=trials,
        worst_S=float(s.max()),
        max_tv=float(max_pairwise_tv_contexts(ens).max()),
        violations=int(np.count_nonzero(s > bound + tol)),
    )
