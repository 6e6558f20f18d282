"""Drift statistics, Monte-Carlo nulls and no-signaling diagnostics."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .contexts import CONTEXTS, normalize_context
from .errors import ValidationError

DEFAULT_NULL_TRIALS = 1000
# trials are generated in fixed-size blocks, each with its own derived seed,
# so results do not depend on how blocks are spread over workers
NULL_BLOCK_SIZE = 128


# ---------------------------------------------------------------------------
# binned data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinnedCounts:
    """Integer outcome counts per context and temporal bin.

    ``counts[c]`` has shape ``(n_bins_c, 4)`` with rows ordered like
    ``bins[c]`` (1-based bin labels, ascending).
    """

    counts: Mapping[str, np.ndarray]
    bins: Mapping[str, tuple[int, ...]]
    shots_per_bin: int

    def __post_init__(self):
        if int(self.shots_per_bin) < 1:
            raise ValidationError(f"shots_per_bin must be >= 1 (bins with zero shots), got {self.shots_per_bin}")
        counts, bins = {}, {}
        for c in self.counts:
            key = normalize_context(c)
            arr = np.asarray(self.counts[c])
            if arr.ndim != 2 or arr.shape[1] != 4:
                raise ValidationError(f"counts for {key} must have shape (n_bins, 4), got {arr.shape}")
            if np.any(arr < 0) or not np.all(arr == np.round(arr)):
                raise ValidationError(f"counts for {key} must be non-negative integers")
            arr = arr.astype(np.int64)
            labels = tuple(int(b) for b in self.bins[c])
            if len(labels) != arr.shape[0]:
                raise ValidationError(f"{key}: {len(labels)} bin labels for {arr.shape[0]} rows")
            totals = arr.sum(axis=1)
            bad = np.nonzero(totals != self.shots_per_bin)[0]
            if bad.size:
                i = int(bad[0])
                raise ValidationError(
                    f"({key}, bin {labels[i]}) sums to {int(totals[i])}, expected {self.shots_per_bin}"
                )
            arr.setflags(write=False)
            counts[key] = arr
            bins[key] = labels
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bins", bins)

    @classmethod
    def from_cells(cls, cells: Mapping[str, Mapping[int, np.ndarray]], shots_per_bin: int) -> "BinnedCounts":
        counts, bins = {}, {}
        for c, per_bin in cells.items():
            labels = tuple(sorted(per_bin))
            bins[c] = labels
            counts[c] = np.array([per_bin[b] for b in labels]).reshape(len(labels), 4)
        return cls(counts, bins, shots_per_bin)

    @property
    def contexts(self) -> tuple[str, ...]:
        return tuple(c for c in CONTEXTS if c in self.counts)

    def frequencies(self) -> dict[str, np.ndarray]:
        return {c: self.counts[c] / float(self.shots_per_bin) for c in self.contexts}

    def pooled(self) -> dict[str, np.ndarray]:
        """Per-context distribution aggregated over all bins."""
        out = {}
        for c in self.contexts:
            tot = self.counts[c].sum(axis=0)
            out[c] = tot / tot.sum()
        return out

    def aggregated(self) -> dict[str, np.ndarray]:
        return {c: self.counts[c].sum(axis=0) for c in self.contexts}

    def to_records(self, experiment_id: str = "run") -> list[dict]:
        rows = []
        for c in self.contexts:
            for b, row in zip(self.bins[c], self.counts[c]):
                rows.append(
                    {
                        "experiment_id": experiment_id,
                        "context": c,
                        "bin": int(b),
                        "counts": [int(v) for v in row],
                        "shots": int(self.shots_per_bin),
                    }
                )
        return rows


@dataclass(frozen=True)
class BinnedFrequencies:
    """Per-bin outcome distributions, e.g. after readout mitigation."""

    probs: Mapping[str, np.ndarray]
    bins: Mapping[str, tuple[int, ...]]
    shots_per_bin: int
    clipped: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def contexts(self) -> tuple[str, ...]:
        return tuple(c for c in CONTEXTS if c in self.probs)

    def frequencies(self) -> dict[str, np.ndarray]:
        return {c: np.asarray(self.probs[c], dtype=float) for c in self.contexts}

    def pooled(self) -> dict[str, np.ndarray]:
        return {c: np.asarray(self.probs[c]).mean(axis=0) for c in self.contexts}

    def aggregated(self) -> dict[str, np.ndarray]:
        """Effective (non-integer) counts: frequencies times shots."""
        return {c: np.asarray(self.probs[c]).sum(axis=0) * self.shots_per_bin for c in self.contexts}


# ---------------------------------------------------------------------------
# total variation and delta_op
# ---------------------------------------------------------------------------


def tv_distance(p, q) -> float:
    """Total-variation distance ``0.5 * sum |p_i - q_i|``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError(f"support sizes differ: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValidationError(f"{name} sums to {v.sum()}, not 1")
    return float(0.5 * np.abs(p - q).sum())


def max_pairwise_tv(freqs: np.ndarray) -> np.ndarray:
    """Max TV over bin pairs; ``freqs`` has shape ``(..., K, n_outcomes)``."""
    f = np.asarray(freqs, dtype=float)
    if f.shape[-2] < 2:
        return np.zeros(f.shape[:-2])
    diff = np.abs(f[..., :, None, :] - f[..., None, :, :]).sum(axis=-1)
    return 0.5 * diff.max(axis=(-1, -2))


@dataclass
class DriftReport:
    delta_op: dict[str, float]
    delta_op_global: float
    null_mean: dict[str, float] | None = None
    null_std: dict[str, float] | None = None
    p_value: dict[str, float] | None = None
    null_mean_global: float | None = None
    null_std_global: float | None = None
    null_q99_global: float | None = None
    null_central95_global: tuple[float, float] | None = None
    p_value_global: float | None = None
    num_null_trials: int = 0
    observed_std: dict[str, float] | None = None
    observed_std_global: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


def _freqs_of(binned) -> dict[str, np.ndarray]:
    if isinstance(binned, Mapping):
        return {normalize_context(c): np.asarray(v, dtype=float) for c, v in binned.items()}
    return binned.frequencies()


def delta_op(binned) -> DriftReport:
    """Per-context max pairwise TV between bin distributions, and the global max."""
    freqs = _freqs_of(binned)
    per = {}
    for c, f in freqs.items():
        if f.shape[0] < 2:
            raise ValidationError(f"{c}: drift statistics need at least 2 bins, got {f.shape[0]}")
        per[c] = float(max_pairwise_tv(f))
    return DriftReport(per, max(per.values()))


# ---------------------------------------------------------------------------
# Monte-Carlo null
# ---------------------------------------------------------------------------


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(2**63)))
    if seed is None:
        raise ValidationError("a seed is required")
    return np.random.SeedSequence(seed)


def child_seed(root: np.random.SeedSequence, index: int) -> np.random.SeedSequence:
    """Child ``index`` of ``root`` without mutating ``root`` (unlike ``spawn``)."""
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + (index,))


def _block_rng(root: np.random.SeedSequence, block: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(root, block))


@dataclass
class NullSample:
    per_context: dict[str, np.ndarray]
    global_: np.ndarray

    @property
    def trials(self) -> int:
        return int(self.global_.size)


def mc_null(
    shots_per_bin: int,
    num_bins: int | Mapping[str, int],
    pooled: Mapping[str, np.ndarray],
    trials: int,
    seed,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
    workers: int = 1,
) -> NullSample:
    """Null distribution of delta_op from IID multinomial resampling.

    Each trial draws ``num_bins`` bins of ``shots_per_bin`` shots per context
    from that context's pooled distribution. ``transform`` (if given) maps
    sampled frequency arrays of shape ``(..., 4)`` before the statistic is
    taken, e.g. per-bin readout mitigation.
    """
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if shots_per_bin < 1:
        raise ValidationError(f"shots_per_bin must be >= 1, got {shots_per_bin}")
    ctxs = [normalize_context(c) for c in pooled]
    probs = {}
    for c, key in zip(ctxs, pooled):
        p = np.asarray(pooled[key], dtype=float)
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"pooled distribution for {c} is not on the simplex")
        p = np.clip(p, 0.0, None)
        probs[c] = p / p.sum()
    ks = {c: int(num_bins[c] if isinstance(num_bins, Mapping) else num_bins) for c in ctxs}
    root = _seed_sequence(seed)
    n_blocks = -(-trials // NULL_BLOCK_SIZE)

    def run_block(b: int) -> dict[str, np.ndarray]:
        n = min(NULL_BLOCK_SIZE, trials - b * NULL_BLOCK_SIZE)
        rng = _block_rng(root, b)
        out = {}
        for c in ctxs:
            f = rng.multinomial(shots_per_bin, probs[c], size=(n, ks[c])) / float(shots_per_bin)
            if transform is not None:
                f = transform(f)
            out[c] = max_pairwise_tv(f)
        return out

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(run_block, range(n_blocks)))
    else:
        blocks = [run_block(b) for b in range(n_blocks)]
    per = {c: np.concatenate([blk[c] for blk in blocks]) for c in ctxs}
    glob = np.max(np.vstack([per[c] for c in ctxs]), axis=0)
    return NullSample(per, glob)


def p_value(observed: float, null_sample) -> float:
    """One-sided add-one Monte-Carlo p-value ``(1 + #{null >= obs}) / (1 + n)``."""
    null = np.asarray(null_sample, dtype=float).reshape(-1)
    if null.size == 0:
        raise ValidationError("null sample is empty")
    exceed = int(np.count_nonzero(null >= observed - 1e-12))
    return (1.0 + exceed) / (1.0 + null.size)


def significance_stars(p: float) -> str:
    if p < 1e-3:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def drift_test(
    binned,
    trials: int = DEFAULT_NULL_TRIALS,
    seed=0,
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
    pooled: Mapping[str, np.ndarray] | None = None,
    bootstrap: int = 0,
) -> DriftReport:
    """delta_op with MC-null p-values (and optionally bootstrap error bars).

    ``pooled`` overrides the resampling distributions; by default the
    per-context pooled empirical distribution of ``binned`` is used.
    """
    report = delta_op(binned)
    root = _seed_sequence(seed)
    null_seed, boot_seed = child_seed(root, 0), child_seed(root, 1)
    pooled = binned.pooled() if pooled is None else pooled
    ks = {c: len(binned.bins[c]) for c in binned.contexts}
    null = mc_null(binned.shots_per_bin, ks, pooled, trials, null_seed, transform=transform)
    report.null_mean = {c: float(v.mean()) for c, v in null.per_context.items()}
    report.null_std = {c: float(v.std(ddof=1)) if v.size > 1 else 0.0 for c, v in null.per_context.items()}
    report.p_value = {c: p_value(report.delta_op[c], null.per_context[c]) for c in report.delta_op}
    report.null_mean_global = float(null.global_.mean())
    report.null_std_global = float(null.global_.std(ddof=1)) if trials > 1 else 0.0
    report.null_q99_global = float(np.quantile(null.global_, 0.99))
    lo, hi = np.quantile(null.global_, [0.025, 0.975])
    report.null_central95_global = (float(lo), float(hi))
    report.p_value_global = p_value(report.delta_op_global, null.global_)
    report.num_null_trials = trials
    if bootstrap and isinstance(binned, BinnedCounts):
        per_std, glob_std = bootstrap_delta_op_std(binned, bootstrap, boot_seed)
        report.observed_std = per_std
        report.observed_std_global = glob_std
    return report


def bootstrap_delta_op_std(binned: BinnedCounts, n_boot: int, seed) -> tuple[dict[str, float], float]:
    """Std of delta_op under multinomial resampling of each bin from its own frequencies."""
    rng = np.random.default_rng(_seed_sequence(seed))
    n = binned.shots_per_bin
    per = {}
    for c, f in binned.frequencies().items():
        draws = np.stack([rng.multinomial(n, row, size=n_boot) for row in f], axis=1) / float(n)
        per[c] = max_pairwise_tv(draws)
    glob = np.max(np.vstack(list(per.values())), axis=0)
    return {c: float(v.std(ddof=1)) for c, v in per.items()}, float(glob.std(ddof=1))


def context_divergence(binned) -> tuple[float, tuple[str, str] | None]:
    """Observable-level divergence: max pairwise TV of pooled context distributions.

    Different contexts are different measurement channels, so this is a
    descriptive statistic, not an estimate of the lambda-level divergence.
    """
    pooled = binned.pooled() if not isinstance(binned, Mapping) else binned
    best, pair = 0.0, None
    for a, b in itertools.combinations(list(pooled), 2):
        d = 0.5 * float(np.abs(np.asarray(pooled[a]) - np.asarray(pooled[b])).sum())
        if d > best:
            best, pair = d, (a, b)
    return best, pair


# ---------------------------------------------------------------------------
# no-signaling diagnostics
# ---------------------------------------------------------------------------


def marginals(context_counts) -> tuple[np.ndarray, np.ndarray]:
    """One-party marginal frequencies ``(P_A, P_B)`` from 4-outcome counts."""
    c = np.asarray(context_counts, dtype=float).reshape(2, 2)
    total = c.sum()
    if total <= 0:
        raise ValidationError("marginals need a nonzero shot total")
    return c.sum(axis=1) / total, c.sum(axis=0) / total


def normal_sf_two_sided(z: float) -> float:
    """Two-sided normal tail probability ``P(|Z| >= |z|)``."""
    return math.erfc(abs(z) / math.sqrt(2.0))


def two_proportion_z(s1: float, n1: float, s2: float, n2: float) -> tuple[float, float]:
    """Pooled two-proportion z statistic and two-sided p-value.

    A degenerate pooled proportion (0 or 1) means both samples agree
    exactly; that is reported as ``z = 0, p = 1``.
    """
    if n1 <= 0 or n2 <= 0:
        raise ValidationError("two-proportion test needs positive sample sizes")
    p1, p2 = s1 / n1, s2 / n2
    pp = (s1 + s2) / (n1 + n2)
    var = pp * (1.0 - pp) * (1.0 / n1 + 1.0 / n2)
    if var <= 0.0:
        return 0.0, 1.0 if p1 == p2 else 0.0
    z = (p1 - p2) / math.sqrt(var)
    return z, normal_sf_two_sided(z)


@dataclass
class NoSignalingReport:
    max_abs_marginal_deviation: float
    min_p: float
    min_p_bonferroni: float
    comparisons: list[dict]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# (party, fixed setting, context 1, context 2)
_NS_COMPARISONS = (
    ("A", "x", "xy", "xy'"),
    ("A", "x'", "x'y", "x'y'"),
    ("B", "y", "xy", "x'y"),
    ("B", "y'", "xy'", "x'y'"),
)


def no_signaling_test(context_counts: Mapping[str, np.ndarray]) -> NoSignalingReport:
    """Four marginal-consistency comparisons with pooled two-proportion z-tests.

    ``context_counts`` maps each context to its aggregated 4-outcome counts
    (effective, possibly non-integer, counts are accepted for mitigated data).
    """
    data = {normalize_context(c): np.asarray(v, dtype=float) for c, v in context_counts.items()}
    missing = [c for c in CONTEXTS if c not in data]
    if missing:
        raise ValidationError(f"no-signaling test needs all four contexts; missing {missing}")
    comparisons = []
    for party, setting, c1, c2 in _NS_COMPARISONS:
        n1, n2 = data[c1].sum(), data[c2].sum()
        if n1 <= 0 or n2 <= 0:
            raise ValidationError(f"zero shot total in {c1} or {c2}")
        axis = 1 if party == "A" else 0
        s1 = data[c1].reshape(2, 2).sum(axis=axis)[0]
        s2 = data[c2].reshape(2, 2).sum(axis=axis)[0]
        z, p = two_proportion_z(s1, n1, s2, n2)
        comparisons.append(
            {
                "party": party,
                "setting": setting,
                "contexts": (c1, c2),
                "p1": float(s1 / n1),
                "p2": float(s2 / n2),
                "abs_delta": float(abs(s1 / n1 - s2 / n2)),
                "z": float(z),
                "p": float(p),
            }
        )
    min_p = min(c["p"] for c in comparisons)
    return NoSignalingReport(
        max_abs_marginal_deviation=max(c["abs_delta"] for c in comparisons),
        min_p=min_p,
        min_p_bonferroni=min(1.0, 4.0 * min_p),
        comparisons=comparisons,
    )
