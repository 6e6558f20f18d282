"""Two-qubit readout calibration and linear-inversion mitigation.

``M[x, y] = P(measured x | prepared y)`` acts on column probability
vectors. Mitigation solves ``M q = p``, clips negative entries and
renormalises onto the simplex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ValidationError
from .qsim import NOISELESS, NoiseSpec

DEFAULT_KAPPA_MAX = 100.0
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class AssignmentMatrix:
    matrix: np.ndarray
    shots: int | None = None
    label: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ValidationError(f"assignment matrix must be 4x4, got {m.shape}")
        if np.any(m < -1e-12) or np.any(m > 1 + 1e-12):
            raise ValidationError("assignment matrix entries must lie in [0, 1]")
        sums = m.sum(axis=0)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise ValidationError(f"assignment matrix is not column-stochastic (column sums {sums})")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AssignmentMatrix":
        return cls(np.eye(4), label="identity")


def flip_matrix(eps: float) -> np.ndarray:
    """Single-qubit symmetric flip channel."""
    return np.array([[1 - eps, eps], [eps, 1 - eps]])


def tensored_flip(eps_a: float, eps_b: float | None = None) -> AssignmentMatrix:
    """Product of two independent symmetric flip channels (A is the left bit)."""
    eps_b = eps_a if eps_b is None else eps_b
    return AssignmentMatrix(np.kron(flip_matrix(eps_a), flip_matrix(eps_b)), label=f"flip({eps_a},{eps_b})")


def calibrate(source=NOISELESS, shots_per_basis_state: int | None = None, seed=None, label: str = "") -> AssignmentMatrix:
    """Estimate the assignment matrix.

    ``source`` is either a :class:`NoiseSpec` (each basis state is prepared
    and read out through it; ``shots_per_basis_state=None`` gives the exact
    infinite-shot matrix) or a 4x4 array of calibration counts whose
    column ``y`` holds the outcomes observed when ``|y>`` was prepared.
    """
    if isinstance(source, NoiseSpec):
        r = source.depolarizing_rate
        exact = (1 - r) * np.eye(4) + r / 4.0
        if source.assignment is not None:
            exact = source.assignment @ exact
        if shots_per_basis_state is None:
            return AssignmentMatrix(exact, None, label)
        if shots_per_basis_state < 1:
            raise ValidationError("shots_per_basis_state must be >= 1")
        rng = np.random.default_rng(seed)
        cols = [rng.multinomial(shots_per_basis_state, exact[:, y] / exact[:, y].sum()) for y in range(4)]
        return AssignmentMatrix(np.array(cols, dtype=float).T / shots_per_basis_state, shots_per_basis_state, label)
    counts = np.asarray(source, dtype=float)
    if counts.shape != (4, 4):
        raise ValidationError(f"calibration counts must be 4x4, got {counts.shape}")
    totals = counts.sum(axis=0)
    for y, t in enumerate(totals):
        if t <= 0:
            raise ValidationError(f"calibration column {y:02b} has zero total counts")
    shots = int(totals[0]) if np.all(totals == totals[0]) else None
    return AssignmentMatrix(counts / totals, shots, label)


def _as_array(m) -> np.ndarray:
    return np.asarray(getattr(m, "matrix", m), dtype=float)


def condition_number(m) -> float:
    """2-norm condition number; raises :class:`ConditioningError` if singular."""
    s = np.linalg.svd(_as_array(m), compute_uv=False)
    if s[-1] < SINGULAR_TOL:
        raise ConditioningError("assignment matrix is singular (non-invertible)", kappa=float("inf"))
    return float(s[0] / s[-1])


def check_conditioning(m, kappa_max: float = DEFAULT_KAPPA_MAX) -> float:
    kappa = condition_number(m)
    if kappa > kappa_max:
        raise ConditioningError(f"condition number {kappa:.4g} exceeds the gate {kappa_max:g}", kappa=kappa)
    return kappa


@dataclass(frozen=True)
class MitigationResult:
    probs: np.ndarray
    clipped: bool
    unconstrained: np.ndarray


def _repair(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clip negatives to zero and renormalise along the last axis."""
    clipped = np.any(q < 0.0, axis=-1)
    q = np.clip(q, 0.0, None)
    s = q.sum(axis=-1, keepdims=True)
    if np.any(s <= 0.0):
        raise ConditioningError("mitigated vector has no positive mass")
    return q / s, clipped


def mitigate(raw, m, kappa_max: float = DEFAULT_KAPPA_MAX) -> MitigationResult:
    """Mitigate one 4-outcome count or frequency vector."""
    p = np.asarray(raw, dtype=float)
    if p.shape != (4,):
        raise ValidationError(f"expected 4 outcomes, got shape {p.shape}")
    total = p.sum()
    if total <= 0 or np.any(p < 0):
        raise ValidationError("raw counts must be non-negative with a positive total")
    check_conditioning(m, kappa_max)
    q = np.linalg.solve(_as_array(m), p / total)
    probs, clipped = _repair(q)
    return MitigationResult(probs, bool(clipped), q)


def mitigate_array(freqs, m, kappa_max: float = DEFAULT_KAPPA_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`mitigate` over frequency arrays of shape ``(..., 4)``."""
    f = np.asarray(freqs, dtype=float)
    check_conditioning(m, kappa_max)
    flat = f.reshape(-1, 4)
    q = np.linalg.solve(_as_array(m), flat.T).T
    probs, clipped = _repair(q)
    return probs.reshape(f.shape), clipped.reshape(f.shape[:-1])


def mitigation_transform(m, kappa_max: float = DEFAULT_KAPPA_MAX):
    """Callable suitable for ``stats.mc_null(transform=...)``."""
    check_conditioning(m, kappa_max)

    def transform(freqs):
        return mitigate_array(freqs, m, kappa_max)[0]

    return transform


def mitigate_binned(binned, m, kappa_max: float = DEFAULT_KAPPA_MAX):
    """Apply mitigation independently to every (context, bin) cell."""
    from .stats import BinnedFrequencies

    check_conditioning(m, kappa_max)
    probs, clipped = {}, {}
    for c, f in binned.frequencies().items():
        rows, flags = [], []
        for b, row in zip(binned.bins[c], f):
            try:
                res = mitigate(row, m, kappa_max)
            except ConditioningError as exc:
                raise ConditioningError(f"({c}, bin {b}): {exc}", kappa=exc.kappa) from exc
            except ValidationError as exc:
                raise ValidationError(f"({c}, bin {b}): {exc}") from exc
            rows.append(res.probs)
            flags.append(res.clipped)
        probs[c] = np.array(rows)
        clipped[c] = np.array(flags)
    return BinnedFrequencies(probs, dict(binned.bins), binned.shots_per_bin, clipped)


def calibration_drift(reference, other) -> dict[str, float]:
    """Frobenius and max-entry change between two calibration snapshots."""
    a, b = _as_array(reference), _as_array(other)
    d = b - a
    return {
        "frobenius": float(np.linalg.norm(d, "fro")),
        "max_abs_entry": float(np.abs(d).max()),
        "kappa_reference": condition_number(a),
        "kappa_other": condition_number(b),
    }
