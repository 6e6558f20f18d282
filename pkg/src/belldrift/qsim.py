"""Two-qubit pure-state simulator for singlet CHSH experiments.

Amplitudes are indexed ``|q_A q_B>`` in the order ``00, 01, 10, 11``.
Noise is folded in at the probability level: depolarizing mixing first,
then an optional readout assignment matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .contexts import CONTEXTS, PARITY
from .errors import ValidationError

NORM_TOL = 1e-9

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
# +1 for |0>, -1 for |1>, per two-qubit basis index
_Z_A = np.array([1, 1, -1, -1])
_Z_B = np.array([1, -1, 1, -1])


@dataclass(frozen=True)
class TwoQubitState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amp.shape != (4,):
            raise ValidationError(f"two-qubit state needs 4 amplitudes, got {amp.shape}")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


class AxisKind(str, Enum):
    X = "X"
    Y = "Y"
    Z = "Z"
    PLANE_XZ = "XZ"


def _wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    wrapped = math.remainder(theta, 2 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2 * math.pi
    return wrapped


@dataclass(frozen=True)
class MeasurementAxis:
    """A single-qubit measurement direction.

    ``PLANE_XZ`` axes are at ``angle`` from +Z toward +X.
    """

    kind: AxisKind
    angle: float = 0.0

    def __post_init__(self):
        kind = AxisKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is AxisKind.PLANE_XZ:
            if not math.isfinite(self.angle):
                raise ValidationError(f"axis angle must be finite, got {self.angle}")
            object.__setattr__(self, "angle", _wrap_angle(float(self.angle)))
        else:
            object.__setattr__(self, "angle", 0.0)

    @classmethod
    def plane_xz(cls, angle: float) -> "MeasurementAxis":
        return cls(AxisKind.PLANE_XZ, angle)

    def rotation(self) -> np.ndarray:
        """Unitary mapping this axis onto Z before computational readout."""
        if self.kind is AxisKind.Z:
            return np.eye(2, dtype=complex)
        if self.kind is AxisKind.X:
            return _H
        if self.kind is AxisKind.Y:
            return _H @ _SDG
        # R_Y(-theta)
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        return np.array([[c, s], [-s, c]], dtype=complex)

    def label(self) -> str:
        if self.kind is AxisKind.PLANE_XZ:
            return f"XZ({self.angle:.6g})"
        return self.kind.value


PAULI_X = MeasurementAxis(AxisKind.X)
PAULI_Y = MeasurementAxis(AxisKind.Y)
PAULI_Z = MeasurementAxis(AxisKind.Z)

# x = X, x' = Z on qubit A; y = Y, y' = Z on qubit B
PAULI_CONTEXT_AXES: dict[str, tuple[MeasurementAxis, MeasurementAxis]] = {
    "xy": (PAULI_X, PAULI_Y),
    "xy'": (PAULI_X, PAULI_Z),
    "x'y": (PAULI_Z, PAULI_Y),
    "x'y'": (PAULI_Z, PAULI_Z),
}

# theta_A in {0, pi/2}, theta_B in {+pi/4, -pi/4}
CHSH_OPTIMAL_AXES: dict[str, tuple[MeasurementAxis, MeasurementAxis]] = {
    "xy": (MeasurementAxis.plane_xz(0.0), MeasurementAxis.plane_xz(math.pi / 4)),
    "xy'": (MeasurementAxis.plane_xz(0.0), MeasurementAxis.plane_xz(-math.pi / 4)),
    "x'y": (MeasurementAxis.plane_xz(math.pi / 2), MeasurementAxis.plane_xz(math.pi / 4)),
    "x'y'": (MeasurementAxis.plane_xz(math.pi / 2), MeasurementAxis.plane_xz(-math.pi / 4)),
}

AXES_SETS = {"pauli": PAULI_CONTEXT_AXES, "chsh_optimal": CHSH_OPTIMAL_AXES}


@dataclass(frozen=True)
class NoiseSpec:
    depolarizing_rate: float = 0.0
    assignment: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        r = float(self.depolarizing_rate)
        if not 0.0 <= r <= 1.0:
            raise ValidationError(f"depolarizing_rate must be in [0, 1], got {r}")
        object.__setattr__(self, "depolarizing_rate", r)
        if self.assignment is not None:
            m = np.asarray(getattr(self.assignment, "matrix", self.assignment), dtype=float)
            if m.shape != (4, 4):
                raise ValidationError(f"assignment matrix must be 4x4, got {m.shape}")
            if np.any(m < -1e-12) or not np.allclose(m.sum(axis=0), 1.0, atol=1e-9):
                raise ValidationError("assignment matrix must be column-stochastic")
            m = m.copy()
            m.setflags(write=False)
            object.__setattr__(self, "assignment", m)

    @property
    def is_noiseless(self) -> bool:
        return self.depolarizing_rate == 0.0 and self.assignment is None


NOISELESS = NoiseSpec()


@dataclass(frozen=True)
class PhaseDriftProfile:
    theta_max: float
    values: tuple[float, ...]

    @property
    def num_bins(self) -> int:
        return len(self.values)

    @classmethod
    def linear(cls, theta_max: float, num_bins: int) -> "PhaseDriftProfile":
        """Ramp from ``-theta_max`` to ``+theta_max`` in equal steps.

        A single bin carries no drift (theta = 0).
        """
        if num_bins < 1:
            raise ValidationError(f"num_bins must be >= 1, got {num_bins}")
        if not math.isfinite(theta_max):
            raise ValidationError("theta_max must be finite")
        if num_bins == 1:
            return cls(float(theta_max), (0.0,))
        vals = np.linspace(-theta_max, theta_max, num_bins)
        return cls(float(theta_max), tuple(float(v) for v in vals))


def prepare_singlet() -> TwoQubitState:
    """Return ``(|01> - |10>)/sqrt(2)``."""
    s = 1 / math.sqrt(2)
    return TwoQubitState(np.array([0.0, s, -s, 0.0], dtype=complex))


def _check_normalized(state: TwoQubitState) -> None:
    if abs(state.norm - 1.0) > NORM_TOL:
        raise ValidationError(f"state is not normalized (norm={state.norm!r})")


def apply_drift(state: TwoQubitState, theta: float) -> TwoQubitState:
    """Apply ``exp(-i theta Z_A) exp(+i theta Z_B)``."""
    phase = np.exp(-1j * theta * _Z_A) * np.exp(1j * theta * _Z_B)
    return TwoQubitState(state.amplitudes * phase)


def measure_joint(
    state: TwoQubitState,
    axis_a: MeasurementAxis,
    axis_b: MeasurementAxis,
    noise: NoiseSpec = NOISELESS,
) -> np.ndarray:
    """Outcome probabilities over ``00, 01, 10, 11`` for the given axes."""
    _check_normalized(state)
    u = np.kron(axis_a.rotation(), axis_b.rotation())
    probs = np.abs(u @ state.amplitudes) ** 2
    probs = probs / probs.sum()
    r = noise.depolarizing_rate
    if r:
        probs = (1.0 - r) * probs + r / 4.0
    if noise.assignment is not None:
        probs = noise.assignment @ probs
    return probs


def correlator_of(probs) -> float:
    """Expectation of the outcome product for a 4-outcome distribution."""
    return float(PARITY @ np.asarray(probs, dtype=float))


def context_distributions(
    theta: float,
    axes: dict[str, tuple[MeasurementAxis, MeasurementAxis]] = PAULI_CONTEXT_AXES,
    noise: NoiseSpec = NOISELESS,
) -> dict[str, np.ndarray]:
    """Distributions for all four contexts on the drifted singlet."""
    state = apply_drift(prepare_singlet(), theta)
    return {c: measure_joint(state, *axes[c], noise) for c in CONTEXTS}


def sample_counts(dist, shots: int, seed) -> np.ndarray:
    """Multinomial draw of ``shots`` outcomes from ``dist``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    p = np.asarray(dist, dtype=float)
    if shots < 1:
        raise ValidationError(f"shots must be >= 1, got {shots}")
    if np.any(p < -1e-12):
        raise ValidationError(f"negative probability in {p}")
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"distribution sums to {total}, not 1")
    rng = np.random.default_rng(seed)
    return rng.multinomial(shots, p / total)


def corrupt_counts(counts, noise: NoiseSpec, seed) -> np.ndarray:
    """Pass already-sampled outcome counts through ``noise`` shot by shot.

    Each shot with outcome ``x`` is redrawn from column ``x`` of the noise
    channel (depolarizing mixing, then the assignment matrix).
    """
    counts = np.asarray(counts, dtype=np.int64)
    if noise.is_noiseless:
        return counts.copy()
    r = noise.depolarizing_rate
    channel = (1.0 - r) * np.eye(4) + r / 4.0
    if noise.assignment is not None:
        channel = noise.assignment @ channel
    rng = np.random.default_rng(seed)
    out = np.zeros(4, dtype=np.int64)
    for x, n in enumerate(counts):
        if n:
            col = np.clip(channel[:, x], 0.0, None)
            out += rng.multinomial(int(n), col / col.sum())
    return out
