import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from belldrift import qsim
from belldrift.errors import ValidationError
from belldrift.qsim import (
    CHSH_OPTIMAL_AXES,
    PAULI_CONTEXT_AXES,
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    MeasurementAxis,
    NoiseSpec,
    PhaseDriftProfile,
    TwoQubitState,
)

from oracles import SINGLET, drift_unitary, expectation, joint_probs, singlet_from_circuit, spin_operator

angles = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


def _oracle_op(axis):
    return spin_operator(axis.kind.value, axis.angle)


class TestPrepareSinglet:
    def test_amplitudes(self):
        psi = qsim.prepare_singlet()
        s = 1 / math.sqrt(2)
        np.testing.assert_allclose(psi.amplitudes, [0, s, -s, 0], atol=1e-15)

    def test_matches_circuit_construction(self):
        np.testing.assert_allclose(qsim.prepare_singlet().amplitudes, singlet_from_circuit(), atol=1e-15)

    def test_norm(self):
        assert qsim.prepare_singlet().norm == pytest.approx(1.0, abs=1e-15)

    def test_zz_anticorrelation(self):
        p = qsim.measure_joint(qsim.prepare_singlet(), PAULI_Z, PAULI_Z)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-15)

    def test_rejects_wrong_size(self):
        with pytest.raises(ValidationError):
            TwoQubitState(np.ones(3))


class TestApplyDrift:
    def test_zero_is_identity(self):
        psi = qsim.prepare_singlet()
        np.testing.assert_allclose(qsim.apply_drift(psi, 0.0).amplitudes, psi.amplitudes)

    @given(theta=st.floats(min_value=-3, max_value=3))
    @settings(max_examples=50, deadline=None)
    def test_zz_populations_phase_invariant(self, theta):
        p = qsim.measure_joint(qsim.apply_drift(qsim.prepare_singlet(), theta), PAULI_Z, PAULI_Z)
        np.testing.assert_allclose(p, [0, 0.5, 0.5, 0], atol=1e-12)

    def test_matches_matrix_exponential(self):
        for theta in np.linspace(-1, 1, 21):
            got = qsim.apply_drift(qsim.prepare_singlet(), theta).amplitudes
            np.testing.assert_allclose(got, drift_unitary(theta) @ SINGLET, atol=1e-12)

    def test_xx_correlator_against_statevector(self):
        theta = 0.1
        psi = qsim.apply_drift(qsim.prepare_singlet(), theta)
        e = qsim.correlator_of(qsim.measure_joint(psi, PAULI_X, PAULI_X))
        oracle = expectation(drift_unitary(theta) @ SINGLET, spin_operator("X"), spin_operator("X"))
        assert e == pytest.approx(oracle, abs=1e-12)
        assert e != pytest.approx(-1.0, abs=1e-3)

    def test_unitarity_random_states(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            v = rng.normal(size=4) + 1j * rng.normal(size=4)
            v /= np.linalg.norm(v)
            theta = rng.uniform(-10, 10)
            out = qsim.apply_drift(TwoQubitState(v), theta)
            assert abs(out.norm - 1.0) < 1e-12


class TestMeasureJoint:
    def test_sums_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            psi = qsim.apply_drift(qsim.prepare_singlet(), rng.uniform(-1, 1))
            a = MeasurementAxis.plane_xz(rng.uniform(-4, 4))
            b = MeasurementAxis.plane_xz(rng.uniform(-4, 4))
            noise = NoiseSpec(rng.uniform(0, 1))
            assert qsim.measure_joint(psi, a, b, noise).sum() == pytest.approx(1.0, abs=1e-12)

    def test_optimal_angle_correlator(self):
        p = qsim.measure_joint(qsim.prepare_singlet(), MeasurementAxis.plane_xz(0.0),
                               MeasurementAxis.plane_xz(math.pi / 4))
        assert qsim.correlator_of(p) == pytest.approx(-math.cos(math.pi / 4), abs=1e-12)

    def test_full_depolarizing_is_uniform(self):
        p = qsim.measure_joint(qsim.prepare_singlet(), PAULI_X, PAULI_Y, NoiseSpec(1.0))
        np.testing.assert_allclose(p, [0.25] * 4, atol=1e-15)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValidationError):
            qsim.measure_joint(TwoQubitState([1, 1, 0, 0]), PAULI_Z, PAULI_Z)

    def test_tolerates_tiny_norm_error(self):
        v = qsim.prepare_singlet().amplitudes * (1 + 1e-11)
        qsim.measure_joint(TwoQubitState(v), PAULI_Z, PAULI_Z)

    @pytest.mark.parametrize("axes", [PAULI_CONTEXT_AXES, CHSH_OPTIMAL_AXES])
    def test_distributions_match_eigenprojector_oracle(self, axes):
        for theta in np.linspace(-0.3, 0.3, 7):
            psi = drift_unitary(theta) @ SINGLET
            dists = qsim.context_distributions(theta, axes)
            for c, (a, b) in axes.items():
                np.testing.assert_allclose(dists[c], joint_probs(psi, _oracle_op(a), _oracle_op(b)), atol=1e-12)

    def test_singlet_isotropy_grid(self):
        psi = qsim.prepare_singlet()
        for alpha, beta in zip(np.linspace(-math.pi, math.pi, 100), np.linspace(2.0, -2.5, 100)):
            e = qsim.correlator_of(
                qsim.measure_joint(psi, MeasurementAxis.plane_xz(alpha), MeasurementAxis.plane_xz(beta))
            )
            assert abs(e + math.cos(alpha - beta)) < 1e-10

    def test_zz_correlator_minus_one_for_all_drift(self):
        for theta in np.linspace(-math.pi, math.pi, 100):
            d = qsim.context_distributions(theta)
            assert qsim.correlator_of(d["x'y'"]) == -1.0

    def test_xy_correlator_follows_sin_4theta(self):
        # +/- sign depends on the Y rotation convention; the magnitude does not
        for theta in np.linspace(-0.3, 0.3, 13):
            e = qsim.correlator_of(qsim.context_distributions(theta)["xy"])
            assert abs(abs(e) - abs(math.sin(4 * theta))) < 1e-12

    def test_linearity_over_mixtures(self):
        # the outcome map is linear in the density operator
        rng = np.random.default_rng(3)
        a, b = MeasurementAxis.plane_xz(0.3), PAULI_Y
        u = np.kron(a.rotation(), b.rotation())
        for _ in range(50):
            v1 = rng.normal(size=4) + 1j * rng.normal(size=4)
            v2 = rng.normal(size=4) + 1j * rng.normal(size=4)
            v1, v2 = v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2)
            w = rng.uniform()
            rho = w * np.outer(v1, v1.conj()) + (1 - w) * np.outer(v2, v2.conj())
            from_rho = np.real(np.diag(u @ rho @ u.conj().T))
            mix = w * qsim.measure_joint(TwoQubitState(v1), a, b) + (1 - w) * qsim.measure_joint(TwoQubitState(v2), a, b)
            np.testing.assert_allclose(mix, from_rho, atol=1e-12)

    def test_depolarizing_monotone_toward_uniform(self):
        psi = qsim.prepare_singlet()
        rates = np.linspace(0, 1, 21)
        tvs = [0.5 * np.abs(qsim.measure_joint(psi, PAULI_Z, PAULI_Z, NoiseSpec(r)) - 0.25).sum() for r in rates]
        assert all(x > y for x, y in zip(tvs, tvs[1:]))

    def test_assignment_applied_last(self):
        m = np.array([[0.9, 0.1, 0, 0], [0.1, 0.9, 0, 0], [0, 0, 0.8, 0.2], [0, 0, 0.2, 0.8]])
        psi = qsim.prepare_singlet()
        base = qsim.measure_joint(psi, PAULI_Z, PAULI_Z, NoiseSpec(0.2))
        got = qsim.measure_joint(psi, PAULI_Z, PAULI_Z, NoiseSpec(0.2, m))
        np.testing.assert_allclose(got, m @ base)


class TestMeasurementAxis:
    @given(angle=st.floats(min_value=-50, max_value=50))
    def test_angle_wrapped(self, angle):
        ax = MeasurementAxis.plane_xz(angle)
        assert -math.pi < ax.angle <= math.pi
        assert math.cos(ax.angle) == pytest.approx(math.cos(angle), abs=1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            MeasurementAxis.plane_xz(float("nan"))

    @given(angle=angles)
    @settings(max_examples=50)
    def test_rotation_maps_axis_to_z(self, angle):
        ax = MeasurementAxis.plane_xz(angle)
        r = ax.rotation()
        np.testing.assert_allclose(r @ _oracle_op(ax) @ r.conj().T, spin_operator("Z"), atol=1e-12)

    @pytest.mark.parametrize("axis", [PAULI_X, PAULI_Y, PAULI_Z])
    def test_pauli_rotations(self, axis):
        r = axis.rotation()
        np.testing.assert_allclose(r @ _oracle_op(axis) @ r.conj().T, spin_operator("Z"), atol=1e-12)


class TestNoiseSpec:
    def test_rate_bounds(self):
        with pytest.raises(ValidationError):
            NoiseSpec(1.5)
        with pytest.raises(ValidationError):
            NoiseSpec(-0.1)

    def test_assignment_must_be_column_stochastic(self):
        with pytest.raises(ValidationError):
            NoiseSpec(0.0, np.full((4, 4), 0.3))

    def test_noiseless(self):
        assert qsim.NOISELESS.is_noiseless
        assert not NoiseSpec(0.1).is_noiseless


class TestPhaseDriftProfile:
    def test_linear_endpoints(self):
        prof = PhaseDriftProfile.linear(0.1, 6)
        assert prof.values[0] == -0.1 and prof.values[-1] == 0.1
        assert len(prof.values) == 6

    def test_single_bin_is_zero(self):
        assert PhaseDriftProfile.linear(0.1, 1).values == (0.0,)

    def test_rejects_zero_bins(self):
        with pytest.raises(ValidationError):
            PhaseDriftProfile.linear(0.1, 0)


class TestSampleCounts:
    def test_degenerate(self):
        np.testing.assert_array_equal(qsim.sample_counts([1, 0, 0, 0], 100, 1), [100, 0, 0, 0])

    def test_binomial_moments(self):
        n = 10**6
        c = qsim.sample_counts([0.25] * 4, n, 42)
        sigma = math.sqrt(n * 0.25 * 0.75)
        assert np.all(np.abs(c - n / 4) < 5 * sigma)
        assert c.sum() == n

    def test_deterministic(self):
        a = qsim.sample_counts([0.1, 0.2, 0.3, 0.4], 5000, 9)
        b = qsim.sample_counts([0.1, 0.2, 0.3, 0.4], 5000, 9)
        np.testing.assert_array_equal(a, b)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            qsim.sample_counts([1.1, -0.1, 0, 0], 10, 0)

    def test_tiny_negative_tolerated(self):
        c = qsim.sample_counts([1.0 + 1e-13, -1e-13, 0, 0], 10, 0)
        assert c[0] == 10

    def test_rejects_zero_shots(self):
        with pytest.raises(ValidationError):
            qsim.sample_counts([1, 0, 0, 0], 0, 0)


class TestCorruptCounts:
    def test_noiseless_passthrough(self):
        c = np.array([10, 20, 30, 40])
        np.testing.assert_array_equal(qsim.corrupt_counts(c, qsim.NOISELESS, 0), c)

    def test_preserves_total_and_mean(self):
        m = qsim.NoiseSpec(0.0, np.kron([[0.9, 0.1], [0.1, 0.9]], [[0.95, 0.05], [0.05, 0.95]]))
        c = np.array([200000, 0, 0, 0])
        out = qsim.corrupt_counts(c, m, 4)
        assert out.sum() == c.sum()
        np.testing.assert_allclose(out / c.sum(), m.assignment[:, 0], atol=5e-3)
