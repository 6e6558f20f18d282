"""Independent reference computations used as test oracles.

None of these call into the package's numerical code; they rebuild the
quantities from first principles (eigenprojectors, literal tables, loops).
"""

import itertools
import math

import numpy as np
from scipy.linalg import expm

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

# basis order |q_A q_B>: 00, 01, 10, 11
SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


def singlet_from_circuit():
    """|1 1> -> H on A -> CNOT(A->B) -> Z on A gives (|01> - |10>)/sqrt2."""
    h = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0  # |01>
    psi = np.kron(h, I2) @ psi
    psi = cnot @ psi
    return np.kron(Z, I2) @ psi


def drift_unitary(theta):
    return expm(-1j * theta * np.kron(Z, I2)) @ expm(1j * theta * np.kron(I2, Z))


def spin_operator(kind, angle=0.0):
    if kind == "X":
        return X
    if kind == "Y":
        return Y
    if kind == "Z":
        return Z
    # angle from +Z toward +X
    return math.cos(angle) * Z + math.sin(angle) * X


def _eigen_projectors(op):
    vals, vecs = np.linalg.eigh(op)
    plus = vecs[:, np.argmax(vals)]
    minus = vecs[:, np.argmin(vals)]
    return plus, minus  # bit 0 = +1, bit 1 = -1


def joint_probs(psi, op_a, op_b):
    pa, pb = _eigen_projectors(op_a), _eigen_projectors(op_b)
    out = np.zeros(4)
    for i, j in itertools.product(range(2), repeat=2):
        out[2 * i + j] = abs(np.vdot(np.kron(pa[i], pb[j]), psi)) ** 2
    return out


def expectation(psi, op_a, op_b):
    return float(np.real(np.vdot(psi, np.kron(op_a, op_b) @ psi)))


# Response table and time-resolved ensembles, written out by hand
LHV_RESPONSES = {
    # lambda: (A(x), A(x'), B(y), B(y'))
    1: (+1, +1, +1, +1),
    2: (+1, -1, +1, +1),
    3: (+1, +1, +1, -1),
    4: (+1, -1, -1, +1),
    5: (+1, +1, +1, +1),
}


def lhv_ensemble(context, p):
    table = {
        "xy": [p, p, p, 0, 1 - 3 * p],
        "xy'": [p, p, 0, p, 1 - 3 * p],
        "x'y": [p, 0, p, p, 1 - 3 * p],
        "x'y'": [0, p, p, p, 1 - 3 * p],
    }
    return table[context]


def lhv_correlator(context, p):
    ia = 0 if context.startswith("x'") is False else 1
    ib = 2 if context.endswith("y") else 3
    ens = lhv_ensemble(context, p)
    total = 0.0
    for j in range(1, 6):
        r = LHV_RESPONSES[j]
        total += ens[j - 1] * r[ia] * r[ib]
    return total


def lhv_outcome_distribution(context, p):
    ia = 0 if context.startswith("x'") is False else 1
    ib = 2 if context.endswith("y") else 3
    ens = lhv_ensemble(context, p)
    out = [0.0] * 4
    for j in range(1, 6):
        r = LHV_RESPONSES[j]
        bit_a = 0 if r[ia] == 1 else 1
        bit_b = 0 if r[ib] == 1 else 1
        out[2 * bit_a + bit_b] += ens[j - 1]
    return out


def tv_loop(p, q):
    return 0.5 * sum(abs(a - b) for a, b in zip(p, q))


def ramp(lo, hi, k):
    return [lo + (hi - lo) * i / (k - 1) for i in range(k)] if k > 1 else [lo]


def pooled_z(s1, n1, s2, n2):
    """Pooled two-proportion z with a two-sided p from math.erfc."""
    p1, p2 = s1 / n1, s2 / n2
    pool = (s1 + s2) / (n1 + n2)
    se = math.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    z = (p1 - p2) / se
    return z, math.erfc(abs(z) / math.sqrt(2))


def resampled_null_mean(pooled, shots, k, trials, seed):
    """Per-context delta_op null mean from a Philox stream and explicit loops."""
    rng = np.random.Generator(np.random.Philox(seed))
    vals = []
    for _ in range(trials):
        bins = [rng.multinomial(shots, pooled) / shots for _ in range(k)]
        best = 0.0
        for a, b in itertools.combinations(bins, 2):
            best = max(best, tv_loop(a, b))
        vals.append(best)
    return float(np.mean(vals))
