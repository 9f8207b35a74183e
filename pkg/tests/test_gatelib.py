import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from holoqudit import states as st
from holoqudit.errors import InputError, InvalidLabel, NonOrthogonalStates, SupportOutsideSpan
from holoqudit.gatelib import (
    QUBIT_SPAN2,
    QUTRIT_SPAN1,
    calibrate_phase_jump,
    controlled_phase_target,
    normalize_phase,
    realize_u1,
    realize_u2,
    realize_u3,
    realize_u4,
    realize_u5,
    realized_phase,
    u1_target,
    u2_target,
    u3_target,
    u4_target,
    u5_target,
)

R2 = 1 / math.sqrt(2)
PI = math.pi


def _unitary(m, tol=1e-12):
    return np.max(np.abs(m.conj().T @ m - np.eye(len(m)))) <= tol


def test_u2_identity():
    assert np.allclose(u2_target("10", "11", 0, 0).matrix, np.eye(4), atol=1e-15)


def test_u2_controlled_z():
    assert np.allclose(u2_target("10", "11", 0, PI).matrix, np.diag([1, 1, 1, -1]), atol=1e-15)


def test_u2_projector_formula():
    plus = np.array([0, 0, R2, R2])
    minus = np.array([0, 0, R2, -R2])
    expect = np.diag([1, 1, 0, 0]).astype(complex) + 1j * np.outer(plus, plus) + np.outer(minus, minus)
    g = u2_target({"10": R2, "11": R2}, {"10": R2, "11": -R2}, PI / 2, 0)
    assert np.allclose(g.matrix, expect, atol=1e-14)
    assert _unitary(g.matrix)


def test_u2_non_orthogonal():
    with pytest.raises(NonOrthogonalStates):
        u2_target("10", {"10": R2, "11": R2}, 0, 0)


def test_u3_examples():
    assert np.allclose(u3_target("01", "10", "11", 0, 0, 0).matrix, np.eye(4), atol=1e-15)
    assert np.allclose(u3_target("01", "10", "11", PI, PI, PI).matrix, np.diag([1, -1, -1, -1]), atol=1e-14)


def test_u3_random_eigenvalues(rng):
    trip = st.random_orthonormal(rng, QUBIT_SPAN2, 3)
    gam = rng.uniform(-PI, PI, 3)
    g = u3_target(*trip, *gam)
    assert _unitary(g.matrix)
    ev = np.sort_complex(np.linalg.eigvals(g.matrix))
    want = np.sort_complex(np.exp(1j * np.array([0.0, *gam])))
    assert np.allclose(ev, want, atol=1e-12)
    # declared eigenbasis diagonalizes the matrix
    v = g.eigenbasis
    d = v.conj().T @ g.matrix @ v
    assert np.max(np.abs(d - np.diag(np.diag(d)))) <= 1e-12


def test_u4_u5_identity():
    assert np.allclose(u4_target("0", "1", 0, 0).matrix, np.eye(3), atol=1e-15)
    assert np.allclose(u5_target("20", "21", "22", 0, 0, 0).matrix, np.eye(9), atol=1e-15)


def test_u5_two_qutrit_controlled_phase():
    m = u5_target("20", "21", "22", PI, PI, PI).matrix
    assert np.allclose(m, np.diag([1] * 6 + [-1] * 3), atol=1e-14)


def test_u4_random_eigenvalues(rng):
    pair = st.random_orthonormal(rng, QUTRIT_SPAN1, 2)
    g = u4_target(*pair, 0.4, -2.0)
    ev = np.sort_complex(np.linalg.eigvals(g.matrix))
    assert np.allclose(ev, np.sort_complex(np.exp(1j * np.array([0, 0.4, -2.0]))), atol=1e-12)


def test_u5_outside_span():
    with pytest.raises(SupportOutsideSpan):
        u5_target({"00": R2, "20": R2}, "21", "22", 0, 0, 0)


def test_u1_target_phase_on_bright():
    g = u1_target([R2, 1j * R2], 1.0)
    b = np.array([R2, 1j * R2])
    assert g.matrix @ b == pytest.approx(np.exp(1j) * b)


def test_controlled_phase_examples():
    assert np.allclose(controlled_phase_target(2, 2, 1).matrix, np.diag([1, 1, 1, -1]))
    g = controlled_phase_target(12, 2, "1")
    assert np.count_nonzero(g.diagonal == -1) == 1 and len(g.diagonal) == 4096
    assert g.diagonal[4095] == -1
    q = controlled_phase_target(2, 3, 2)
    assert list(np.nonzero(q.diagonal == -1)[0]) == [8]


def test_controlled_phase_invalid():
    with pytest.raises(InvalidLabel):
        controlled_phase_target(2, 2, 2)
    with pytest.raises(InputError):
        controlled_phase_target(1, 2, 1)


def test_continuous_schedule_gives_pi():
    phase, cyc = realized_phase(0.0)
    assert abs(abs(phase) - PI) < 1e-12
    assert cyc == pytest.approx(1.0)


@pytest.mark.parametrize("gamma", [PI / 2, 0.0, PI, -2.5])
def test_calibration_realizes_gamma(gamma):
    p1, p2 = calibrate_phase_jump(gamma)
    got, cyc = realized_phase(p2 - p1)
    assert abs(np.angle(np.exp(1j * (got - gamma)))) <= 1e-8
    assert cyc == pytest.approx(1.0, abs=1e-8)


def test_calibration_matches_brute_force_sweep():
    jumps = np.linspace(0, 2 * PI, 721)
    phases = np.array([realized_phase(j)[0] for j in jumps])
    gamma = PI / 2
    best = jumps[np.argmin(np.abs(np.angle(np.exp(1j * (phases - gamma)))))]
    _, p2 = calibrate_phase_jump(gamma)
    assert abs(np.angle(np.exp(1j * (p2 - best)))) <= 2 * PI / 720


@pytest.mark.parametrize("shape", ["constant", "sine_squared"])
def test_calibration_sixteen_points(shape):
    for gamma in np.linspace(-PI, PI, 17)[1:]:
        p1, p2 = calibrate_phase_jump(gamma, shape)
        got, _ = realized_phase(p2 - p1, shape)
        assert abs(np.angle(np.exp(1j * (got - gamma)))) <= 1e-8


def test_gamma_out_of_range():
    with pytest.raises(InputError):
        calibrate_phase_jump(4.0)
    assert normalize_phase(-PI) == PI
    assert normalize_phase(3 * PI) == pytest.approx(PI)


def _check(real):
    rep = real.verify()
    assert rep.fidelity_vs_target >= 1 - 1e-8
    assert rep.cyclicity_leakage <= 1e-9
    assert rep.max_dynamical_element <= 1e-9


def test_u2_end_to_end_cz():
    _check(realize_u2("10", "11", 0.0, PI))


def test_common_and_distinct_envelopes_same_gate():
    a = realize_u2("10", "11", 0.3, -1.2, "constant").verify().holonomy_matrix
    b = realize_u2("10", "11", 0.3, -1.2, "sine_squared").verify().holonomy_matrix
    assert np.max(np.abs(a - b)) <= 1e-8
    # distinct envelope shapes on the two couplings are allowed for h2
    from holoqudit.gatelib import calibrated_schedule
    from holoqudit.hamiltonian import h2_spec
    from holoqudit.holonomy import holonomy_report
    from holoqudit.levelspace import chain, qubit4
    from holoqudit.propagate import evolve_dense

    spec = h2_spec(chain(qubit4(), 2), "10", "11", calibrated_schedule(0.3, "constant"), calibrated_schedule(-1.2, "sine_squared"))
    rep = holonomy_report(spec, evolve_dense(spec), u2_target("10", "11", 0.3, -1.2).matrix)
    assert rep.fidelity_vs_target >= 1 - 1e-8
    assert np.max(np.abs(rep.holonomy_matrix - a)) <= 1e-8


@given(hs.floats(0.1, 3.0), hs.floats(-3, 3), hs.floats(-3, 3.1))
def test_u1_random(theta, phi, gamma):
    _check(realize_u1(theta, phi, gamma))


def test_u3_u4_u5_random(rng):
    trip = st.random_orthonormal(rng, QUBIT_SPAN2, 3)
    _check(realize_u3(trip, rng.uniform(-PI, PI, 3)))
    pair = st.random_orthonormal(rng, QUTRIT_SPAN1, 2)
    _check(realize_u4(*pair, *rng.uniform(-PI, PI, 2), shape="sine_squared"))
    span = [("2", "0"), ("2", "1"), ("2", "2")]
    _check(realize_u5(st.random_orthonormal(rng, span, 3), rng.uniform(-PI, PI, 3)))
