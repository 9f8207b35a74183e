import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from holoqudit import states as st
from holoqudit.errors import (
    DimensionOverflow,
    NonBipartiteCoupling,
    NonOrthogonalStates,
    RatioNotConstant,
    SupportOutsideSpan,
)
from holoqudit.hamiltonian import (
    Coupling,
    HamiltonianSpec,
    assemble_matrix,
    h1_spec,
    h2_spec,
    h3_spec,
    h4_spec,
    h5_spec,
)
from holoqudit.levelspace import ProductBasis, chain, qubit4, qutrit5
from holoqudit.pulses import Envelope, SegmentedPulse, two_interval_schedule

R2 = 1 / math.sqrt(2)


def _pulse(amp=1.0, phase=0.0, shape="constant", dur=1.0):
    return SegmentedPulse(((Envelope(shape, amp, dur), phase),))


def _one():
    return ProductBasis((qubit4(),))


def _sched(phase2=0.0):
    return two_interval_schedule(math.pi / 2, 0.0, phase2)


def test_h1_equal_amplitudes_bright_dark():
    spec = h1_spec(_one(), _pulse(), _pulse())
    b = spec.info["bright"]
    assert b[("0",)] == pytest.approx(R2)
    assert b[("1",)] == pytest.approx(R2)
    h = spec.matrix(0.5)
    dark = np.array([R2, -R2, 0, 0])
    assert np.allclose(h @ dark, 0, atol=1e-15)


def test_h1_degenerate_two_level():
    spec = h1_spec(_one(), _pulse(1.3), _pulse(0.0))
    h = spec.matrix(0.1)
    assert np.count_nonzero(h) == 2
    assert h[2, 0] == pytest.approx(1.3)


@pytest.mark.parametrize("theta,phi", [(0.7, 0.3), (2.1, -1.2), (math.pi / 2, 2.5)])
def test_h1_bright_state_matches_numeric_eigenvector(theta, phi):
    # ratio amp0/amp1 = tan(theta/2) e^{i phi}
    amp0 = _pulse(math.sin(theta / 2), phi)
    amp1 = _pulse(math.cos(theta / 2), 0.0)
    spec = h1_spec(_one(), amp0, amp1)
    h = spec.matrix(0.2)
    # bright state spans the row space of the coupling row <a0|H restricted to {0,1}
    row = h[2, :2]
    numeric = np.conj(row) / np.linalg.norm(row)
    expected = np.array([math.sin(theta / 2) * np.exp(-1j * phi), math.cos(theta / 2)])
    assert abs(abs(np.vdot(numeric, expected)) - 1) < 1e-12
    b = spec.info["bright"]
    assert abs(abs(np.vdot([b[("0",)], b[("1",)]], expected)) - 1) < 1e-12


def test_h1_ratio_not_constant():
    with pytest.raises(RatioNotConstant):
        h1_spec(_one(), _pulse(shape="sine_squared"), _pulse())
    with pytest.raises(RatioNotConstant):
        h1_spec(_one(), _pulse(dur=2.0), _pulse())
    seg = SegmentedPulse(((Envelope("constant", 1, 1), 0.0), (Envelope("constant", 2, 1), 0.0)))
    with pytest.raises(RatioNotConstant):
        h1_spec(_one(), seg, SegmentedPulse(((Envelope("constant", 1, 1), 0.0),) * 2))


def test_h2_basis_states():
    spec = h2_spec(chain(qubit4(), 2), "10", "11", _sched(), _sched(math.pi))
    assert len(spec.couplings) == 2
    assert spec.couplings[0].aux_state == {("a0", "a0"): 1}
    h = spec.matrix(0.5)
    assert h.shape == (16, 16)
    assert np.count_nonzero(h) == 4


def test_h2_rotated_states_valid():
    spec = h2_spec(chain(qubit4(), 2), {"10": R2, "11": R2}, {"10": R2, "11": -R2}, _sched(), _sched())
    assert spec.label == "h2"


def test_h2_non_orthogonal():
    with pytest.raises(NonOrthogonalStates):
        h2_spec(chain(qubit4(), 2), "10", {"10": R2, "11": R2}, _sched(), _sched())


def test_h2_outside_span():
    with pytest.raises(SupportOutsideSpan):
        h2_spec(chain(qubit4(), 2), "00", "11", _sched(), _sched())


def test_h3_complement_of_basis_triple():
    spec = h3_spec(chain(qubit4(), 2), "01", "10", "11", [_sched()] * 3)
    (comp,) = spec.info["complement"]
    assert set(comp) == {("0", "0")}
    assert abs(comp[("0", "0")]) == pytest.approx(1.0)


def test_h3_random_triple(rng):
    span = st.product_span("01", "01")
    trip = st.random_orthonormal(rng, span, 3)
    spec = h3_spec(chain(qubit4(), 2), *trip, [_sched()] * 3)
    for a in range(3):
        for b in range(a + 1, 3):
            assert abs(st.inner(spec.info["states"][a], spec.info["states"][b])) < 1e-12


def test_h3_repeated_state():
    with pytest.raises(NonOrthogonalStates):
        h3_spec(chain(qubit4(), 2), "01", "01", "11", [_sched()] * 3)


def test_h4_basis_and_rotated_complement():
    b = ProductBasis((qutrit5(),))
    spec = h4_spec(b, "0", "1", _sched(), _sched())
    assert set(spec.info["complement"][0]) == {("2",)}
    spec = h4_spec(b, {"0": R2, "1": R2}, {"0": R2, "1": -R2}, _sched(), _sched())
    assert abs(spec.info["complement"][0][("2",)]) == pytest.approx(1.0)


def test_h4_full_span_pair():
    r3 = 1 / math.sqrt(3)
    spec = h4_spec(ProductBasis((qutrit5(),)), {"0": r3, "1": r3, "2": r3}, {"0": R2, "2": -R2}, _sched(), _sched())
    comp = spec.info["complement"][0]
    vec = np.array([comp.get((k,), 0) for k in "012"])
    assert abs(np.vdot(vec, [r3, r3, r3])) < 1e-12
    assert abs(np.vdot(vec, [R2, 0, -R2])) < 1e-12


def test_h5_basis_triple():
    spec = h5_spec(chain(qutrit5(), 2), "20", "21", "22", [_sched()] * 3)
    assert [c.aux_state for c in spec.couplings] == [{("a0", "a0"): 1}, {("a1", "a1"): 1}, {("a0", "a1"): 1}]


def test_h5_random_triple(rng):
    span = [("2", "0"), ("2", "1"), ("2", "2")]
    trip = st.random_orthonormal(rng, span, 3)
    spec = h5_spec(chain(qutrit5(), 2), *trip, [_sched()] * 3)
    assert len(spec.couplings) == 3


def test_h5_outside_span():
    with pytest.raises(SupportOutsideSpan):
        h5_spec(chain(qutrit5(), 2), {"00": R2, "20": R2}, "21", "22", [_sched()] * 3)


def test_h1_matrix_at_zero():
    spec = h1_spec(_one(), _pulse(0.4), _pulse(0.9, 1.0))
    h = assemble_matrix(spec, 0.0)
    assert h.shape == (4, 4)
    assert np.count_nonzero(h) == 4
    assert h[2, 1] == pytest.approx(0.9 * np.exp(1j))


def test_dense_cap():
    spec = HamiltonianSpec(chain(qubit4(), 7), (), "big")
    with pytest.raises(DimensionOverflow):
        assemble_matrix(spec, 0.0)


def test_intra_set_coupling_rejected():
    with pytest.raises(NonBipartiteCoupling):
        HamiltonianSpec(_one(), (Coupling((0,), {("1",): 1}, {("0",): 1}, _pulse()),))
    with pytest.raises(NonBipartiteCoupling):
        HamiltonianSpec(_one(), (Coupling((0,), {("a1",): 1}, {("a0",): 1}, _pulse()),))


def test_matrix_support_equals_declared_couplings():
    spec = h2_spec(chain(qubit4(), 2), {"10": R2, "11": R2}, {"10": R2, "11": -R2}, _sched(), _sched())
    h = spec.matrix(0.3)
    b = spec.basis
    rows, cols = np.nonzero(h)
    allowed = {b.index_of(x) for x in [("a0", "a0"), ("a1", "a1"), ("1", "0"), ("1", "1")]}
    assert set(rows) <= allowed and set(cols) <= allowed
    comp = set(b.computational_indices())
    for r, c in zip(rows, cols):
        assert (r in comp) != (c in comp)


@given(hs.floats(0, 2), hs.floats(-4, 4), hs.floats(0, 2), hs.floats(-4, 4), hs.floats(0, 2))
def test_hermitian_exactly(a0, f0, a1, f1, t):
    p0 = two_interval_schedule(1.0, f0, f0 + 1.0, "sine_squared")
    p1 = two_interval_schedule(1.0, f1, f1 + 1.0, "sine_squared")
    spec = h2_spec(chain(qubit4(), 2), "10", "11", p0.scaled(a0 + 0.1), p1.scaled(a1 + 0.1))
    h = spec.matrix(t)
    assert np.array_equal(h, h.conj().T)


@given(hs.floats(0.05, 2.0), hs.floats(-3, 3), hs.floats(0, 1), hs.floats(0, 1))
def test_h1_commutes_across_times(r, phi, t1, t2):
    amp0 = _pulse(r, phi, "sine_squared")
    amp1 = _pulse(1.0, 0.0, "sine_squared")
    spec = h1_spec(_one(), amp0, amp1)
    h1, h2 = spec.matrix(t1), spec.matrix(t2)
    comm = h1 @ h2 - h2 @ h1
    assert np.linalg.norm(comm, 2) <= 1e-12 * max(np.linalg.norm(h1, 2) * np.linalg.norm(h2, 2), 1e-300) + 1e-300
