import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from holoqudit.errors import DimensionMismatch, DimensionOverflow, NoConvergence, OverlappingTransfers
from holoqudit.hamiltonian import Coupling, HamiltonianSpec, h1_spec, h2_spec
from holoqudit.levelspace import ProductBasis, build_level_graph, chain, qubit4
from holoqudit.propagate import (
    PhasePermutation,
    Transfer,
    apply_to_state,
    check_disjoint,
    evolve_analytic,
    evolve_dense,
    identity_permutation,
    step_spec,
)
from holoqudit.pulses import Envelope, SegmentedPulse, envelope_for_area, two_interval_schedule

HALF = math.pi / 2


def _pair_spec(area, shape="constant", phase=0.0):
    basis = ProductBasis((qubit4(),))
    pulse = SegmentedPulse(((envelope_for_area(shape, area), phase),))
    return HamiltonianSpec(basis, (Coupling((0,), {("a0",): 1}, {("0",): 1}, pulse),))


def test_half_area_swaps_with_minus_i():
    u = evolve_dense(_pair_spec(HALF)).unitary
    i0, ia = 0, 2
    assert u[ia, i0] == pytest.approx(-1j, abs=1e-12)
    assert u[i0, ia] == pytest.approx(-1j, abs=1e-12)
    assert u[1, 1] == pytest.approx(1)
    assert u[3, 3] == pytest.approx(1)


def test_full_area_gives_minus_identity_on_pair():
    u = evolve_dense(_pair_spec(math.pi)).unitary
    assert np.allclose(u, np.diag([-1, 1, -1, 1]), atol=1e-12)


def test_shaped_pair_converges():
    p = evolve_dense(_pair_spec(HALF, "sine_squared", 0.4))
    assert p.unitary[2, 0] == pytest.approx(-1j * np.exp(0.4j), abs=1e-10)
    assert p.unitarity_error() <= 1e-10


@pytest.mark.parametrize("r,phi", [(0.5, 0.3), (1.7, -2.0)])
def test_h1_shape_independence(r, phi):
    basis = ProductBasis((qubit4(),))
    out = []
    for shape in ("constant", "sine_squared"):
        base = two_interval_schedule(HALF, 0.0, 1.3, shape)
        spec = h1_spec(basis, base.scaled(r / math.hypot(r, 1)).shifted_phase(phi), base.scaled(1 / math.hypot(r, 1)))
        out.append(evolve_dense(spec).unitary)
    assert np.max(np.abs(out[0] - out[1])) <= 1e-9


def test_checkpoints_cover_segments():
    spec = h2_spec(chain(qubit4(), 2), "10", "11", two_interval_schedule(HALF, 0, 1), two_interval_schedule(HALF, 0, 2))
    p = evolve_dense(spec, samples_per_segment=8)
    times = [t for t, _ in p.checkpoints]
    assert times[0] == 0.0 and times[-1] == pytest.approx(2.0)
    assert 1.0 in times
    assert len(times) == 17


def test_dense_cap_enforced():
    with pytest.raises(DimensionOverflow):
        evolve_dense(HamiltonianSpec(chain(qubit4(), 7), ()))


def _noncommuting_spec(amp=3.0):
    # a constant and a shaped drive into the same auxiliary level do not commute in time
    basis = ProductBasis((qubit4(),))
    c1 = Coupling((0,), {("a0",): 1}, {("0",): 1}, SegmentedPulse(((Envelope("constant", amp, 1.0), 0.0),)))
    c2 = Coupling((0,), {("a0",): 1}, {("1",): 1}, SegmentedPulse(((Envelope("sine_squared", amp, 1.0), 0.4),)))
    return HamiltonianSpec(basis, (c1, c2))


def test_noncommuting_refinement_converges():
    p = evolve_dense(_noncommuting_spec(), samples_per_segment=8)
    assert p.substeps > 8
    assert p.unitarity_error() <= 1e-10
    finer = evolve_dense(_noncommuting_spec(), substeps_per_segment=4 * p.substeps, samples_per_segment=8)
    assert np.max(np.abs(finer.unitary - p.unitary)) <= 1e-9


def test_no_convergence_reported():
    with pytest.raises(NoConvergence):
        evolve_dense(_noncommuting_spec(), samples_per_segment=1, max_substeps=4)


@settings(max_examples=5)
@given(hs.floats(0.05, 1.95), hs.floats(-3, 3), hs.floats(0.2, 2.0))
def test_composition_over_split_window(frac, phase, amp):
    p0 = two_interval_schedule(amp, 0.0, phase, "sine_squared")
    p1 = two_interval_schedule(amp * 0.7, 0.3, phase - 1, "sine_squared")
    spec = h2_spec(chain(qubit4(), 2), "10", "11", p0, p1)
    tau = frac
    full = evolve_dense(spec, samples_per_segment=8).unitary
    a = evolve_dense(spec, samples_per_segment=8, window=(0.0, tau)).unitary
    b = evolve_dense(spec, samples_per_segment=8, window=(tau, 2.0)).unitary
    assert np.max(np.abs(b @ a - full)) <= 1e-9


@given(hs.floats(0.1, 3), hs.floats(-3, 3), hs.sampled_from(["constant", "sine_squared"]))
def test_dense_unitarity(amp, phase, shape):
    p = two_interval_schedule(amp, 0.0, phase, shape)
    spec = h2_spec(chain(qubit4(), 2), {"10": 0.6, "11": 0.8}, {"10": 0.8, "11": -0.6}, p, p.scaled(0.5))
    assert evolve_dense(spec, samples_per_segment=4).unitarity_error() <= 1e-10


# ----------------------------------------------------------------------------
# analytic mode


def test_single_transfer_touches_every_spectator_configuration():
    basis = chain(qubit4(), 3)
    tr = Transfer((0, 1), ("1", "1"), ("a0", "a0"))
    u = evolve_analytic([tr], basis).to_sparse()
    moved = [i for i in range(basis.total_dim) if u[i, i] != 1]
    assert len(moved) == 2 * 4
    x = basis.index_of(("1", "1", "0"))
    y = basis.index_of(("a0", "a0", "0"))
    assert u[y, x] == pytest.approx(-1j)
    assert u[x, y] == pytest.approx(-1j)


@pytest.mark.parametrize("phase", [0.0, 1.1, math.pi])
def test_full_area_transfer_signs(phase):
    basis = chain(qubit4(), 2)
    tr = Transfer((0, 1), ("a0", "a0"), ("0", "0"), math.pi, phase)
    u = evolve_analytic([tr], basis).to_dense()
    for lab in [("a0", "a0"), ("0", "0")]:
        i = basis.index_of(lab)
        assert u[i, i] == pytest.approx(-1)
    assert u[5, 5] == 1


def test_overlapping_transfers_rejected():
    with pytest.raises(OverlappingTransfers):
        check_disjoint([Transfer((0, 1), ("1", "1"), ("a0", "a0")), Transfer((1, 2), ("1", "1"), ("a1", "a1"))])


def test_shared_site_with_disjoint_patterns_allowed():
    check_disjoint([Transfer((0, 1), ("1", "1"), ("a0", "a0")), Transfer((1, 2), ("0", "1"), ("a1", "a1"))])


def test_transfer_phase_convention_matches_dense():
    basis = chain(qubit4(), 1)
    tr = Transfer((0,), ("1",), ("a1",), HALF, 0.8)
    u = evolve_analytic([tr], basis).to_dense()
    d = evolve_dense(step_spec(basis, [tr])).unitary
    assert np.max(np.abs(u - d)) <= 1e-12
    assert u[3, 1] == pytest.approx(-1j * np.exp(0.8j))
    assert u[1, 3] == pytest.approx(-1j * np.exp(-0.8j))


def _toy_basis():
    return chain(build_level_graph(["0"], ["a"]), 3)


@given(hs.lists(hs.integers(1, 4), min_size=3, max_size=3), hs.lists(hs.floats(-math.pi, math.pi), min_size=3, max_size=3),
       hs.sampled_from(["constant", "sine_squared"]))
def test_random_disjoint_step_matches_dense(quarters, phases, shape):
    basis = _toy_basis()
    step = [Transfer((s,), ("0",), ("a",), q * HALF, f) for s, q, f in zip(range(3), quarters, phases)]
    u = evolve_analytic(step, basis).to_dense()
    d = evolve_dense(step_spec(basis, step, shape=shape)).unitary
    assert np.max(np.abs(u - d)) <= 1e-9


def test_reversed_transfer_inverts():
    basis = chain(qubit4(), 2)
    tr = Transfer((0, 1), ("0", "1"), ("a1", "a1"), HALF, 0.7)
    u = evolve_analytic([tr], basis).to_dense()
    v = evolve_analytic([tr.reversed()], basis).to_dense()
    assert np.allclose(v @ u, np.eye(16), atol=1e-14)


def test_identity_propagation_on_state(rng):
    basis = chain(qubit4(), 2)
    psi = rng.normal(size=16) + 1j * rng.normal(size=16)
    assert np.allclose(apply_to_state(identity_permutation(basis), psi), psi)
    spec = HamiltonianSpec(basis, ())
    assert np.allclose(apply_to_state(np.eye(16), psi), psi)
    del spec


def test_quarter_transfer_twice():
    basis = chain(qubit4(), 1)
    tr = Transfer((0,), ("0",), ("a0",))
    perm = PhasePermutation(basis, ((tr,), (tr,)))
    out = apply_to_state(perm, {basis.index_of(("0",)): 1.0})
    assert out == {0: pytest.approx(-1)}


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        apply_to_state(identity_permutation(chain(qubit4(), 2)), np.ones(5))
    with pytest.raises(DimensionMismatch):
        apply_to_state(np.eye(4), np.ones(16))


def test_twelve_ion_step_on_basis_state_matches_slice():
    big = chain(qubit4(), 12)
    tr = Transfer((4, 5), ("1", "1"), ("a0", "a0"), HALF, 0.3)
    labels = ["0"] * 12
    labels[4] = labels[5] = "1"
    labels[9] = "1"
    out = apply_to_state(evolve_analytic([tr], big), {big.index_of(labels): 1.0})
    (idx, amp), = out.items()
    small = chain(qubit4(), 2)
    d = evolve_dense(step_spec(small, [Transfer((0, 1), ("1", "1"), ("a0", "a0"), HALF, 0.3)])).unitary
    assert amp == pytest.approx(d[small.index_of(("a0", "a0")), small.index_of(("1", "1"))], abs=1e-12)
    want = list(labels)
    want[4] = want[5] = "a0"
    assert idx == big.index_of(want)
