"""Target unitaries and calibrated two-interval realizations.

Targets are diagonal in a declared eigenbasis: the coupled states first (in
the order given) and the orthogonal complement last. The phase acquired by a
coupled state is controlled by the jump of drive phase between the two
pulse intervals; :func:`calibrate_phase_jump` finds that jump by simulating a
single driven pair rather than by assuming a formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import states as st
from .errors import CalibrationFailed, InputError, InvalidLabel
from .hamiltonian import Coupling, HamiltonianSpec, h1_spec, h2_spec, h3_spec, h4_spec, h5_spec
from .holonomy import HolonomyReport, holonomy_report
from .levelspace import ProductBasis, chain, qubit4, qutrit5
from .propagate import evolve_dense
from .pulses import SegmentedPulse, two_interval_schedule

CALIBRATION_TOL = 1e-8
_SWEEP_POINTS = 64

QUBIT_SPAN2 = st.product_span("01", "01")
QUTRIT_SPAN1 = st.product_span("012")
QUTRIT_SPAN2 = st.product_span("012", "012")


@dataclass
class TargetGate:
    """A unitary on a computational space, stored by eigenbasis or by diagonal."""

    basis_labels: list[tuple[str, ...]]
    params: dict
    eigenbasis: np.ndarray | None = None
    eigenphases: np.ndarray | None = None
    diagonal: np.ndarray | None = None
    name: str = ""
    info: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.basis_labels)

    @property
    def matrix(self) -> np.ndarray:
        if self.diagonal is not None:
            return np.diag(self.diagonal)
        v = self.eigenbasis
        return (v * np.exp(1j * self.eigenphases)) @ v.conj().T


def _phase_gate(states, phases, span, name, params, info=None) -> TargetGate:
    coerced = [st.normalize(st.as_state(s, span=span, n_sites=len(span[0]))) for s in states]
    for s in coerced:
        st.check_in_span(s, span)
    st.check_orthogonal(coerced)
    vecs = st.orthonormal_basis_with_complement(coerced, span)
    eig = np.concatenate([np.asarray(phases, dtype=float), np.zeros(len(span) - len(states))])
    return TargetGate(list(span), dict(params), vecs, eig, None, name, info or {})


def u1_target(bright, gamma: float) -> TargetGate:
    """``|D><D| + e^{i gamma} |B><B|`` on one qubit; ``bright`` is a 2-vector or state."""
    span = [("0",), ("1",)]
    return _phase_gate([bright], [gamma], span, "u1", {"gamma": gamma})


def u2_target(phi0, phi1, gamma0: float, gamma1: float) -> TargetGate:
    for s in (phi0, phi1):
        st.check_in_span(st.as_state(s, span=[("1", "0"), ("1", "1")], n_sites=2), [("1", "0"), ("1", "1")])
    span = [("1", "0"), ("1", "1")]
    sub = _phase_gate([phi0, phi1], [gamma0, gamma1], span, "u2", {})
    # embed the 2x2 block into the two-qubit space; |00>, |01> untouched
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = sub.matrix
    vecs = np.eye(4, dtype=complex)
    vecs[2:, 2:] = sub.eigenbasis
    order = [2, 3, 0, 1]
    return TargetGate(
        list(QUBIT_SPAN2),
        {"gamma0": gamma0, "gamma1": gamma1},
        vecs[:, order],
        np.array([gamma0, gamma1, 0.0, 0.0]),
        None,
        "u2",
    )


def u3_target(phi_a, phi_b, phi_c, gamma_a: float, gamma_b: float, gamma_c: float) -> TargetGate:
    return _phase_gate(
        [phi_a, phi_b, phi_c],
        [gamma_a, gamma_b, gamma_c],
        QUBIT_SPAN2,
        "u3",
        {"gamma_a": gamma_a, "gamma_b": gamma_b, "gamma_c": gamma_c},
    )


def u4_target(psi0, psi1, xi0: float, xi1: float) -> TargetGate:
    return _phase_gate([psi0, psi1], [xi0, xi1], QUTRIT_SPAN1, "u4", {"xi0": xi0, "xi1": xi1})


def u5_target(psi_a, psi_b, psi_c, xi_a: float, xi_b: float, xi_c: float) -> TargetGate:
    span = [("2", "0"), ("2", "1"), ("2", "2")]
    coerced = [st.normalize(st.as_state(s, span=span, n_sites=2)) for s in (psi_a, psi_b, psi_c)]
    for s in coerced:
        st.check_in_span(s, span)
    st.check_orthogonal(coerced)
    full = list(QUTRIT_SPAN2)
    sub = st.orthonormal_basis_with_complement(coerced, span)
    vecs = np.zeros((9, 9), dtype=complex)
    rows = [full.index(lab) for lab in span]
    vecs[np.ix_(rows, range(3))] = sub
    rest = [i for i, lab in enumerate(full) if lab not in span]
    for j, i in enumerate(rest):
        vecs[i, 3 + j] = 1.0
    eig = np.array([xi_a, xi_b, xi_c] + [0.0] * 6)
    return TargetGate(full, {"xi_a": xi_a, "xi_b": xi_b, "xi_c": xi_c}, vecs, eig, None, "u5")


def controlled_phase_target(n_sites: int, d: int, flip_label: str | int) -> TargetGate:
    """Diagonal gate with -1 on ``|flip ... flip>`` and +1 on every other computational state."""
    if n_sites < 2:
        raise InputError("controlled phase needs at least two sites")
    if d not in (2, 3):
        raise InputError("only qubits (d=2) and qutrits (d=3) are supported")
    flip = str(flip_label)
    levels = [str(k) for k in range(d)]
    if flip not in levels:
        raise InvalidLabel(f"flip label {flip!r} is not a computational level of a d={d} site")
    dim = d**n_sites
    diag = np.ones(dim, dtype=complex)
    flip_index = sum(int(flip) * d**k for k in range(n_sites))
    diag[flip_index] = -1
    labels = st.product_span(*([levels] * n_sites)) if dim <= 4096 else []
    return TargetGate(
        labels, {"n_sites": n_sites, "d": d, "flip_label": flip}, None, None, diag, "controlled_phase",
        {"flip_index": flip_index},
    )


# ----------------------------------------------------------------------------
# calibration


def realized_phase(jump: float, shape: str = "constant", area: float = math.pi / 2) -> tuple[float, float]:
    """Simulate one driven pair with a two-interval schedule; return (eigenphase, cyclicity).

    The pair is ``|0>`` <-> ``|a0>`` of a single four-level ion, phase 0 in the
    first interval and ``jump`` in the second.
    """
    basis = ProductBasis((qubit4(),))
    pulse = two_interval_schedule(area, 0.0, jump, shape)
    spec = HamiltonianSpec(basis, (Coupling((0,), {("a0",): 1}, {("0",): 1}, pulse),), "calibration")
    u = evolve_dense(spec, samples_per_segment=16).unitary
    i = basis.index_of(("0",))
    return float(np.angle(u[i, i])), float(abs(u[i, i]))


@lru_cache(maxsize=None)
def _sweep_table(shape: str, area: float):
    jumps = np.linspace(0.0, 2 * math.pi, _SWEEP_POINTS + 1)
    phases = np.array([realized_phase(j, shape, area)[0] for j in jumps])
    return jumps, phases


def _wrap(x):
    return (x + math.pi) % (2 * math.pi) - math.pi


def calibrate_phase_jump(
    gamma: float, shape: str = "constant", area: float = math.pi / 2, tol: float = CALIBRATION_TOL
) -> tuple[float, float]:
    """Segment phases ``(phase1, phase2)`` whose two-interval schedule gives eigenphase ``gamma``.

    A cached sweep over the phase jump brackets the root of the wrapped
    residual, which is then refined with Brent's method and re-simulated.
    """
    if not -math.pi - 1e-12 < gamma <= math.pi + 1e-12:
        raise InputError("gamma must lie in (-pi, pi]")
    jumps, phases = _sweep_table(shape, float(area))
    resid = _wrap(phases - gamma)
    cands = np.nonzero(np.abs(resid) < 1e-13)[0]
    best = None
    if len(cands):
        best = float(jumps[cands[0]])
    else:
        for j in range(len(jumps) - 1):
            a, b = resid[j], resid[j + 1]
            if a * b < 0 and abs(a - b) < math.pi:
                best = brentq(
                    lambda x: _wrap(realized_phase(x, shape, area)[0] - gamma),
                    jumps[j], jumps[j + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps,
                )
                break
    if best is None:
        raise CalibrationFailed(f"no phase jump realizes gamma={gamma} for shape={shape}, area={area}")
    got, cyc = realized_phase(best, shape, area)
    if abs(_wrap(got - gamma)) > tol or abs(cyc - 1.0) > tol:
        raise CalibrationFailed(
            f"calibrated jump gives phase {got} (|amp| {cyc}) instead of {gamma}"
        )
    return 0.0, float(best % (2 * math.pi))


def normalize_phase(gamma: float) -> float:
    """Map ``gamma`` into (-pi, pi]."""
    g = _wrap(gamma)
    return math.pi if math.isclose(g, -math.pi, abs_tol=1e-12) else g


def calibrated_schedule(gamma: float, shape: str = "constant", area: float = math.pi / 2) -> SegmentedPulse:
    """Two-interval schedule whose coupled state acquires eigenphase ``gamma`` (any real)."""
    p1, p2 = calibrate_phase_jump(normalize_phase(gamma), shape, area)
    return two_interval_schedule(area, p1, p2, shape)


# ----------------------------------------------------------------------------
# end-to-end realizations


@dataclass
class Realization:
    spec: HamiltonianSpec
    target: TargetGate

    def verify(self, samples_per_segment: int = 64) -> HolonomyReport:
        prop = evolve_dense(self.spec, samples_per_segment=samples_per_segment)
        return holonomy_report(self.spec, prop, self.target.matrix)


def realize_u1(theta: float, phi: float, gamma: float, shape: str = "constant") -> Realization:
    basis = ProductBasis((qubit4(),))
    base = calibrated_schedule(gamma, shape)
    amp0 = base.scaled(math.sin(theta / 2)).shifted_phase(phi)
    amp1 = base.scaled(math.cos(theta / 2))
    spec = h1_spec(basis, amp0, amp1)
    bright = [math.sin(theta / 2) * np.exp(-1j * phi), math.cos(theta / 2)]
    return Realization(spec, u1_target(bright, gamma))


def realize_u2(phi0, phi1, gamma0, gamma1, shape="constant") -> Realization:
    basis = chain(qubit4(), 2)
    spec = h2_spec(basis, phi0, phi1, calibrated_schedule(gamma0, shape), calibrated_schedule(gamma1, shape))
    return Realization(spec, u2_target(phi0, phi1, gamma0, gamma1))


def realize_u3(phis: Sequence, gammas: Sequence[float], shape="constant") -> Realization:
    basis = chain(qubit4(), 2)
    spec = h3_spec(basis, *phis, [calibrated_schedule(g, shape) for g in gammas])
    return Realization(spec, u3_target(*phis, *gammas))


def realize_u4(psi0, psi1, xi0, xi1, shape="constant") -> Realization:
    basis = ProductBasis((qutrit5(),))
    spec = h4_spec(basis, psi0, psi1, calibrated_schedule(xi0, shape), calibrated_schedule(xi1, shape))
    return Realization(spec, u4_target(psi0, psi1, xi0, xi1))


def realize_u5(psis: Sequence, xis: Sequence[float], shape="constant") -> Realization:
    basis = chain(qutrit5(), 2)
    spec = h5_spec(basis, *psis, [calibrated_schedule(x, shape) for x in xis])
    return Realization(spec, u5_target(*psis, *xis))
