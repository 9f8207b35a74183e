"""Time-dependent Hamiltonians built from pulsed couplings.

Every term has the form ``Omega_c(t) |aux_c><comp_c| + h.c.`` where the two
local states live on an explicit tuple of sites and all other sites are
spectators (identity). Each nonzero element of a coupling must move every
named site across the computational/auxiliary partition along an edge of
that site's level graph; this is what keeps the assembled matrix bipartite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import states as st
from .errors import (
    InputError,
    InvalidLabel,
    NonBipartiteCoupling,
    RatioNotConstant,
    SupportOutsideSpan,
)
from .levelspace import DENSE_DIM_CAP, ProductBasis
from .pulses import SegmentedPulse

NORM_TOL = 1e-12


@dataclass(frozen=True)
class Coupling:
    """``pulse(t) |aux_state><comp_state|`` on ``sites``, plus its conjugate.

    ``comp_state`` is the source side. For the gate Hamiltonians it is purely
    computational; transfers between two auxiliary-containing states (used in
    block sequences) also use this type with ``comp_state`` as the source.
    """

    sites: tuple[int, ...]
    aux_state: dict
    comp_state: dict
    pulse: SegmentedPulse

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        if len(set(self.sites)) != len(self.sites):
            raise InputError(f"coupling names a site twice: {self.sites}")
        for name in ("aux_state", "comp_state"):
            s = st.as_state(getattr(self, name), n_sites=len(self.sites))
            if abs(st.norm(s) - 1.0) > NORM_TOL:
                raise InputError(f"{name} is not normalized (norm {st.norm(s):.15g})")
            if any(len(k) != len(self.sites) for k in s):
                raise InputError(f"{name} labels do not match {len(self.sites)} sites")
            object.__setattr__(self, name, s)


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    basis: ProductBasis
    couplings: tuple[Coupling, ...]
    label: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        for c in self.couplings:
            _check_bipartite(self.basis, c)

    @property
    def dim(self) -> int:
        return self.basis.total_dim

    @property
    def duration(self) -> float:
        return max((c.pulse.total_duration for c in self.couplings), default=0.0)

    def breakpoints(self) -> tuple[float, ...]:
        """Sorted union of all segment boundaries; phases are constant between them."""
        pts = {0.0, self.duration}
        for c in self.couplings:
            pts.update(c.pulse.boundaries)
        return tuple(sorted(pts))

    @cached_property
    def _operators(self) -> list[np.ndarray]:
        self.basis.require_dense(DENSE_DIM_CAP)
        return [_lifted_operator(self.basis, c) for c in self.couplings]

    def matrix(self, t: float) -> np.ndarray:
        return assemble_matrix(self, t)

    def matrices(self, ts) -> np.ndarray:
        """Stack of ``H(t)`` for an array of times."""
        self.basis.require_dense(DENSE_DIM_CAP)
        ts = np.asarray(ts, dtype=float)
        a = np.zeros((len(ts), self.dim, self.dim), dtype=complex)
        for c, op in zip(self.couplings, self._operators):
            amp = c.pulse.amplitudes(ts)
            nz = np.nonzero(op)
            a[:, nz[0], nz[1]] += amp[:, None] * op[nz][None, :]
        return a + np.conj(np.swapaxes(a, 1, 2))


def _check_bipartite(basis: ProductBasis, c: Coupling) -> None:
    for s in c.sites:
        if not 0 <= s < basis.n_sites:
            raise InputError(f"site {s} outside chain of {basis.n_sites}")
    graphs = [basis.site_graphs[s] for s in c.sites]
    for state in (c.aux_state, c.comp_state):
        for labels in state:
            for g, lab in zip(graphs, labels):
                if lab not in g.labels:
                    raise InvalidLabel(f"unknown level {lab!r}")
    for y in c.aux_state:
        for x in c.comp_state:
            for g, a, b in zip(graphs, x, y):
                if g.is_computational(a) == g.is_computational(b) or not g.has_edge(a, b):
                    raise NonBipartiteCoupling(
                        f"coupling {x} -> {y} does not cross the level partition along an edge"
                    )


def _lifted_operator(basis: ProductBasis, c: Coupling) -> np.ndarray:
    """Dense ``|aux><comp|`` on the coupling's sites, identity elsewhere."""
    dim = basis.total_dim
    digits = basis.index_to_digits(np.arange(dim))
    strides = basis.strides
    sites = list(c.sites)
    op = np.zeros((dim, dim), dtype=complex)
    graphs = [basis.site_graphs[s] for s in sites]
    for x, ax in c.comp_state.items():
        xd = np.array([g.level_index(l) for g, l in zip(graphs, x)])
        cols = np.nonzero(np.all(digits[:, sites] == xd, axis=1))[0]
        for y, ay in c.aux_state.items():
            yd = np.array([g.level_index(l) for g, l in zip(graphs, y)])
            rows = cols + int(np.dot(yd - xd, strides[sites]))
            op[rows, cols] += ay * np.conj(ax)
    return op


def assemble_matrix(spec: HamiltonianSpec, t: float) -> np.ndarray:
    """``H(t) = A + A^dagger`` with ``A = sum_c Omega_c(t) |aux_c><comp_c|``."""
    spec.basis.require_dense(DENSE_DIM_CAP)
    a = np.zeros((spec.dim, spec.dim), dtype=complex)
    for c, op in zip(spec.couplings, spec._operators):
        amp = c.pulse.amplitude(t)
        if amp != 0:
            a += amp * op
    return a + a.conj().T


# ----------------------------------------------------------------------------
# constructors for the gate Hamiltonians


def _comp_span(basis: ProductBasis, sites: Sequence[int]) -> list[tuple[str, ...]]:
    return st.product_span(*(basis.site_graphs[s].labels_v1 for s in sites))


def _coerce(obj, span, n_sites):
    return st.normalize(st.as_state(obj, span=span, n_sites=n_sites))


def _complement_info(states, span):
    rest = st.orthonormal_basis_with_complement(states, span)[:, len(states):]
    return [{lab: complex(c) for lab, c in zip(span, col) if abs(c) > 1e-15} for col in rest.T]


def bright_state(amp0: complex, amp1: complex) -> np.ndarray:
    """Computational vector coupled to the auxiliary level by ``amp0 |a><0| + amp1 |a><1|``."""
    v = np.conj(np.array([amp0, amp1], dtype=complex))
    return v / np.linalg.norm(v)


def _first_amplitude(p: SegmentedPulse) -> complex:
    for env, phase in p.segments:
        if env.peak_amplitude > 0:
            return env.peak_amplitude * np.exp(1j * phase)
    return 0j


def _check_constant_ratio(p0: SegmentedPulse, p1: SegmentedPulse, tol: float = 1e-12) -> None:
    if len(p0.segments) != len(p1.segments):
        raise RatioNotConstant("pulses have different segment counts")
    ratio = None
    dphase = None
    for (e0, f0), (e1, f1) in zip(p0.segments, p1.segments):
        if e0.shape != e1.shape or abs(e0.duration - e1.duration) > tol:
            raise RatioNotConstant("pulses differ in envelope shape or timing")
        if e0.peak_amplitude == 0 and e1.peak_amplitude == 0:
            continue
        if e1.peak_amplitude == 0 or e0.peak_amplitude == 0:
            r = 0.0 if e0.peak_amplitude == 0 else np.inf
        else:
            r = e0.peak_amplitude / e1.peak_amplitude
        if ratio is None:
            ratio = r
        elif not np.isclose(r, ratio, rtol=1e-12, atol=0):
            raise RatioNotConstant("amplitude ratio changes between segments")
        if 0 < r < np.inf:
            d = np.angle(np.exp(1j * (f0 - f1)))
            if dphase is None:
                dphase = d
            elif abs(np.angle(np.exp(1j * (d - dphase)))) > tol:
                raise RatioNotConstant("relative phase changes between segments")


def h1_spec(
    basis: ProductBasis,
    amp0: SegmentedPulse,
    amp1: SegmentedPulse,
    *,
    site: int = 0,
    aux: str = "a0",
    levels: tuple[str, str] = ("0", "1"),
) -> HamiltonianSpec:
    """One auxiliary level driven from two computational levels with a fixed amplitude ratio."""
    _check_constant_ratio(amp0, amp1)
    couplings = [
        Coupling((site,), {(aux,): 1}, {(levels[0],): 1}, amp0),
        Coupling((site,), {(aux,): 1}, {(levels[1],): 1}, amp1),
    ]
    for lab in levels:
        if not basis.site_graphs[site].is_computational(lab):
            raise SupportOutsideSpan(f"level {lab!r} is not computational")
    info = {}
    a0, a1 = _first_amplitude(amp0), _first_amplitude(amp1)
    if abs(a0) + abs(a1) > 0:
        b = bright_state(a0, a1)
        info["bright"] = {(levels[0],): b[0], (levels[1],): b[1]}
        info["dark"] = {(levels[0],): -np.conj(b[1]), (levels[1],): np.conj(b[0])}
    return HamiltonianSpec(basis, tuple(couplings), "h1", info)


def _multi_spec(basis, sites, states, aux_list, pulses, span, label):
    if len(states) != len(pulses):
        raise InputError("one pulse per coupled state is required")
    coerced = [_coerce(s, span, len(sites)) for s in states]
    for s in coerced:
        st.check_in_span(s, span)
    st.check_orthogonal(coerced)
    couplings = tuple(
        Coupling(tuple(sites), {aux: 1}, s, p) for s, aux, p in zip(coerced, aux_list, pulses)
    )
    full_span = _comp_span(basis, sites)
    info = {"states": coerced, "complement": _complement_info(coerced, span), "span": span}
    if span != full_span:
        info["spectator_span"] = [lab for lab in full_span if lab not in span]
    return HamiltonianSpec(basis, couplings, label, info)


def h2_spec(basis, phi0, phi1, pulse0, pulse1, *, sites=(0, 1)) -> HamiltonianSpec:
    """``|a0a0><phi0| + |a1a1><phi1|`` with both states in Span{|10>, |11>}."""
    span = [("1", "0"), ("1", "1")]
    return _multi_spec(
        basis, sites, [phi0, phi1], [("a0", "a0"), ("a1", "a1")], [pulse0, pulse1], span, "h2"
    )


def h3_spec(basis, phi_a, phi_b, phi_c, pulses, *, sites=(0, 1)) -> HamiltonianSpec:
    """Three orthogonal two-qubit states coupled to |a0a0>, |a1a1>, |a0a1>."""
    span = st.product_span(("0", "1"), ("0", "1"))
    return _multi_spec(
        basis,
        sites,
        [phi_a, phi_b, phi_c],
        [("a0", "a0"), ("a1", "a1"), ("a0", "a1")],
        list(pulses),
        span,
        "h3",
    )


def h4_spec(basis, psi0, psi1, pulse0, pulse1, *, site=0) -> HamiltonianSpec:
    """``|a0><psi0| + |a1><psi1|`` on one five-level ion."""
    span = [("0",), ("1",), ("2",)]
    return _multi_spec(basis, (site,), [psi0, psi1], [("a0",), ("a1",)], [pulse0, pulse1], span, "h4")


def h5_spec(basis, psi_a, psi_b, psi_c, pulses, *, sites=(0, 1)) -> HamiltonianSpec:
    """Three orthogonal states in Span{|20>, |21>, |22>} coupled to |a0a0>, |a1a1>, |a0a1>."""
    span = [("2", "0"), ("2", "1"), ("2", "2")]
    return _multi_spec(
        basis,
        sites,
        [psi_a, psi_b, psi_c],
        [("a0", "a0"), ("a1", "a1"), ("a0", "a1")],
        list(pulses),
        span,
        "h5",
    )
