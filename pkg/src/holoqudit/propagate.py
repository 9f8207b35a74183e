"""Time-ordered evolution operators.

Two routes are provided and cross-checked against each other:

* :func:`evolve_dense` multiplies short-time exponentials of the Hamiltonian
  sampled at sub-interval midpoints, doubling the resolution until the final
  operator stops changing.
* :func:`evolve_analytic` writes down the exact effect of resonant transfers
  with pulse areas that are multiples of pi/2. Such steps permute basis states
  and attach phases, so they act on labelled configurations directly and
  scale to chains far beyond dense storage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, InputError, NoConvergence, OverlappingTransfers
from .hamiltonian import Coupling, HamiltonianSpec
from .levelspace import DENSE_DIM_CAP, ProductBasis
from .pulses import Envelope, SegmentedPulse, envelope_for_area

CONVERGENCE_TOL = 1e-10
MAX_SUBSTEPS = 2**20
DEFAULT_SAMPLES = 64


class TimeDependentHamiltonian(Protocol):
    dim: int

    def breakpoints(self) -> Sequence[float]: ...

    def matrix(self, t: float) -> np.ndarray: ...


def expm_hermitian(h: np.ndarray, dt: float) -> np.ndarray:
    """``exp(-i h dt)`` for Hermitian ``h`` via its eigendecomposition."""
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


@dataclass
class Propagation:
    unitary: np.ndarray
    checkpoints: list[tuple[float, np.ndarray]] = field(default_factory=list)
    substeps: int = 1
    window: tuple[float, float] = (0.0, 0.0)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    def unitarity_error(self) -> float:
        u = self.unitary
        return float(np.max(np.abs(u.conj().T @ u - np.eye(len(u)))))


def _is_piecewise_constant(h) -> bool:
    if isinstance(h, HamiltonianSpec):
        return all(env.shape == "constant" for c in h.couplings for env, _ in c.pulse.segments)
    return bool(getattr(h, "piecewise_constant", False))


def _segments(h, window):
    t0, t1 = window
    pts = [t for t in h.breakpoints() if t0 < t < t1]
    edges = [t0, *pts, t1]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


_CHUNK_BYTES = 1 << 26


def _hamiltonians(h, ts) -> np.ndarray:
    if hasattr(h, "matrices"):
        return h.matrices(ts)
    return np.stack([h.matrix(t) for t in ts])


def _ordered_product(us: np.ndarray) -> np.ndarray:
    """``us[-1] @ ... @ us[0]`` by pairwise batched reduction."""
    while len(us) > 1:
        if len(us) % 2:
            us = np.concatenate([us, np.eye(us.shape[1], dtype=complex)[None]])
        us = us[1::2] @ us[0::2]
    return us[0]


def _interval(h, a: float, b: float, k: int) -> np.ndarray:
    """Midpoint product of ``k`` equal substeps over [a, b]."""
    dim = h.dim
    dt = (b - a) / k
    chunk = max(1, _CHUNK_BYTES // (16 * dim * dim))
    u = np.eye(dim, dtype=complex)
    for start in range(0, k, chunk):
        j = np.arange(start, min(k, start + chunk))
        w, v = np.linalg.eigh(_hamiltonians(h, a + (j + 0.5) * dt))
        steps = (v * np.exp(-1j * w * dt)[:, None, :]) @ np.conj(np.swapaxes(v, 1, 2))
        u = _ordered_product(steps) @ u
    return u


def _sweep(h, segments, samples, k, exact):
    """One pass over all segments with ``k`` midpoint substeps per sample interval."""
    dim = h.dim
    u = np.eye(dim, dtype=complex)
    checkpoints = [(segments[0][0] if segments else 0.0, u.copy())]
    for a, b in segments:
        ts = np.linspace(a, b, samples + 1)
        if exact:
            w, v = np.linalg.eigh(h.matrix(0.5 * (a + b)))
            vh = v.conj().T
        for s in range(samples):
            if exact:
                u = ((v * np.exp(-1j * w * (ts[s + 1] - ts[s]))) @ vh) @ u
            else:
                u = _interval(h, ts[s], ts[s + 1], k) @ u
            checkpoints.append((float(ts[s + 1]), u.copy()))
    return u, checkpoints


def evolve_dense(
    spec: TimeDependentHamiltonian,
    substeps_per_segment: int = 1,
    *,
    samples_per_segment: int = DEFAULT_SAMPLES,
    window: tuple[float, float] | None = None,
    tol: float = CONVERGENCE_TOL,
    max_substeps: int = MAX_SUBSTEPS,
) -> Propagation:
    """Midpoint-product propagator ``U(T, 0)`` with checkpoints.

    Each segment between phase breakpoints is cut into ``samples_per_segment``
    checkpoint intervals, each integrated with ``k`` midpoint substeps. ``k``
    starts at ``ceil(substeps_per_segment / samples)`` and doubles until the
    final operator changes by less than ``tol`` in max-norm. Hamiltonians that
    are constant on each segment are exponentiated exactly once per segment.
    """
    if substeps_per_segment < 1:
        raise InputError("substeps_per_segment must be >= 1")
    if spec.dim > DENSE_DIM_CAP:
        from .errors import DimensionOverflow

        raise DimensionOverflow(f"dimension {spec.dim} exceeds dense cap {DENSE_DIM_CAP}")
    bp = spec.breakpoints()
    window = window or (float(bp[0]), float(bp[-1]))
    segments = _segments(spec, window)
    samples = max(1, int(samples_per_segment))
    if _is_piecewise_constant(spec):
        u, cps = _sweep(spec, segments, samples, 1, exact=True)
        return Propagation(u, cps, 1, window)
    k = max(1, math.ceil(substeps_per_segment / samples))
    u, cps = _sweep(spec, segments, samples, k, exact=False)
    while True:
        if 2 * k * samples > max_substeps:
            raise NoConvergence(
                f"no convergence to {tol:g} within {max_substeps} substeps per segment"
            )
        u2, cps2 = _sweep(spec, segments, samples, 2 * k, exact=False)
        diff = float(np.max(np.abs(u2 - u)))
        k *= 2
        u, cps = u2, cps2
        if diff < tol:
            return Propagation(u, cps, k * samples, window)


# ----------------------------------------------------------------------------
# analytic transfer mode


@dataclass(frozen=True)
class Transfer:
    """Resonant drive ``|Omega| e^{i phase} |y><x| + h.c.`` on ``sites`` with a given pulse area."""

    sites: tuple[int, ...]
    x: tuple[str, ...]
    y: tuple[str, ...]
    area: float = math.pi / 2
    phase: float = 0.0
    tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "x", tuple(str(v) for v in self.x))
        object.__setattr__(self, "y", tuple(str(v) for v in self.y))
        if not (len(self.sites) == len(self.x) == len(self.y)):
            raise InputError("transfer sites and labels must have equal length")
        if self.x == self.y:
            raise InputError("transfer source and target coincide")
        quarter = self.area / (math.pi / 2)
        if self.area <= 0 or abs(quarter - round(quarter)) > 1e-12:
            raise InputError(f"analytic transfers need areas that are multiples of pi/2, got {self.area}")

    @property
    def quarters(self) -> int:
        return int(round(self.area / (math.pi / 2)))

    def reversed(self, extra_phase: float = math.pi) -> "Transfer":
        """Swap source and target; the drive is the forward one with phase shifted by ``extra_phase``.

        Writing the same Hamiltonian in swapped orientation conjugates the
        phase, hence the sign flip.
        """
        return Transfer(
            self.sites, self.y, self.x, self.area, (-(self.phase + extra_phase)) % (2 * math.pi), self.tag
        )

    def local_matrix(self) -> np.ndarray:
        """2x2 action on (x, y)."""
        theta = self.area
        e = np.exp(1j * self.phase)
        return np.array(
            [[np.cos(theta), -1j * np.conj(e) * np.sin(theta)], [-1j * e * np.sin(theta), np.cos(theta)]]
        )


def _overlap(t1: Transfer, t2: Transfer) -> bool:
    shared = [s for s in t1.sites if s in t2.sites]
    if not shared:
        return False
    i1 = [t1.sites.index(s) for s in shared]
    i2 = [t2.sites.index(s) for s in shared]
    p1 = {tuple(v[i] for i in i1) for v in (t1.x, t1.y)}
    p2 = {tuple(v[i] for i in i2) for v in (t2.x, t2.y)}
    return bool(p1 & p2)


def check_disjoint(transfers: Sequence[Transfer]) -> None:
    """Transfers in one step must act on disjoint sites or on disjoint local patterns of shared sites."""
    for i in range(len(transfers)):
        for j in range(i + 1, len(transfers)):
            if _overlap(transfers[i], transfers[j]):
                raise OverlappingTransfers(
                    f"transfers {transfers[i].tag or i} and {transfers[j].tag or j} couple overlapping states"
                )


@dataclass(frozen=True)
class PhasePermutation:
    """Product of exact transfer steps, applied in order, acting on labelled configurations."""

    basis: ProductBasis
    steps: tuple[tuple[Transfer, ...], ...]

    def __post_init__(self):
        for step in self.steps:
            check_disjoint(step)
            for tr in step:
                for s, a, b in zip(tr.sites, tr.x, tr.y):
                    g = self.basis.site_graphs[s]
                    g.level_index(a)
                    g.level_index(b)

    @property
    def dim(self) -> int:
        return self.basis.total_dim

    def then(self, other: "PhasePermutation") -> "PhasePermutation":
        return PhasePermutation(self.basis, self.steps + other.steps)

    def _encoded(self, tr: Transfer):
        sites = np.array(tr.sites)
        xd = np.array([self.basis.site_graphs[s].level_index(l) for s, l in zip(tr.sites, tr.x)])
        yd = np.array([self.basis.site_graphs[s].level_index(l) for s, l in zip(tr.sites, tr.y)])
        return sites, xd, yd

    def apply_step(self, step: Sequence[Transfer], digits: np.ndarray, amps: np.ndarray):
        digits = digits.copy()
        amps = amps.copy()
        for tr in step:
            sites, xd, yd = self._encoded(tr)
            local = digits[:, sites]
            on_x = np.all(local == xd, axis=1)
            on_y = np.all(local == yd, axis=1)
            q = tr.quarters % 4
            e = np.exp(1j * tr.phase)
            if q % 2 == 1:
                sgn = -1j if q == 1 else 1j
                digits[np.ix_(on_x, sites)] = yd
                digits[np.ix_(on_y, sites)] = xd
                amps[on_x] *= sgn * e
                amps[on_y] *= sgn * np.conj(e)
            elif q == 2:
                amps[on_x | on_y] *= -1
        return digits, amps

    def apply_digits(self, digits: np.ndarray, amps: np.ndarray | None = None, *, upto: int | None = None):
        """Push configurations (rows of level indices) through the first ``upto`` steps."""
        digits = np.asarray(digits, dtype=np.int64)
        amps = np.ones(len(digits), dtype=complex) if amps is None else np.asarray(amps, dtype=complex)
        for step in self.steps[: len(self.steps) if upto is None else upto]:
            digits, amps = self.apply_step(step, digits, amps)
        return digits, amps

    def apply_indices(self, indices: Iterable[int], amps=None):
        idx = np.asarray(list(indices), dtype=np.int64)
        d, a = self.apply_digits(self.basis.index_to_digits(idx), amps)
        return self.basis.digits_to_index(d), a

    def to_sparse(self) -> sp.csr_matrix:
        dim = self.dim
        if dim > 2**24:
            raise InputError("refusing to materialize a permutation over more than 2^24 states")
        rows, amps = self.apply_indices(np.arange(dim))
        return sp.csr_matrix((amps, (rows, np.arange(dim))), shape=(dim, dim))

    def to_dense(self) -> np.ndarray:
        self.basis.require_dense()
        return self.to_sparse().toarray()


def evolve_analytic(step: Sequence[Transfer], basis: ProductBasis) -> PhasePermutation:
    """Exact propagator of one step of simultaneous, non-overlapping transfers."""
    return PhasePermutation(basis, (tuple(step),))


def identity_permutation(basis: ProductBasis) -> PhasePermutation:
    return PhasePermutation(basis, ())


def step_spec(
    basis: ProductBasis,
    step: Sequence[Transfer],
    *,
    shape: str = "constant",
    duration: float = 1.0,
    label: str = "step",
) -> HamiltonianSpec:
    """The Hamiltonian whose evolution over ``duration`` realizes ``step``."""
    couplings = []
    for tr in step:
        env = envelope_for_area(shape, tr.area, duration)
        couplings.append(
            Coupling(tr.sites, {tr.y: 1.0}, {tr.x: 1.0}, SegmentedPulse(((env, tr.phase),)))
        )
    return HamiltonianSpec(basis, tuple(couplings), label)


def apply_to_state(propagation, state):
    """``U |psi>`` for a dense propagation, or for a phase permutation.

    For a :class:`PhasePermutation` the state may be a dense vector or a
    sparse ``{index: amplitude}`` mapping; a mapping is returned in that case.
    """
    if isinstance(propagation, PhasePermutation):
        if isinstance(state, dict):
            keys = np.fromiter(state.keys(), dtype=np.int64)
            if len(keys) and (keys.min() < 0 or keys.max() >= propagation.dim):
                raise DimensionMismatch("state index outside the basis")
            rows, amps = propagation.apply_indices(keys, np.array(list(state.values()), dtype=complex))
            out: dict[int, complex] = {}
            for r, a in zip(rows.tolist(), amps.tolist()):
                out[r] = out.get(r, 0) + a
            return out
        vec = np.asarray(state, dtype=complex)
        if vec.shape != (propagation.dim,):
            raise DimensionMismatch(f"state of shape {vec.shape} for dimension {propagation.dim}")
        nz = np.nonzero(vec)[0]
        rows, amps = propagation.apply_indices(nz, vec[nz])
        out_vec = np.zeros_like(vec)
        np.add.at(out_vec, rows, amps)
        return out_vec
    u = propagation.unitary if isinstance(propagation, Propagation) else np.asarray(propagation)
    vec = np.asarray(state, dtype=complex)
    if vec.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"state of length {vec.shape[0]} for dimension {u.shape[1]}")
    return u @ vec
