"""Two-ion bichromatic coupling through a shared phonon mode.

The full model is the interaction-picture Hamiltonian with explicit
``e^{+-i delta t}`` factors, one phonon mode truncated at ``n_max``. For large
detuning it reduces to direct two-ion couplings whose strengths are
products of the drive amplitudes over ``delta``. :func:`validate_effective`
measures how well the reduction holds by simulating both.

Every term of the full model carries the same ``|delta|``, so a diagonal
frame generator ``H0`` (one auxiliary-level energy per ion) removes the
explicit time dependence: ``H_I(t) = e^{i H0 t} V(t) e^{-i H0 t}`` with
``V(t)`` varying only through the envelopes. Populations are identical in
both frames; the dense integrator runs in the ``H0 + V(t)`` frame.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DetuningTooSmall, InputError, InvalidCutoff, NoConvergence
from .hamiltonian import Coupling, HamiltonianSpec
from .levelspace import DENSE_DIM_CAP, LevelGraph, ProductBasis, qubit4
from .propagate import evolve_dense
from .pulses import Envelope, SegmentedPulse

LAMB_DICKE_LIMIT = 0.1
LAMB_DICKE_WARN = 0.05
DETUNING_FLOOR = 2.0
DETUNING_PRECONDITION = 10.0
DETUNING_WARN = 20.0
LEAKAGE_CONSTANT = 4.0
CUTOFF_TOL = 1e-6


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class IonPhononModel:
    """Parameters of the bichromatic two-ion drive.

    ``omegas`` are the peak Rabi frequencies of the four beams; each is
    multiplied by the common envelope ``shape`` over ``duration`` (a constant
    envelope ignores ``duration`` except as the run length default).
    """

    eta: float
    delta: float
    omegas: tuple[float, float, float, float]
    n_max: int = 3
    mechanism: str = "first"
    k: str = "0"
    l: str = "1"
    a: str = "a0"
    nu: float = 1.0
    shape: str = "constant"
    duration: float | None = None
    site_graph: LevelGraph = field(default_factory=qubit4)

    def __post_init__(self):
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        if len(self.omegas) != 4:
            raise InputError("four drive amplitudes are required")
        if self.mechanism not in ("first", "second"):
            raise InputError("mechanism must be 'first' or 'second'")
        if self.delta == 0:
            raise InputError("delta must be nonzero")
        if self.n_max < 0:
            raise InvalidCutoff("n_max must be >= 0")
        ld = self.eta**2 * (self.n_max + 1)
        if ld > LAMB_DICKE_LIMIT:
            raise InvalidCutoff(f"eta^2 (n_max + 1) = {ld:.3g} exceeds {LAMB_DICKE_LIMIT}")
        if ld > LAMB_DICKE_WARN:
            warnings.warn(f"eta^2 (n_max + 1) = {ld:.3g} is close to the Lamb-Dicke limit", RegimeWarning)
        if len({self.k, self.l}) != 2:
            raise InputError("k and l must be different levels")
        g = self.site_graph
        for lab in (self.k, self.l):
            if not g.is_computational(lab):
                raise InputError(f"{lab!r} must be a computational level")
        if g.is_computational(self.a):
            raise InputError(f"{self.a!r} must be an auxiliary level")
        if self.shape not in ("constant", "sine_squared"):
            raise InputError("drive envelopes are constant or sine_squared")
        if self.shape != "constant" and not self.duration:
            raise InputError("a shaped envelope needs a duration")

    @property
    def basis(self) -> ProductBasis:
        return ProductBasis((self.site_graph, self.site_graph), self.n_max)

    @property
    def max_coupling(self) -> float:
        return abs(self.eta) * max(abs(w) for w in self.omegas)

    @property
    def detuning_ratio(self) -> float:
        mc = self.max_coupling
        return math.inf if mc == 0 else abs(self.delta) / mc

    def envelope(self, t: float) -> float:
        if self.shape == "constant":
            return 1.0
        return Envelope("sine_squared", 1.0, self.duration).value(t)

    def with_cutoff(self, n_max: int) -> "IonPhononModel":
        return IonPhononModel(
            self.eta, self.delta, self.omegas, n_max, self.mechanism, self.k, self.l, self.a,
            self.nu, self.shape, self.duration, self.site_graph,
        )


def _ladder(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)


def _ion_op(g: LevelGraph, to: str, frm: str) -> np.ndarray:
    m = np.zeros((g.dim, g.dim), dtype=complex)
    m[g.level_index(to), g.level_index(frm)] = 1
    return m


def _terms(model: IonPhononModel):
    """(coefficient, operator, sign of delta in the exponent) for every term before h.c."""
    g = model.site_graph
    eye = np.eye(g.dim, dtype=complex)
    b = _ladder(model.n_max)
    bd = b.conj().T
    k, l, a = model.k, model.l, model.a
    on1 = lambda op, ph: np.kron(np.kron(op, eye), ph)  # noqa: E731
    on2 = lambda op, ph: np.kron(np.kron(eye, op), ph)  # noqa: E731
    w1, w2, w3, w4 = model.omegas
    eta = model.eta
    terms = [
        (1j * eta * w1, on1(_ion_op(g, a, k), bd), -1),
        (1j * eta * w2, on1(_ion_op(g, a, k), b), -1),
    ]
    if model.mechanism == "first":
        terms += [
            (1j * eta * w3, on2(_ion_op(g, a, l), b), +1),
            (1j * eta * w4, on2(_ion_op(g, a, k), bd), +1),
        ]
    else:
        terms += [
            (1j * eta * w3, on2(_ion_op(g, a, l), bd), -1),
            (1j * eta * w4, on2(_ion_op(g, a, k), b), -1),
        ]
    return terms


def full_hamiltonian(model: IonPhononModel, t: float) -> np.ndarray:
    """Interaction-picture Hamiltonian over ion1 x ion2 x Fock(n_max) at time ``t``."""
    dim = model.basis.total_dim
    if dim > DENSE_DIM_CAP:
        from .errors import DimensionOverflow

        raise DimensionOverflow(f"dimension {dim} exceeds the dense cap")
    h = np.zeros((dim, dim), dtype=complex)
    env = model.envelope(t)
    for coef, op, s in _terms(model):
        h += coef * env * np.exp(1j * s * model.delta * t) * op
    return h + h.conj().T


def frame_energies(model: IonPhononModel) -> np.ndarray:
    """Diagonal of ``H0``: each ion's auxiliary level shifted by the sign of its terms times delta."""
    g = model.site_graph
    e1 = np.zeros(g.dim)
    e2 = np.zeros(g.dim)
    e1[g.level_index(model.a)] = -model.delta
    e2[g.level_index(model.a)] = (1 if model.mechanism == "first" else -1) * model.delta
    phon = np.zeros(model.n_max + 1)
    return (e1[:, None, None] + e2[None, :, None] + phon[None, None, :]).ravel()


@dataclass
class FrameHamiltonian:
    """``H0 + V(t)``: the full model in the frame where its carrier phases vanish."""

    model: IonPhononModel
    total_time: float

    def __post_init__(self):
        self.dim = self.model.basis.total_dim
        self.piecewise_constant = self.model.shape == "constant"
        self._h0 = np.diag(frame_energies(self.model)).astype(complex)
        v = np.zeros((self.dim, self.dim), dtype=complex)
        for coef, op, _ in _terms(self.model):
            v += coef * op
        self._v = v + v.conj().T

    def breakpoints(self):
        return (0.0, float(self.total_time))

    def matrix(self, t: float) -> np.ndarray:
        return self._h0 + self.model.envelope(t) * self._v


@dataclass
class InteractionHamiltonian:
    """:func:`full_hamiltonian` wrapped for the dense integrator (short windows only)."""

    model: IonPhononModel
    total_time: float

    def __post_init__(self):
        self.dim = self.model.basis.total_dim

    def breakpoints(self):
        return (0.0, float(self.total_time))

    def matrix(self, t: float) -> np.ndarray:
        return full_hamiltonian(self.model, t)


def _check_detuning(model: IonPhononModel) -> None:
    r = model.detuning_ratio
    if r < DETUNING_FLOOR:
        raise DetuningTooSmall(
            f"|delta| / max|eta omega| = {r:.3g} is below the hard floor {DETUNING_FLOOR}"
        )
    if r < DETUNING_WARN:
        warnings.warn(
            f"|delta| / max|eta omega| = {r:.3g} is below {DETUNING_WARN}; the effective description is marginal",
            RegimeWarning,
        )


def effective_couplings(model: IonPhononModel) -> tuple[float, float]:
    """Peak effective two-ion couplings.

    First mechanism: ``(Omega_kl, Omega_kk)`` for ``|aa><kl|`` and ``|aa><kk|``.
    Second mechanism: ``(Omega_al, Omega_ak)`` for ``|ka><al|`` and ``|ka><ak|``.
    """
    _check_detuning(model)
    eta2 = model.eta**2
    w1, w2, w3, w4 = model.omegas
    if model.mechanism == "first":
        return -eta2 * w1 * w3 / model.delta, eta2 * w2 * w4 / model.delta
    return eta2 * w1 * w3 / model.delta, -eta2 * w2 * w4 / model.delta


def _transfer_states(model: IonPhononModel):
    """(source, target) ion labels of the primary effective coupling."""
    k, l, a = model.k, model.l, model.a
    if model.mechanism == "first":
        return (k, l), (a, a)
    return (a, l), (k, a)


def _amplitude_pulse(value: float, model: IonPhononModel, duration: float) -> SegmentedPulse:
    shape = "constant" if model.shape == "constant" else "sine_quartic"
    env = Envelope(shape, abs(value), duration)
    return SegmentedPulse(((env, math.pi if value < 0 else 0.0),))


def effective_hamiltonian_spec(
    model: IonPhononModel, basis: ProductBasis | None = None, duration: float | None = None
) -> HamiltonianSpec:
    """The reduced two-ion Hamiltonian (no phonon factor)."""
    basis = basis or ProductBasis((model.site_graph, model.site_graph))
    duration = duration or model.duration or 1.0
    c_main, c_second = effective_couplings(model)
    k, l, a = model.k, model.l, model.a
    if model.mechanism == "first":
        pairs = [((a, a), (k, l), c_main), ((a, a), (k, k), c_second)]
    else:
        pairs = [((k, a), (a, l), c_main), ((k, a), (a, k), c_second)]
    couplings = tuple(
        Coupling((0, 1), {to: 1.0}, {frm: 1.0}, _amplitude_pulse(c, model, duration))
        for to, frm, c in pairs
        if c != 0
    )
    return HamiltonianSpec(basis, couplings, f"effective-{model.mechanism}")


@dataclass
class EffectiveValidation:
    detuning_ratio: float
    transfer_frequency_full: float | None
    transfer_frequency_eff: float
    relative_error: float | None
    max_phonon_leakage: float
    max_single_excitation: float
    leakage_bound: float
    max_population_error: float
    max_norm_error: float
    total_time: float
    mechanism: str
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "detuning_ratio": self.detuning_ratio,
            "total_time": self.total_time,
            "transfer_frequency_full": self.transfer_frequency_full,
            "transfer_frequency_eff": self.transfer_frequency_eff,
            "relative_error": self.relative_error,
            "max_phonon_leakage": self.max_phonon_leakage,
            "max_single_excitation": self.max_single_excitation,
            "leakage_bound": self.leakage_bound,
            "max_population_error": self.max_population_error,
            "max_norm_error": self.max_norm_error,
            "warnings": list(self.warnings),
        }


def _doublet_frequency(h: np.ndarray, src: int, dst: int) -> complex:
    """Signed coupling of the near-degenerate pair that carries the src <-> dst oscillation."""
    w, v = np.linalg.eigh(h)
    weight = np.abs(v[src]) ** 2 + np.abs(v[dst]) ** 2
    i, j = np.argsort(weight)[-2:]
    hi, lo = (i, j) if w[i] > w[j] else (j, i)
    r = v[dst, hi] / v[src, hi]
    return 0.5 * (w[hi] - w[lo]) * r / abs(r)


def _fine_times(model, total_time):
    per_period = 24
    n = int(min(400_000, max(2_000, per_period * abs(model.delta) * total_time / (2 * math.pi))))
    return np.linspace(0.0, total_time, n + 1)


def _integrate_state(matrix, psi0, times):
    """State trajectory under a smooth envelope, sampled at ``times``.

    A fixed-order product formula would need millions of substeps to resolve
    the detuning oscillation over a whole transfer, so an adaptive
    high-order Runge-Kutta on the state vector is used instead.
    """
    sol = solve_ivp(
        lambda t, y: -1j * (matrix(t) @ y), (times[0], times[-1]), psi0,
        method="DOP853", t_eval=times, rtol=1e-12, atol=1e-13,
    )
    if not sol.success:
        raise NoConvergence(f"state integration failed: {sol.message}")
    return sol.y.T


def validate_effective(
    model: IonPhononModel, total_time: float | None = None
) -> EffectiveValidation:
    """Compare the full ion-phonon dynamics with the reduced two-ion model.

    Starts in the coupling's source state with no phonons. ``total_time``
    defaults to one complete transfer under the effective coupling.
    """
    caught: list[str] = []
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always", RegimeWarning)
        c_main, _ = effective_couplings(model)
    caught += [str(w.message) for w in rec]
    for msg in caught:
        warnings.warn(msg, RegimeWarning)
    if c_main == 0:
        raise InputError("the primary effective coupling vanishes; nothing to validate")
    if total_time is None:
        total_time = model.duration if model.shape != "constant" else math.pi / (2 * abs(c_main))
    basis = model.basis
    src_l, dst_l = _transfer_states(model)
    src = basis.index_of((*src_l, 0))
    dst = basis.index_of((*dst_l, 0))
    frame = FrameHamiltonian(model, total_time)

    # populations in the full model, on a grid fine enough to resolve the delta oscillation
    psi0 = np.zeros(basis.total_dim, dtype=complex)
    psi0[src] = 1.0
    digits = basis.index_to_digits(np.arange(basis.total_dim))
    excited = (digits[:, -1] > 0)
    if frame.piecewise_constant:
        times = _fine_times(model, total_time)
        w, v = np.linalg.eigh(frame.matrix(0.0))
        coeff = v.conj().T @ psi0
        traj = (v @ (np.exp(-1j * np.outer(w, times)) * coeff[:, None])).T
        freq_full = _doublet_frequency(frame.matrix(0.0), src, dst)
        u = evolve_dense(frame, samples_per_segment=1).unitary
        norm_extra = float(abs(np.linalg.norm(u @ psi0) - 1.0))
    else:
        times = _fine_times(model, total_time)
        traj = _integrate_state(frame.matrix, psi0, times)
        freq_full = None
        norm_extra = 0.0
    pops = np.abs(traj) ** 2
    norm_err = max(float(np.max(np.abs(pops.sum(axis=1) - 1.0))), norm_extra)
    phonon = float(np.max(pops[:, excited].sum(axis=1)))
    single = float(np.max(1.0 - pops[:, src] - pops[:, dst]))

    eff_spec = effective_hamiltonian_spec(model, duration=total_time)
    eb = eff_spec.basis
    esrc, edst = eb.index_of(src_l), eb.index_of(dst_l)
    if frame.piecewise_constant:
        h_eff = eff_spec.matrix(0.0)
        we, ve = np.linalg.eigh(h_eff)
        ce = ve.conj().T[:, esrc]
        eff_traj = (ve @ (np.exp(-1j * np.outer(we, times)) * ce[:, None])).T
    else:
        e0 = np.zeros(eb.total_dim, dtype=complex)
        e0[esrc] = 1.0
        eff_traj = _integrate_state(eff_spec.matrix, e0, times)
    pop_err = float(np.max(np.abs(np.abs(eff_traj[:, edst]) ** 2 - pops[:, dst])))

    rel = None
    f_full = None
    if freq_full is not None:
        f_full = float(np.real(freq_full)) if abs(np.imag(freq_full)) < 1e-9 * abs(freq_full) else abs(freq_full)
        rel = float(abs(freq_full - c_main) / abs(c_main))
        if rel >= 0.1:
            caught.append(f"relative error {rel:.3g} signals a breakdown of the effective description")
    bound = LEAKAGE_CONSTANT * (model.max_coupling / model.delta) ** 2
    return EffectiveValidation(
        detuning_ratio=model.detuning_ratio,
        transfer_frequency_full=f_full,
        transfer_frequency_eff=float(c_main),
        relative_error=rel,
        max_phonon_leakage=phonon,
        max_single_excitation=single,
        leakage_bound=bound,
        max_population_error=pop_err,
        max_norm_error=norm_err,
        total_time=float(total_time),
        mechanism=model.mechanism,
        warnings=caught,
    )


def cutoff_sensitivity(model: IonPhononModel, extra: int = 2, total_time: float | None = None) -> float:
    """Largest change of the validation figures when the Fock cutoff is raised by ``extra``."""
    a = validate_effective(model, total_time)
    b = validate_effective(model.with_cutoff(model.n_max + extra), a.total_time)
    keys = ["transfer_frequency_full", "max_phonon_leakage", "max_single_excitation", "max_population_error"]
    diffs = []
    for key in keys:
        x, y = getattr(a, key), getattr(b, key)
        if x is not None and y is not None:
            diffs.append(abs(x - y))
    return max(diffs)
