"""Parallel-transport and cyclicity checks, holonomy extraction, gate fidelity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .propagate import Propagation


@dataclass
class DynamicalPhaseScan:
    max_normalized: float
    max_element: float
    peak_norm: float
    integrated: np.ndarray
    aux_max_normalized: float


@dataclass
class HolonomyReport:
    max_dynamical_element: float
    cyclicity_leakage: float
    holonomy_matrix: np.ndarray
    fidelity_vs_target: float | None = None
    aux_dynamical_element: float | None = None

    def to_dict(self) -> dict:
        return {
            "max_dynamical_element": self.max_dynamical_element,
            "aux_dynamical_element": self.aux_dynamical_element,
            "cyclicity_leakage": self.cyclicity_leakage,
            "fidelity_vs_target": self.fidelity_vs_target,
            "holonomy_matrix": complex_matrix_to_json(self.holonomy_matrix),
        }


def complex_matrix_to_json(m: np.ndarray) -> dict:
    m = np.asarray(m)
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def _subspace_indices(spec_or_dim, subspace):
    if subspace is not None:
        return np.asarray(subspace, dtype=np.int64)
    return spec_or_dim.basis.computational_indices()


def dynamical_phase_scan(spec, propagation: Propagation, subspace=None) -> DynamicalPhaseScan:
    """Largest ``|<k|U^dag(t) H(t) U(t)|l>|`` over checkpoints and computational pairs.

    The value is divided by the largest spectral norm of ``H`` seen at the
    checkpoints. ``integrated`` is the trapezoid-rule time integral of the
    same matrix, for diagnostics. Auxiliary pairs are scanned too and
    returned separately; they are informational only.
    """
    idx = _subspace_indices(spec, subspace)
    aux = np.setdiff1d(np.arange(spec.dim), idx)
    times = [t for t, _ in propagation.checkpoints]
    mats, aux_vals = [], []
    peak = 0.0
    for t, u in propagation.checkpoints:
        h = spec.matrix(t)
        peak = max(peak, float(np.linalg.norm(h, 2)))
        up = u[:, idx]
        mats.append(up.conj().T @ h @ up)
        if len(aux):
            ua = u[:, aux]
            aux_vals.append(float(np.max(np.abs(ua.conj().T @ h @ ua))))
    mats = np.array(mats)
    if len(mats) > 1:
        integrated = np.trapezoid(mats, x=np.array(times), axis=0)
    else:
        integrated = np.zeros((len(idx), len(idx)), dtype=complex)
    max_el = float(np.max(np.abs(mats))) if len(mats) else 0.0
    if peak == 0.0:
        return DynamicalPhaseScan(0.0, max_el, 0.0, integrated, 0.0)
    return DynamicalPhaseScan(
        max_el / peak, max_el, peak, integrated, (max(aux_vals) / peak) if aux_vals else 0.0
    )


def cyclicity_and_holonomy(propagation, subspace) -> tuple[float, np.ndarray]:
    """Leakage ``||(I - P) U P||_max`` and the block ``P U P`` in subspace coordinates."""
    u = propagation.unitary if isinstance(propagation, Propagation) else np.asarray(propagation)
    idx = np.asarray(subspace, dtype=np.int64)
    outside = np.setdiff1d(np.arange(u.shape[0]), idx)
    block = u[np.ix_(idx, idx)]
    leak = float(np.max(np.abs(u[np.ix_(outside, idx)]))) if len(outside) else 0.0
    return leak, block


def gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """``|Tr(U^dag V)| / d``; equals 1 exactly when ``U = e^{i alpha} V``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise DimensionMismatch(f"cannot compare shapes {u.shape} and {v.shape}")
    f = abs(np.trace(u.conj().T @ v)) / u.shape[0]
    return float(min(1.0, max(0.0, f)))


def holonomy_report(spec, propagation: Propagation, target=None, subspace=None) -> HolonomyReport:
    idx = _subspace_indices(spec, subspace)
    scan = dynamical_phase_scan(spec, propagation, idx)
    leak, block = cyclicity_and_holonomy(propagation, idx)
    fid = None if target is None else gate_fidelity(block, np.asarray(target))
    return HolonomyReport(scan.max_normalized, leak, block, fid, scan.aux_max_normalized)
