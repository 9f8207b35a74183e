"""Small helpers for local superposition states.

A local state is a dict mapping a tuple of level labels (one per named site)
to a complex amplitude. Spans are ordered lists of such label tuples.
"""

from __future__ import annotations

import itertools
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, NonOrthogonalStates, SupportOutsideSpan

ORTHO_TOL = 1e-12

LocalState = dict


def ket(*labels: str) -> LocalState:
    return {tuple(str(x) for x in labels): 1.0 + 0j}


def product_span(*level_sets: Sequence[str]) -> list[tuple[str, ...]]:
    return [tuple(p) for p in itertools.product(*level_sets)]


def as_state(obj, span: Sequence[tuple[str, ...]] | None = None, n_sites: int | None = None) -> LocalState:
    """Coerce a mapping, a label tuple, a label string or a coefficient list into a state.

    Coefficient lists are read against ``span``. Label strings like ``"10"``
    are split into one character per site when ``n_sites`` matches.
    """
    if isinstance(obj, Mapping):
        out = {}
        for key, amp in obj.items():
            if isinstance(key, str):
                key = _split_key(key, n_sites)
            out[tuple(str(k) for k in key)] = complex(amp)
        return out
    if isinstance(obj, str):
        return {_split_key(obj, n_sites): 1.0 + 0j}
    if isinstance(obj, tuple) and obj and all(isinstance(x, str) for x in obj):
        return {obj: 1.0 + 0j}
    coeffs = np.asarray(obj, dtype=complex).ravel()
    if span is None or len(coeffs) != len(span):
        raise InputError("coefficient list needs a span of matching length")
    return {lab: complex(c) for lab, c in zip(span, coeffs) if c != 0}


def _split_key(key: str, n_sites: int | None) -> tuple[str, ...]:
    if "," in key:
        return tuple(k.strip() for k in key.split(","))
    if n_sites is not None and len(key) == n_sites:
        return tuple(key)
    if n_sites == 1:
        return (key,)
    raise InputError(f"cannot split state key {key!r} into {n_sites} site labels")


def norm(state: LocalState) -> float:
    return float(np.sqrt(sum(abs(a) ** 2 for a in state.values())))


def normalize(state: LocalState) -> LocalState:
    n = norm(state)
    if n == 0:
        raise InputError("zero state cannot be normalized")
    return {k: v / n for k, v in state.items() if v != 0}


def inner(a: LocalState, b: LocalState) -> complex:
    """<a|b>."""
    return complex(sum(np.conj(a[k]) * b[k] for k in a.keys() & b.keys()))


def to_vector(state: LocalState, span: Sequence[tuple[str, ...]]) -> np.ndarray:
    pos = {lab: i for i, lab in enumerate(span)}
    v = np.zeros(len(span), dtype=complex)
    for lab, amp in state.items():
        if lab not in pos:
            if amp != 0:
                raise SupportOutsideSpan(f"state has support on {lab}, outside the allowed span")
            continue
        v[pos[lab]] = amp
    return v


def check_in_span(state: LocalState, span: Sequence[tuple[str, ...]]) -> None:
    to_vector(state, span)


def check_orthogonal(states: Sequence[LocalState], tol: float = ORTHO_TOL) -> None:
    for i, j in itertools.combinations(range(len(states)), 2):
        ov = abs(inner(states[i], states[j]))
        if ov > tol:
            raise NonOrthogonalStates(f"states {i} and {j} overlap by {ov:.3g}")


def orthonormal_basis_with_complement(
    states: Sequence[LocalState], span: Sequence[tuple[str, ...]]
) -> np.ndarray:
    """Columns: the given states followed by an orthonormal basis of their complement in ``span``."""
    vecs = np.array([to_vector(s, span) for s in states]).T.reshape(len(span), len(states))
    q, _ = np.linalg.qr(np.hstack([vecs, np.eye(len(span), dtype=complex)]))
    rest = q[:, len(states):len(span)]
    # strip residual overlap with the given states before returning
    rest = rest - vecs @ (vecs.conj().T @ rest)
    rest, _ = np.linalg.qr(rest)
    return np.hstack([vecs, rest])


def complement_state(states: Sequence[LocalState], span: Sequence[tuple[str, ...]]) -> LocalState:
    """The unique (up to phase) state in ``span`` orthogonal to ``states``.

    Phase is fixed so that the largest-magnitude amplitude is real positive.
    """
    if len(span) - len(states) != 1:
        raise InputError("complement is unique only when exactly one dimension is left")
    v = orthonormal_basis_with_complement(states, span)[:, -1]
    k = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[k]))
    return {lab: complex(c) for lab, c in zip(span, v) if abs(c) > 1e-15}


def random_orthonormal(rng: np.random.Generator, span: Sequence[tuple[str, ...]], k: int) -> list[LocalState]:
    """``k`` mutually orthogonal normalized states in ``span`` via Gram-Schmidt on Gaussian vectors."""
    raw = rng.normal(size=(len(span), k)) + 1j * rng.normal(size=(len(span), k))
    basis = []
    for col in raw.T:
        v = col.copy()
        for b in basis:
            v = v - np.vdot(b, v) * b
        for b in basis:
            v = v - np.vdot(b, v) * b
        basis.append(v / np.linalg.norm(v))
    return [{lab: complex(c) for lab, c in zip(span, v)} for v in basis]
