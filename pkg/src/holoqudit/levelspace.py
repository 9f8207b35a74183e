"""Level structures of single ions and indexed product spaces of ion chains.

A :class:`LevelGraph` splits the levels of one ion into a computational set
and an auxiliary set; driven transitions (edges) may only join the two sets.
A :class:`ProductBasis` orders the tensor product of several such ions,
optionally times a truncated phonon mode, lexicographically with site 0 the
most significant digit and the phonon number the least significant.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionOverflow, DuplicateLabel, InputError, IntraSetEdge, InvalidCutoff, InvalidLabel

DENSE_DIM_CAP = 4096


@dataclass(frozen=True)
class LevelGraph:
    labels_v1: tuple[str, ...]
    labels_v2: tuple[str, ...]
    edges: frozenset[frozenset[str]]

    def __post_init__(self):
        if not self.labels_v1 or not self.labels_v2:
            raise InputError("both level sets must be non-empty")
        seen = set()
        for label in self.labels_v1 + self.labels_v2:
            if label in seen:
                raise DuplicateLabel(f"level label {label!r} used twice")
            seen.add(label)
        for edge in self.edges:
            if len(edge) != 2:
                raise InputError(f"edge {sorted(edge)} must join two distinct levels")
            a, b = sorted(edge)
            for label in (a, b):
                if label not in seen:
                    raise InvalidLabel(f"edge endpoint {label!r} is not a level")
            if (a in self.labels_v1) == (b in self.labels_v1):
                raise IntraSetEdge(f"edge ({a}, {b}) joins two levels of the same set")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.labels_v1 + self.labels_v2

    @property
    def dim(self) -> int:
        return len(self.labels_v1) + len(self.labels_v2)

    def level_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InvalidLabel(f"unknown level {label!r}") from None

    def is_computational(self, label: str) -> bool:
        if label not in self.labels:
            raise InvalidLabel(f"unknown level {label!r}")
        return label in self.labels_v1

    def has_edge(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.edges


def build_level_graph(
    labels_v1: Sequence[str],
    labels_v2: Sequence[str],
    edges: Iterable[Sequence[str]] | None = None,
) -> LevelGraph:
    """Validate and build a level graph.

    ``edges=None`` connects every computational level to every auxiliary one.
    """
    v1 = tuple(str(x) for x in labels_v1)
    v2 = tuple(str(x) for x in labels_v2)
    if edges is None:
        edge_set = frozenset(frozenset((a, b)) for a in v1 for b in v2)
    else:
        edge_set = frozenset(frozenset(str(x) for x in e) for e in edges)
        for e in edges:
            if len(set(e)) != 2:
                raise InputError(f"edge {tuple(e)} must join two distinct levels")
    return LevelGraph(v1, v2, edge_set)


def qubit4() -> LevelGraph:
    """Four levels: computational {0, 1}, auxiliary {a0, a1}, fully connected."""
    return build_level_graph(["0", "1"], ["a0", "a1"])


def qutrit5() -> LevelGraph:
    """Five levels: computational {0, 1, 2}, auxiliary {a0, a1}, fully connected."""
    return build_level_graph(["0", "1", "2"], ["a0", "a1"])


PRESETS = {"qubit4": qubit4, "qutrit5": qutrit5}


@dataclass(frozen=True)
class ProductBasis:
    site_graphs: tuple[LevelGraph, ...]
    phonon_cutoff: int | None = None
    total_dim: int = field(init=False)

    def __post_init__(self):
        if not self.site_graphs:
            raise InputError("a product basis needs at least one site")
        if self.phonon_cutoff is not None and self.phonon_cutoff < 0:
            raise InvalidCutoff("phonon cutoff must be >= 0")
        object.__setattr__(self, "total_dim", int(np.prod(self.dims, dtype=object)))

    @property
    def n_sites(self) -> int:
        return len(self.site_graphs)

    @property
    def dims(self) -> tuple[int, ...]:
        d = tuple(g.dim for g in self.site_graphs)
        if self.phonon_cutoff is not None:
            d += (self.phonon_cutoff + 1,)
        return d

    @property
    def strides(self) -> np.ndarray:
        dims = self.dims
        s = np.ones(len(dims), dtype=np.int64)
        for k in range(len(dims) - 2, -1, -1):
            s[k] = s[k + 1] * dims[k + 1]
        return s

    def require_dense(self, cap: int = DENSE_DIM_CAP) -> None:
        if self.total_dim > cap:
            raise DimensionOverflow(
                f"dimension {self.total_dim} exceeds the dense cap {cap}; use the analytic pathway"
            )

    def index_of(self, labels: Sequence) -> int:
        labels = tuple(labels)
        if len(labels) != len(self.dims):
            raise InputError(f"expected {len(self.dims)} labels, got {len(labels)}")
        idx = 0
        for k, (label, d) in enumerate(zip(labels, self.dims)):
            if k < self.n_sites:
                digit = self.site_graphs[k].level_index(str(label))
            else:
                digit = int(label)
                if not 0 <= digit < d:
                    raise InvalidLabel(f"phonon number {label} outside [0, {d - 1}]")
            idx = idx * d + digit
        return idx

    def labels_of(self, index: int) -> tuple:
        if not 0 <= index < self.total_dim:
            raise InputError(f"index {index} outside [0, {self.total_dim})")
        digits = []
        for d in reversed(self.dims):
            index, r = divmod(index, d)
            digits.append(r)
        digits.reverse()
        out: list = [g.labels[i] for g, i in zip(self.site_graphs, digits)]
        if self.phonon_cutoff is not None:
            out.append(digits[-1])
        return tuple(out)

    def digits_to_index(self, digits: np.ndarray) -> np.ndarray:
        """Vectorized: rows of per-factor level indices to flat indices."""
        return np.asarray(digits, dtype=np.int64) @ self.strides

    def index_to_digits(self, index: np.ndarray) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        return (index[..., None] // self.strides) % np.asarray(self.dims, dtype=np.int64)

    def computational_digits(self, phonon: int = 0) -> np.ndarray:
        """All-computational product configurations in basis order, one per row."""
        ranges = [range(len(g.labels_v1)) for g in self.site_graphs]
        rows = np.array(list(itertools.product(*ranges)), dtype=np.int64)
        if self.phonon_cutoff is not None:
            rows = np.hstack([rows, np.full((len(rows), 1), phonon, dtype=np.int64)])
        return rows

    def computational_indices(self, phonon: int = 0) -> np.ndarray:
        return self.digits_to_index(self.computational_digits(phonon))

    def computational_labels(self) -> list[tuple[str, ...]]:
        return [
            tuple(g.labels[i] for g, i in zip(self.site_graphs, row))
            for row in self.computational_digits()
        ]


def product_space(
    site_graphs: Sequence[LevelGraph],
    phonon_cutoff: int | None = None,
    *,
    dense: bool = False,
    cap: int = DENSE_DIM_CAP,
) -> ProductBasis:
    basis = ProductBasis(tuple(site_graphs), phonon_cutoff)
    if dense:
        basis.require_dense(cap)
    return basis


def chain(graph: LevelGraph, n_sites: int, phonon_cutoff: int | None = None) -> ProductBasis:
    return ProductBasis((graph,) * n_sites, phonon_cutoff)
