"""Finite CW-complexes stored combinatorially.

A :class:`Complex` is a sequence of cells, each glued onto cells one dimension
lower through a :class:`GlueMap` that lists target ids with orientation signs.
From those signs we get the sparse boundary matrices ``B_k`` and the weighted
Hodge Laplacians built from them.

Complexes are immutable values.  ``glue`` returns a new complex; internally the
new value shares an append-only store with its parent, so building a complex
cell by cell costs O(1) per glue instead of a full copy.  Branching from an
older value copies the store once.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

SCHEMA = "polycomplex.complex/1"
KINDS = ("proton", "neutron", "electron", "atom")


class ComplexError(ValueError):
    """Base class for structural errors in a complex."""


class DanglingTarget(ComplexError):
    pass


class DuplicateCellId(ComplexError):
    pass


class DimensionMismatch(ComplexError):
    pass


class BoundaryNotClosed(ComplexError):
    """The attaching map's boundary is not a cycle, so B_{k-1} B_k would be nonzero."""


class InvalidGlueMap(ComplexError):
    pass


class DimensionOutOfRange(ComplexError):
    pass


class NonPositiveWeight(ComplexError):
    pass


class UnknownCell(ComplexError, KeyError):
    pass


class PayloadOutOfBounds(ComplexError):
    pass


@dataclass(frozen=True, eq=False)
class Cell:
    """One open cell.

    ``points`` is an optional ``(count, dim + 1)`` array of sampled boundary
    points.  When ``attrs`` has a ``"radius"`` entry, glue checks that every
    point lies inside it.
    """

    id: int
    dim: int
    kind: str
    points: np.ndarray | None = None
    attrs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 0:
            raise DimensionMismatch(f"cell {self.id} has negative dimension {self.dim}")
        if self.kind not in KINDS:
            raise ComplexError(f"cell {self.id} has unknown kind {self.kind!r}")


@dataclass(frozen=True)
class GlueMap:
    """Combinatorial attaching map: boundary of ``source`` as a signed chain."""

    source: int
    targets: tuple[tuple[int, int], ...] = ()
    correspondence: Mapping[str, Any] | None = None

    @classmethod
    def alternating(cls, source: int, target_ids: Iterable[int], correspondence=None) -> "GlueMap":
        """Targets sorted by id receive signs -1, +1, -1, ... (interval: (-1, +1))."""
        ordered = sorted(target_ids)
        signs = [(-1) ** (i + 1) for i in range(len(ordered))]
        return cls(source, tuple(zip(ordered, signs)), correspondence)


class _Store:
    """Append-only backing arrays shared by successive Complex values."""

    __slots__ = ("cells", "maps", "pos", "by_dim", "cofaces", "links")

    def __init__(self):
        self.cells: list[Cell] = []
        self.maps: list[GlueMap] = []
        self.pos: dict[int, int] = {}
        self.by_dim: dict[int, list[int]] = {}
        self.cofaces: dict[int, list[int]] = {}
        self.links: list[tuple[int, int, str]] = []

    def append(self, cell: Cell, gmap: GlueMap) -> None:
        p = len(self.cells)
        self.cells.append(cell)
        self.maps.append(gmap)
        self.pos[cell.id] = p
        self.by_dim.setdefault(cell.dim, []).append(p)
        for target, _ in gmap.targets:
            self.cofaces.setdefault(target, []).append(p)

    def prefix(self, n_cells: int, n_links: int) -> "_Store":
        copy = _Store()
        for cell, gmap in zip(self.cells[:n_cells], self.maps[:n_cells]):
            copy.append(cell, gmap)
        copy.links = self.links[:n_links]
        return copy


class Complex:
    """Immutable finite CW-complex (see module docstring)."""

    __slots__ = ("_store", "_n", "_nl", "_weights")

    def __init__(self, _store: _Store | None = None, _n: int = 0, _nl: int = 0, _weights=None):
        self._store = _store if _store is not None else _Store()
        self._n = _n
        self._nl = _nl
        self._weights: dict[int, np.ndarray] = dict(_weights or {})

    @classmethod
    def empty(cls) -> "Complex":
        return cls()

    # -- queries -------------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __contains__(self, cell_id: int) -> bool:
        p = self._store.pos.get(cell_id)
        return p is not None and p < self._n

    def _position(self, cell_id: int) -> int:
        p = self._store.pos.get(cell_id)
        if p is None or p >= self._n:
            raise UnknownCell(f"no cell with id {cell_id}")
        return p

    def cell(self, cell_id: int) -> Cell:
        return self._store.cells[self._position(cell_id)]

    def glue_map(self, cell_id: int) -> GlueMap:
        return self._store.maps[self._position(cell_id)]

    @property
    def cells(self) -> Sequence[Cell]:
        return self._store.cells[: self._n]

    @property
    def glue_maps(self) -> Sequence[GlueMap]:
        return self._store.maps[: self._n]

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def _dim_positions(self, k: int) -> list[int]:
        positions = self._store.by_dim.get(k, [])
        return positions[: bisect.bisect_left(positions, self._n)]

    def cells_of_dim(self, k: int) -> list[Cell]:
        """Cells of dimension ``k`` in gluing order (the row/column order of B_k)."""
        return [self._store.cells[p] for p in self._dim_positions(k)]

    def count(self, k: int) -> int:
        return len(self._dim_positions(k))

    @property
    def max_dim(self) -> int:
        """Largest cell dimension present; -1 for the empty complex."""
        dims = [k for k in self._store.by_dim if self._dim_positions(k)]
        return max(dims, default=-1)

    def faces(self, cell_id: int) -> tuple[tuple[int, int], ...]:
        return self.glue_map(cell_id).targets

    def cofaces(self, cell_id: int) -> list[tuple[int, int]]:
        """Cells whose boundary contains ``cell_id``, with the incidence sign."""
        self._position(cell_id)
        out = []
        for p in self._store.cofaces.get(cell_id, []):
            if p >= self._n:
                break
            gmap = self._store.maps[p]
            sign = next(s for t, s in gmap.targets if t == cell_id)
            out.append((gmap.source, sign))
        return out

    @property
    def links(self) -> Sequence[tuple[int, int, str]]:
        """Cross-links between subcomplexes (not part of the incidence)."""
        return self._store.links[: self._nl]

    def link_degree(self) -> dict[int, int]:
        degree: dict[int, int] = {}
        for a, b, _ in self.links:
            degree[a] = degree.get(a, 0) + 1
            degree[b] = degree.get(b, 0) + 1
        return degree

    def weights(self, k: int) -> np.ndarray:
        n = self.count(k)
        w = self._weights.get(k)
        return np.ones(n) if w is None or len(w) != n else w

    # -- construction --------------------------------------------------

    def _tip_store(self) -> _Store:
        store = self._store
        if len(store.cells) == self._n and len(store.links) == self._nl:
            return store
        return store.prefix(self._n, self._nl)

    def glue(self, cell: Cell, gmap: GlueMap | None = None) -> "Complex":
        return glue(self, cell, gmap)

    def link(self, a: int, b: int, label: str = "") -> "Complex":
        """Record a cross-link between two existing cells."""
        self._position(a)
        self._position(b)
        store = self._tip_store()
        store.links.append((a, b, label))
        return Complex(store, self._n, self._nl + 1, self._weights)

    def with_weights(self, k: int, w: Sequence[float]) -> "Complex":
        w = np.asarray(w, dtype=float)
        if w.shape != (self.count(k),):
            raise ComplexError(f"weight vector for dimension {k} must have length {self.count(k)}")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise NonPositiveWeight(f"weights for dimension {k} must be finite and > 0")
        weights = dict(self._weights)
        weights[k] = w
        return Complex(self._store, self._n, self._nl, weights)

    def is_closure_finite(self) -> bool:
        """Every cell's boundary references finitely many existing lower cells."""
        for cell, gmap in zip(self.cells, self.glue_maps):
            for target, _ in gmap.targets:
                if target not in self or self.cell(target).dim != cell.dim - 1:
                    return False
        return True

    # -- serialisation -------------------------------------------------

    def to_dict(self, include_points: bool = True) -> dict:
        cells = []
        for cell in self.cells:
            entry = {"id": cell.id, "dim": cell.dim, "kind": cell.kind, "attrs": dict(cell.attrs)}
            if include_points and cell.points is not None:
                entry["points"] = [[float(v) for v in row] for row in cell.points]
            cells.append(entry)
        return {
            "schema": SCHEMA,
            "cells": cells,
            "glue": [
                {"source": m.source, "targets": [[t, s] for t, s in m.targets]}
                for m in self.glue_maps
                if m.targets
            ],
            "links": [[a, b, label] for a, b, label in self.links],
            "weights": {str(k): [float(x) for x in w] for k, w in sorted(self._weights.items())},
        }

    def to_json(self, include_points: bool = True) -> str:
        return json.dumps(self.to_dict(include_points), sort_keys=True, separators=(",", ":"))

    def fingerprint(self, include_points: bool = False) -> str:
        return hashlib.sha256(self.to_json(include_points).encode()).hexdigest()


def glue(complex: Complex, cell: Cell, gmap: GlueMap | None = None) -> Complex:
    """Attach ``cell`` to ``complex`` along ``gmap`` and return the new complex.

    Raises:
        DuplicateCellId: the cell id is already used.
        DanglingTarget: a map target is not in the complex.
        DimensionMismatch: a target's dimension is not ``cell.dim - 1``.
        BoundaryNotClosed: the signed boundary chain has a nonzero boundary.
        InvalidGlueMap: wrong source id, bad sign, or a repeated target.
        PayloadOutOfBounds: sampled points exceed ``attrs["radius"]``.
    """
    gmap = gmap if gmap is not None else GlueMap(cell.id)
    if cell.id in complex:
        raise DuplicateCellId(f"cell id {cell.id} already present")
    if gmap.source != cell.id:
        raise InvalidGlueMap(f"glue map source {gmap.source} does not match cell {cell.id}")
    seen = set()
    for target, sign in gmap.targets:
        if sign not in (1, -1):
            raise InvalidGlueMap(f"orientation sign {sign} is not +1 or -1")
        if target in seen:
            raise InvalidGlueMap(f"target {target} listed twice")
        seen.add(target)
        if target not in complex:
            raise DanglingTarget(f"target {target} of cell {cell.id} is not in the complex")
        tdim = complex.cell(target).dim
        if tdim != cell.dim - 1:
            raise DimensionMismatch(
                f"cell {cell.id} of dim {cell.dim} cannot attach to dim-{tdim} cell {target}"
            )
    if cell.dim >= 2 and gmap.targets:
        chain: dict[int, int] = {}
        for target, sign in gmap.targets:
            for face, fsign in complex.faces(target):
                chain[face] = chain.get(face, 0) + sign * fsign
        if any(chain.values()):
            raise BoundaryNotClosed(f"boundary of cell {cell.id} is not a cycle")
    radius = cell.attrs.get("radius")
    if cell.points is not None and radius is not None:
        norms = np.linalg.norm(cell.points, axis=1)
        if np.any(norms > radius * (1 + 1e-9)):
            raise PayloadOutOfBounds(f"cell {cell.id} has points outside radius {radius}")
    store = complex._tip_store()
    store.append(cell, gmap)
    return Complex(store, complex._n + 1, complex._nl, complex._weights)


def _boundary(complex: Complex, k: int) -> sp.csc_matrix:
    rows = {c.id: j for j, c in enumerate(complex.cells_of_dim(k - 1))}
    cols = complex.cells_of_dim(k)
    r, c, v = [], [], []
    for i, cell in enumerate(cols):
        for target, sign in complex.faces(cell.id):
            r.append(rows[target])
            c.append(i)
            v.append(sign)
    return sp.csc_matrix((np.array(v, dtype=np.int64), (r, c)), shape=(len(rows), len(cols)))


def boundary_matrix(complex: Complex, k: int) -> sp.csc_matrix:
    """Signed incidence B_k: rows are (k-1)-cells, columns are k-cells, gluing order."""
    if k < 1 or k > complex.max_dim:
        raise DimensionOutOfRange(f"k={k} outside 1..{complex.max_dim}")
    return _boundary(complex, k)


def hodge_laplacian(complex: Complex, k: int) -> sp.csr_matrix:
    """Weighted Hodge Laplacian on k-cochains.

    ``B_k^T W_{k-1}^{-1} B_k W_k + W_k^{-1} B_{k+1} W_{k+1} B_{k+1}^T`` with the
    diagonal weight matrices taken from the complex (unit by default).
    """
    if k < 0 or k > complex.max_dim:
        raise DimensionOutOfRange(f"k={k} outside 0..{complex.max_dim}")
    n = complex.count(k)
    lap = sp.csr_matrix((n, n))
    wk = complex.weights(k)
    if k >= 1:
        b = _boundary(complex, k).astype(float)
        w_lo_inv = sp.diags(1.0 / complex.weights(k - 1))
        lap = lap + b.T @ w_lo_inv @ b @ sp.diags(wk)
    if complex.count(k + 1):
        b = _boundary(complex, k + 1).astype(float)
        lap = lap + sp.diags(1.0 / wk) @ b @ sp.diags(complex.weights(k + 1)) @ b.T
    return sp.csr_matrix(lap)


def laplacian_spectrum(lap: sp.spmatrix) -> np.ndarray:
    """All eigenvalues of a symmetric Laplacian, ascending.

    The matrix is split into connected blocks first, so complexes made of many
    small pieces never need one large dense decomposition.
    """
    n = lap.shape[0]
    if n == 0:
        return np.zeros(0)
    lap = sp.csr_matrix(lap)
    if lap.nnz == 0:
        return np.zeros(n)
    n_comp, labels = connected_components(abs(lap) > 0, directed=False)
    eigs = []
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = lap[idx][:, idx].toarray()
        if len(idx) == 1:
            eigs.append(block[0])
        else:
            eigs.append(np.linalg.eigvalsh(block))
    return np.sort(np.concatenate(eigs))


def betti_numbers(complex: Complex, tol: float = 1e-9) -> tuple[int, ...]:
    """dim ker Δ_k for k = 0..max_dim (unit weights give the Betti numbers)."""
    out = []
    for k in range(complex.max_dim + 1):
        spec = laplacian_spectrum(hodge_laplacian(complex, k))
        out.append(int(np.sum(np.abs(spec) < tol)))
    return tuple(out)


def complex_from_dict(data: Mapping) -> Complex:
    """Inverse of :meth:`Complex.to_dict` (glue validation re-runs)."""
    if data.get("schema") != SCHEMA:
        raise ComplexError(f"unsupported schema {data.get('schema')!r}")
    maps = {g["source"]: GlueMap(g["source"], tuple((t, s) for t, s in g["targets"])) for g in data["glue"]}
    cx = Complex.empty()
    for entry in data["cells"]:
        points = np.array(entry["points"]) if "points" in entry else None
        cell = Cell(entry["id"], entry["dim"], entry["kind"], points, entry.get("attrs", {}))
        cx = glue(cx, cell, maps.get(cell.id))
    for a, b, label in data.get("links", []):
        cx = cx.link(a, b, label)
    for k, w in data.get("weights", {}).items():
        cx = cx.with_weights(int(k), w)
    return cx
