"""Polyatomic complexes: atomic complexes glued into one system.

Atoms are first put in a canonical order (atomic number, mass number, charge,
then coordinates when given, then input position).  Every atom is built with
its own random stream keyed by ``(seed, canonical index)``, so the result does
not depend on how the caller ordered the atom list.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from . import elements
from .atomic import AtomConfig, AtomSpec, AtomicComplex, ElectronCell, build_atomic_complex
from .complex_core import Complex
from .elements import ElementRecord
from .smiles import AtomInventory

ANGSTROM_TO_BOHR = 1.8897261254578281


class PolyatomicError(ValueError):
    pass


class EmptySystem(PolyatomicError):
    pass


class CoordinateCountMismatch(PolyatomicError):
    pass


class CoincidentAtoms(PolyatomicError):
    pass


class InsufficientAtoms(PolyatomicError):
    pass


class BadHistogramParams(PolyatomicError):
    pass


@dataclass(frozen=True)
class RDFParams:
    r_max: float = 10.0
    n_bins: int = 50
    n_samples: int = 1000

    def __post_init__(self):
        if not self.r_max > 0 or self.n_bins < 1 or self.n_samples < 1:
            raise BadHistogramParams(f"invalid RDF parameters {self}")


@dataclass(frozen=True)
class RDF:
    """Step function g(r): value ``g[k]`` on ``[edges[k], edges[k+1])``, 0 outside."""

    edges: np.ndarray
    g: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        finite = np.isfinite(self.edges[1:])
        right = np.where(finite, self.edges[1:], self.edges[:-1])
        return (self.edges[:-1] + right) / 2

    def lookup(self, r: float) -> float:
        k = int(np.searchsorted(self.edges, r, side="right")) - 1
        if 0 <= k < len(self.g):
            return float(self.g[k])
        return 0.0

    @classmethod
    def from_table(cls, r: Sequence[float], g: Sequence[float]) -> "RDF":
        r = np.asarray(r, dtype=float)
        if r.ndim != 1 or len(r) == 0 or len(r) != len(g) or np.any(np.diff(r) <= 0):
            raise BadHistogramParams("RDF table needs strictly increasing r and matching g")
        return cls(np.append(r, np.inf), np.asarray(g, dtype=float))


@dataclass
class PolyatomicComplex:
    """The tuple (C, E, F, D_E) plus bookkeeping.

    ``atom_order[i]`` is the input position of the i-th canonical atom; it is
    the only field that depends on input order and is left out of
    :meth:`serialize`.
    """

    C: Complex
    E: np.ndarray
    F: np.ndarray | None
    D_E: np.ndarray | None
    atoms: list[AtomSpec]
    atom_order: list[int]
    atom_cells: list[range]
    electrons: list[ElectronCell]
    coords: np.ndarray
    rdf: RDF | None = None
    config: AtomConfig = field(default_factory=AtomConfig)

    @property
    def nucleon_blocks(self) -> list[int]:
        return [a.P + a.N for a in self.atoms]

    @property
    def electron_blocks(self) -> list[int]:
        return [a.E for a in self.atoms]

    def serialize(self, include_points: bool = True) -> str:
        def mat(m):
            if m is None:
                return None
            if np.iscomplexobj(m):
                return {"real": m.real.tolist(), "imag": m.imag.tolist()}
            return m.tolist()

        payload = {
            "atoms": [[a.symbol, a.P, a.N, a.E] for a in self.atoms],
            "complex": self.C.to_dict(include_points),
            "E": mat(self.E),
            "F": mat(self.F),
            "D_E": mat(self.D_E),
            "coords": self.coords.tolist(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _as_specs(atoms) -> list[AtomSpec]:
    if isinstance(atoms, AtomInventory):
        atoms = atoms.expand()
    specs = []
    for a in atoms:
        if isinstance(a, AtomSpec):
            specs.append(a)
        elif isinstance(a, ElementRecord):
            specs.append(AtomSpec.from_record(a))
        elif isinstance(a, str):
            specs.append(AtomSpec.from_record(elements.lookup(a)))
        else:
            raise TypeError(f"cannot interpret {a!r} as an atom")
    return specs


def canonical_order(specs: Sequence[AtomSpec], coords: np.ndarray | None = None) -> list[int]:
    """Input positions sorted by (Z, mass number, charge, coordinates, position)."""

    def key(i):
        spec = specs[i]
        xyz = tuple(coords[i]) if coords is not None else ()
        return (*spec.sort_key(), xyz, i)

    return sorted(range(len(specs)), key=key)


def default_coordinates(n: int) -> np.ndarray:
    """Placeholder geometry: atoms on the x axis, 1 bohr apart (non-physical)."""
    out = np.zeros((n, 3))
    out[:, 0] = np.arange(n, dtype=float)
    return out


def pair_distances(coords: np.ndarray, box: float | Sequence[float] | None = None) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    if box is not None:
        box = np.broadcast_to(np.asarray(box, dtype=float), (3,))
        diff -= box * np.round(diff / box)
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _blocks(sizes: Sequence[int]) -> list[slice]:
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    return [slice(offsets[i], offsets[i + 1]) for i in range(len(sizes))]


def update_forces(
    F: np.ndarray,
    complex: PolyatomicComplex,
    coords: np.ndarray | None = None,
    charges: Sequence[float] | None = None,
) -> np.ndarray:
    """Set every off-diagonal atom block (i, j) to q_i q_j / r_ij (atomic units).

    Charges default to the nuclear charge Z; diagonal blocks are left alone.
    """
    coords = complex.coords if coords is None else np.asarray(coords, dtype=float)
    q = [a.P for a in complex.atoms] if charges is None else list(charges)
    dist = pair_distances(coords)
    blocks = _blocks(complex.nucleon_blocks)
    F = np.array(F, copy=True)
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            if dist[i, j] == 0:
                raise CoincidentAtoms(f"atoms {i} and {j} share a position")
            energy = q[i] * q[j] / dist[i, j]
            F[blocks[i], blocks[j]] = energy
            F[blocks[j], blocks[i]] = energy
    return F


def radial_distribution(
    coords: np.ndarray,
    params: RDFParams = RDFParams(),
    rng: np.random.Generator | int | None = 0,
    box: float | Sequence[float] | None = None,
) -> RDF:
    """Monte-Carlo g(r): pick random reference atoms, histogram their neighbour distances.

    Counts are normalised by the ideal-gas expectation for each spherical
    shell.  The reference density is (N-1)/V with V the periodic box volume,
    or the volume of the r_max sphere when no box is given.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n < 2:
        raise InsufficientAtoms("an RDF needs at least two atoms")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    edges = np.linspace(0.0, params.r_max, params.n_bins + 1)
    refs = rng.integers(0, n, size=params.n_samples)
    counts = np.zeros(params.n_bins)
    if box is not None:
        box_arr = np.broadcast_to(np.asarray(box, dtype=float), (3,))
        volume = float(np.prod(box_arr))
    else:
        box_arr = None
        volume = 4.0 / 3.0 * np.pi * params.r_max**3
    for ref in refs:
        diff = np.delete(coords, ref, axis=0) - coords[ref]
        if box_arr is not None:
            diff -= box_arr * np.round(diff / box_arr)
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        counts += np.histogram(d, bins=edges)[0]
    shell = 4.0 / 3.0 * np.pi * (edges[1:] ** 3 - edges[:-1] ** 3)
    density = (n - 1) / volume
    g = counts / (params.n_samples * density * shell)
    return RDF(edges, g)


def update_radial(
    D_E: np.ndarray,
    coords: np.ndarray | None,
    params: RDFParams = RDFParams(),
    *,
    electron_blocks: Sequence[int] | None = None,
    table: RDF | None = None,
    rng: np.random.Generator | int | None = 0,
    box=None,
) -> tuple[np.ndarray, RDF]:
    """Fill off-diagonal electron blocks (i, j) of D_E with g(r_ij).

    With ``table`` the supplied g(r) is used as is; otherwise it is estimated
    from ``coords`` by :func:`radial_distribution`.
    """
    if table is None:
        if coords is None or len(coords) < 2:
            raise InsufficientAtoms("update_radial needs two or more atoms or an RDF table")
        rdf = radial_distribution(coords, params, rng, box)
    else:
        rdf = table
    if coords is None or electron_blocks is None:
        return np.array(D_E, copy=True), rdf
    coords = np.asarray(coords, dtype=float)
    dist = pair_distances(coords, box)
    blocks = _blocks(electron_blocks)
    D_E = np.array(D_E, copy=True)
    for i in range(len(blocks)):
        for j in range(i + 1, len(blocks)):
            value = rdf.lookup(dist[i, j])
            D_E[blocks[i], blocks[j]] = value
            D_E[blocks[j], blocks[i]] = value
    return D_E, rdf


def build_polyatomic_complex(
    atoms,
    using_radial: bool = False,
    using_force_model: bool = False,
    coords: np.ndarray | None = None,
    config: AtomConfig | None = None,
    seed: int = 0,
    *,
    rdf_params: RDFParams = RDFParams(),
    rdf_table: RDF | None = None,
    box=None,
) -> PolyatomicComplex:
    """Glue the atoms of a system into one polyatomic complex.

    ``atoms`` may be an :class:`AtomInventory`, element records, element
    symbols or :class:`AtomSpec` values.  ``coords`` are in bohr.  Force and
    radial updates run once after all atoms are glued, which gives the same
    matrices as updating after every atom because each update only writes the
    block pairs of atoms present so far.
    """
    config = config or AtomConfig()
    specs = _as_specs(atoms)
    if not specs:
        raise EmptySystem("no atoms to encode")
    if coords is not None:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (len(specs), 3):
            raise CoordinateCountMismatch(
                f"got {coords.shape[0] if coords.ndim else 0} coordinates for {len(specs)} atoms"
            )
    order = canonical_order(specs, coords)
    ordered = [specs[i] for i in order]
    xyz = coords[order] if coords is not None else default_coordinates(len(specs))

    C = Complex.empty()
    electrons: list[ElectronCell] = []
    atom_cells: list[range] = []
    e_blocks, f_blocks, de_blocks = [], [], []
    next_id = 0
    prev_anchor = None
    for index, spec in enumerate(ordered):
        rng = np.random.default_rng([seed, index])
        atom: AtomicComplex = build_atomic_complex(
            spec, config, rng, base=C, id_offset=next_id, atom_index=index
        )
        C = atom.K
        atom_cells.append(atom.cell_ids)
        anchor = atom.cell_ids.start
        if prev_anchor is not None:
            C = C.link(prev_anchor, anchor, "atom")
        prev_anchor = anchor
        next_id = atom.cell_ids.stop
        electrons.extend(atom.A_E)
        e_blocks.append(np.diag([ec.mean_radius for ec in atom.A_E]))
        if using_force_model:
            f_blocks.append(atom.D_F)
        if using_radial:
            de_blocks.append(atom.D_E)

    E = block_diag(*e_blocks) if e_blocks else np.zeros((0, 0))
    poly = PolyatomicComplex(
        C=C,
        E=np.asarray(E, dtype=float),
        F=block_diag(*f_blocks) if using_force_model else None,
        D_E=block_diag(*de_blocks).astype(float) if using_radial else None,
        atoms=ordered,
        atom_order=order,
        atom_cells=atom_cells,
        electrons=electrons,
        coords=xyz,
        config=config,
    )
    if using_force_model:
        poly.F = update_forces(poly.F, poly, xyz)
    if using_radial and (len(ordered) >= 2 or rdf_table is not None):
        poly.D_E, poly.rdf = update_radial(
            poly.D_E,
            xyz,
            rdf_params,
            electron_blocks=poly.electron_blocks,
            table=rdf_table,
            rng=np.random.default_rng([seed, len(ordered)]),
            box=box,
        )
    return poly


def read_xyz(path: str | Path, to_bohr: bool = True) -> tuple[list[str], np.ndarray]:
    """Read an XYZ file (coordinates in angstrom).

    Returns the symbols and the coordinates, converted to bohr unless
    ``to_bohr`` is false.
    """
    lines = Path(path).read_text().splitlines()
    try:
        n = int(lines[0].split()[0])
    except (IndexError, ValueError):
        raise PolyatomicError(f"{path}: first line must be the atom count") from None
    rows = lines[2 : 2 + n]
    if len(rows) != n:
        raise CoordinateCountMismatch(f"{path}: expected {n} atom lines, found {len(rows)}")
    symbols, xyz = [], []
    for lineno, row in enumerate(rows, start=3):
        parts = row.split()
        try:
            symbols.append(parts[0])
            xyz.append([float(v) for v in parts[1:4]])
        except (IndexError, ValueError):
            raise PolyatomicError(f"{path}:{lineno}: malformed atom line") from None
        if len(xyz[-1]) != 3:
            raise PolyatomicError(f"{path}:{lineno}: malformed atom line")
    xyz = np.array(xyz)
    return symbols, xyz * ANGSTROM_TO_BOHR if to_bohr else xyz


def read_rdf_table(path: str | Path) -> RDF:
    """Read an ``r,g`` CSV (header optional) into an RDF step table."""
    r, g = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                r.append(float(row[0]))
                g.append(float(row[1]))
            except (ValueError, IndexError):
                if r:
                    raise PolyatomicError(f"{path}: malformed RDF row {row}") from None
    return RDF.from_table(r, g)
