"""Classical force-model evaluation on atom-level complexes.

Atoms are 0-cells of kind ``"atom"`` and bonds are 1-cells glued onto their two
endpoints, so covalent neighbourhoods come straight from the incidence of the
complex.  Membership sets for the potential:

* bonds: the 1-cells (pairs closer than ``r_bond`` unless a bond list is given);
* angles: i-j-l with j bonded to both and the triple's diameter < ``r_angle``;
* dihedrals: bonded chains i-j-l-m with the quadruple's diameter < ``r_dih``;
* non-bonded: pairs farther apart than ``r_nb``, which get both LJ and Coulomb.

The tuple "diameter" is the sup metric: the largest pairwise Euclidean
distance inside the tuple.  Units are whatever the parameters use.
"""

from __future__ import annotations

import configparser
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .complex_core import Cell, Complex, GlueMap, UnknownCell, glue


class ForceFieldError(ValueError):
    pass


class MissingParams(ForceFieldError):
    pass


class CoincidentAtoms(ForceFieldError):
    pass


class NoCoordinates(ForceFieldError):
    pass


@dataclass(frozen=True)
class NeighborhoodSet:
    center: int
    members: tuple[int, ...]
    orientation: dict  # member id -> "same" | "opposite"


@dataclass
class PotentialParams:
    """Per-element-tuple parameters; ``"*"`` matches any element.

    Angles are stored in radians.  Keys are matched in either direction
    (``("C", "H")`` also serves ``("H", "C")``).
    """

    bond: dict = field(default_factory=dict)  # (a, b) -> (k_r, r_eq)
    angle: dict = field(default_factory=dict)  # (a, j, c) -> (k_theta, theta_eq)
    dihedral: dict = field(default_factory=dict)  # (a, b, c, d) -> (k_t, n, gamma)
    lj: dict = field(default_factory=dict)  # (a, b) -> (A, B)
    charges: dict = field(default_factory=dict)  # symbol -> q
    epsilon: float = 1.0 / (4.0 * math.pi)  # 1/(4 pi eps) = 1: Coulomb in atomic units
    r_bond: float = 1.8
    r_angle: float = 3.2
    r_dih: float = 4.2
    r_nb: float = 4.2

    def __post_init__(self):
        for name in ("r_bond", "r_angle", "r_dih", "r_nb", "epsilon"):
            if not getattr(self, name) > 0:
                raise ForceFieldError(f"{name} must be positive")

    @staticmethod
    def _find(table: dict, key: tuple[str, ...]):
        best, best_wild = None, None
        for candidate in (key, key[::-1]):
            if candidate in table:
                return table[candidate]
        for pattern, value in table.items():
            if len(pattern) != len(key):
                continue
            for cand in (key, key[::-1]):
                if all(p == "*" or p == c for p, c in zip(pattern, cand)):
                    wild = pattern.count("*")
                    if best_wild is None or wild < best_wild:
                        best, best_wild = value, wild
        return best

    def lookup(self, term: str, key: tuple[str, ...]):
        value = self._find(getattr(self, term), key)
        if value is None:
            raise MissingParams(f"no {term} parameters for {'-'.join(key)}")
        return value

    def charge(self, symbol: str) -> float:
        if symbol in self.charges:
            return self.charges[symbol]
        return self.charges.get("*", 0.0)


def load_params(path: str | Path) -> PotentialParams:
    """Read a parameter file.

    Sections ``[thresholds]`` (r_bond, r_angle, r_dih, r_nb, epsilon),
    ``[bond]`` (``C-H = k_r r_eq``), ``[angle]`` (``H-C-H = k_theta theta_eq_deg``),
    ``[dihedral]`` (``*-C-C-* = k_t n gamma_deg``), ``[lj]`` (``C-H = A B``) and
    ``[charge]`` (``C = q``).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    if not cp.read(path):
        raise ForceFieldError(f"cannot read parameter file {path}")

    def section(name, arity, convert):
        out = {}
        if cp.has_section(name):
            for key, value in cp.items(name):
                atoms = tuple(key.split("-"))
                nums = [float(v) for v in value.split()]
                if len(atoms) != arity:
                    raise ForceFieldError(f"[{name}] key {key!r} needs {arity} elements")
                out[atoms] = convert(nums, key)
        return out

    def need(count):
        def check(nums, key):
            if len(nums) != count:
                raise ForceFieldError(f"{key!r} needs {count} numbers, got {len(nums)}")
            return nums

        return check

    bond = section("bond", 2, lambda v, k: tuple(need(2)(v, k)))
    angle = section("angle", 3, lambda v, k: (need(2)(v, k)[0], math.radians(v[1])))
    dihedral = section("dihedral", 4, lambda v, k: (need(3)(v, k)[0], v[1], math.radians(v[2])))
    lj = section("lj", 2, lambda v, k: tuple(need(2)(v, k)))
    charges = {k: float(v) for k, v in cp.items("charge")} if cp.has_section("charge") else {}
    kwargs = {}
    if cp.has_section("thresholds"):
        for key, value in cp.items("thresholds"):
            if key not in ("r_bond", "r_angle", "r_dih", "r_nb", "epsilon"):
                raise ForceFieldError(f"unknown threshold {key!r}")
            kwargs[key] = float(value)
    return PotentialParams(bond, angle, dihedral, lj, charges, **kwargs)


def _coords(coords, n: int) -> np.ndarray:
    if coords is None:
        raise NoCoordinates("atom coordinates are required")
    xyz = np.asarray(coords, dtype=float)
    if xyz.shape != (n, 3):
        raise NoCoordinates(f"expected {n}x3 coordinates, got shape {xyz.shape}")
    return xyz


def sep(xyz: np.ndarray, i: int, j: int) -> float:
    return float(np.linalg.norm(xyz[j] - xyz[i]))


def ang(xyz: np.ndarray, i: int, j: int, l: int) -> float:
    """Angle at j between j->i and j->l, via atan2 for accuracy near 0 and pi."""
    u, v = xyz[i] - xyz[j], xyz[l] - xyz[j]
    return float(math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v))))


def dih(xyz: np.ndarray, i: int, j: int, l: int, m: int) -> float:
    """Signed torsion angle between planes (i, j, l) and (j, l, m)."""
    b0, b1, b2 = xyz[j] - xyz[i], xyz[l] - xyz[j], xyz[m] - xyz[l]
    n1, n2 = np.cross(b0, b1), np.cross(b1, b2)
    b1n = b1 / np.linalg.norm(b1)
    x = float(np.dot(n1, n2))
    y = float(np.dot(np.cross(n1, n2), b1n))
    return math.atan2(y, x)


def diameter(xyz: np.ndarray, tup: Sequence[int]) -> float:
    """Sup metric on a tuple of atoms."""
    return max((sep(xyz, a, b) for a, b in itertools.combinations(tup, 2)), default=0.0)


def atom_complex(
    symbols: Sequence[str],
    coords=None,
    r_bond: float | None = None,
    bonds: Iterable[tuple[int, int]] | None = None,
) -> Complex:
    """Atoms as 0-cells (ids 0..n-1) and bonds as 1-cells.

    Bonds come from ``bonds`` when given (e.g. a parsed SMILES graph), else
    from pairs with separation below ``r_bond``.
    """
    n = len(symbols)
    cx = Complex.empty()
    for i, s in enumerate(symbols):
        cx = glue(cx, Cell(i, 0, "atom", None, {"symbol": s}))
    if bonds is None:
        if r_bond is None:
            raise ForceFieldError("need either a bond list or r_bond")
        xyz = _coords(coords, n)
        bonds = [(i, j) for i, j in itertools.combinations(range(n), 2) if sep(xyz, i, j) < r_bond]
    pairs = sorted({(min(a, b), max(a, b)) for a, b in bonds})
    for k, (a, b) in enumerate(pairs):
        if a == b or not (0 <= a < n and 0 <= b < n):
            raise ForceFieldError(f"invalid bond ({a}, {b})")
        bid = n + k
        cx = glue(cx, Cell(bid, 1, "atom", None, {"bond": [a, b]}), GlueMap.alternating(bid, (a, b)))
    return cx


def incident_neighborhood(complex: Complex, cell_id: int, kind=None) -> NeighborhoodSet:
    """Faces of ``cell_id`` (optionally filtered by kind) with orientation agreement."""
    if cell_id not in complex:
        raise UnknownCell(f"no cell with id {cell_id}")
    kinds = None if kind is None else ({kind} if isinstance(kind, str) else set(kind))
    members, orient = [], {}
    for target, sign in complex.faces(cell_id):
        if kinds is not None and complex.cell(target).kind not in kinds:
            continue
        members.append(target)
        orient[target] = "same" if sign > 0 else "opposite"
    return NeighborhoodSet(cell_id, tuple(members), orient)


def _atoms_of(complex: Complex) -> list[int]:
    return [c.id for c in complex.cells_of_dim(0) if c.kind == "atom"]


def _vertices(complex: Complex, cell_id: int) -> set[int]:
    cell = complex.cell(cell_id)
    if cell.dim == 0:
        return {cell_id}
    out: set[int] = set()
    for target, _ in complex.faces(cell_id):
        out |= _vertices(complex, target)
    return out


def env_set(complex: Complex, coords, cell_id: int, r: float) -> set[int]:
    """Faces of ``cell_id`` lying within ``r`` (sup metric) of every other face.

    Cell-to-cell distance is the diameter of the union of their vertices, which
    for atoms (0-cells) is their separation.
    """
    xyz = _coords(coords, len(_atoms_of(complex)))
    faces = [t for t, _ in complex.faces(cell_id)]
    verts = {f: _vertices(complex, f) for f in faces}
    out = set()
    for f in faces:
        if all(diameter(xyz, sorted(verts[f] | verts[g])) <= r for g in faces if g != f):
            out.add(f)
    return out


def interaction_set(complex: Complex, coords, n: int, r: float) -> set[tuple[int, ...]]:
    """All n-tuples of atoms (increasing ids) whose sup-metric diameter is < r."""
    atoms = _atoms_of(complex)
    xyz = _coords(coords, len(atoms))
    if n < 1 or n > len(atoms):
        return set()
    close = {a: {b for b in atoms if b != a and sep(xyz, a, b) < r} for a in atoms}
    out: set[tuple[int, ...]] = set()

    def extend(tup: list[int], candidates: list[int]):
        if len(tup) == n:
            out.add(tuple(tup))
            return
        for k, c in enumerate(candidates):
            extend(tup + [c], [d for d in candidates[k + 1 :] if d in close[c]])

    extend([], sorted(atoms))
    return out


def membership_sets(complex: Complex, xyz: np.ndarray, params: PotentialParams) -> dict[str, list[tuple]]:
    atoms = _atoms_of(complex)
    bonds = [tuple(sorted(t for t, _ in complex.faces(c.id))) for c in complex.cells_of_dim(1)]
    nbrs: dict[int, set[int]] = {a: set() for a in atoms}
    for a, b in bonds:
        nbrs[a].add(b)
        nbrs[b].add(a)
    angles = [
        (i, j, l)
        for j in atoms
        for i, l in itertools.combinations(sorted(nbrs[j]), 2)
        if diameter(xyz, (i, j, l)) < params.r_angle
    ]
    dihedrals = []
    for j, l in bonds:
        for a, b in ((j, l), (l, j)):
            for i in sorted(nbrs[a] - {b}):
                for m in sorted(nbrs[b] - {a, i}):
                    if i < m and diameter(xyz, (i, a, b, m)) < params.r_dih:
                        dihedrals.append((i, a, b, m))
    nonbonded = [(i, j) for i, j in itertools.combinations(atoms, 2) if sep(xyz, i, j) > params.r_nb]
    return {"bond": bonds, "angle": angles, "dihedral": sorted(set(dihedrals)), "nonbonded": nonbonded}


def classical_potential(complex: Complex, coords, params: PotentialParams) -> tuple[float, dict[str, float]]:
    """Total energy and its per-term breakdown (bond, angle, dihedral, lj, coulomb).

    The total is the sum of the breakdown values in that fixed order.
    """
    atoms = _atoms_of(complex)
    xyz = _coords(coords, len(atoms))
    for i, j in itertools.combinations(atoms, 2):
        if sep(xyz, i, j) == 0:
            raise CoincidentAtoms(f"atoms {i} and {j} share a position")
    sym = {a: complex.cell(a).attrs.get("symbol", "*") for a in atoms}
    sets = membership_sets(complex, xyz, params)

    terms = {"bond": [], "angle": [], "dihedral": [], "lj": [], "coulomb": []}
    for i, j in sets["bond"]:
        k_r, r_eq = params.lookup("bond", (sym[i], sym[j]))
        terms["bond"].append(k_r * (sep(xyz, i, j) - r_eq) ** 2)
    for i, j, l in sets["angle"]:
        k_t, t_eq = params.lookup("angle", (sym[i], sym[j], sym[l]))
        terms["angle"].append(k_t * (ang(xyz, i, j, l) - t_eq) ** 2)
    for i, j, l, m in sets["dihedral"]:
        k_t, n, gamma = params.lookup("dihedral", (sym[i], sym[j], sym[l], sym[m]))
        terms["dihedral"].append(k_t * (1 + math.cos(n * dih(xyz, i, j, l, m) - gamma)))
    for i, j in sets["nonbonded"]:
        r = sep(xyz, i, j)
        A, B = params.lookup("lj", (sym[i], sym[j]))
        terms["lj"].append(A / r**12 - B / r**6)
        terms["coulomb"].append(
            params.charge(sym[i]) * params.charge(sym[j]) / (4 * math.pi * params.epsilon * r)
        )
    breakdown = {name: math.fsum(vals) for name, vals in terms.items()}
    total = 0.0
    for name in ("bond", "angle", "dihedral", "lj", "coulomb"):
        total += breakdown[name]
    return total, breakdown


def bond_gradient(complex: Complex, coords, params: PotentialParams) -> np.ndarray:
    """Analytic gradient of the bond term with respect to the coordinates."""
    atoms = _atoms_of(complex)
    xyz = _coords(coords, len(atoms))
    grad = np.zeros_like(xyz)
    sym = {a: complex.cell(a).attrs.get("symbol", "*") for a in atoms}
    for c in complex.cells_of_dim(1):
        i, j = sorted(t for t, _ in complex.faces(c.id))
        k_r, r_eq = params.lookup("bond", (sym[i], sym[j]))
        d = xyz[j] - xyz[i]
        r = float(np.linalg.norm(d))
        g = 2 * k_r * (r - r_eq) * d / r
        grad[j] += g
        grad[i] -= g
    return grad
