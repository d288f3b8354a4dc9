"""Shared builders for the test suite."""

from itertools import combinations

import numpy as np

from polycomplex.complex_core import Cell, Complex, GlueMap, glue


def simplicial(simplices, kind="atom"):
    """Glue a simplicial complex given its maximal simplices (vertex tuples)."""
    faces = set()
    for s in simplices:
        s = tuple(sorted(s))
        for k in range(1, len(s) + 1):
            faces.update(combinations(s, k))
    ordered = sorted(faces, key=lambda f: (len(f), f))
    ids = {f: i for i, f in enumerate(ordered)}
    cx = Complex.empty()
    for f in ordered:
        targets = ()
        if len(f) > 1:
            targets = tuple((ids[f[:i] + f[i + 1:]], (-1) ** i) for i in range(len(f)))
        cx = glue(cx, Cell(ids[f], len(f) - 1, kind), GlueMap(ids[f], targets))
    return cx


def random_complex(rng: np.random.Generator, max_vertices: int = 8, max_dim: int = 3) -> Complex:
    """A random simplicial complex, sometimes with extra CW cells on top."""
    n = int(rng.integers(1, max_vertices + 1))
    simplices = []
    for _ in range(int(rng.integers(1, 7))):
        k = int(rng.integers(1, min(n, max_dim + 1) + 1))
        simplices.append(tuple(rng.choice(n, size=k, replace=False).tolist()))
    cx = simplicial(simplices)
    next_id = len(cx)
    # spheres and loops attached with an empty boundary
    for _ in range(int(rng.integers(0, 3))):
        dim = int(rng.integers(1, max_dim + 1))
        cx = glue(cx, Cell(next_id, dim, "electron"))
        next_id += 1
    return cx


def circle():
    cx = glue(Complex.empty(), Cell(0, 0, "atom"))
    return glue(cx, Cell(1, 1, "atom"))


def sphere(d):
    cx = glue(Complex.empty(), Cell(0, 0, "atom"))
    return glue(cx, Cell(1, d, "atom"))


def torus():
    cx = glue(Complex.empty(), Cell(0, 0, "atom"))
    cx = glue(cx, Cell(1, 1, "atom"))
    cx = glue(cx, Cell(2, 1, "atom"))
    # boundary a + b - a - b cancels to zero
    return glue(cx, Cell(3, 2, "atom"))


def five_atom_chain():
    """C-C-C-C-O zigzag (angstrom) with parameters covering every term."""
    from polycomplex.forcefield import PotentialParams, atom_complex

    symbols = ["C", "C", "C", "C", "O"]
    coords = np.array(
        [
            [0.000, 0.000, 0.000],
            [1.530, 0.000, 0.000],
            [2.040, 1.440, 0.000],
            [3.570, 1.480, 0.150],
            [4.050, 2.830, -0.300],
        ]
    )
    params = PotentialParams(
        bond={("C", "C"): (310.0, 1.526), ("C", "O"): (320.0, 1.410)},
        angle={("C", "C", "C"): (40.0, 1.911), ("C", "C", "O"): (50.0, 1.911)},
        dihedral={("*", "C", "C", "*"): (1.4, 3.0, 0.0)},
        lj={("*", "*"): (1.0e5, 60.0)},
        charges={"C": -0.1, "O": 0.4},
        r_bond=1.8,
        r_angle=3.2,
        r_dih=4.2,
        r_nb=3.0,
    )
    cx = atom_complex(symbols, coords, params.r_bond)
    return cx, coords, params


def equilibrium_system(cx, coords, params):
    """Relabel every atom uniquely and set bond/angle minima to the given geometry."""
    from dataclasses import replace

    from polycomplex.forcefield import ang, atom_complex, membership_sets, sep

    sym = {c.id: c.attrs["symbol"] for c in cx.cells_of_dim(0)}
    sets = membership_sets(cx, coords, params)
    bonds = [tuple(sorted(t for t, _ in cx.faces(c.id))) for c in cx.cells_of_dim(1)]
    labels = [f"{sym[i]}{i}" for i in sorted(sym)]
    bond, angle = {}, {}
    for i, j in sets["bond"]:
        k_r = params.lookup("bond", (sym[i], sym[j]))[0]
        bond[(labels[i], labels[j])] = (k_r, sep(coords, i, j))
    for i, j, l in sets["angle"]:
        k_t = params.lookup("angle", (sym[i], sym[j], sym[l]))[0]
        angle[(labels[i], labels[j], labels[l])] = (k_t, ang(coords, i, j, l))
    dihedral = {("*", "*", "*", "*"): params.lookup("dihedral", ("C", "C", "C", "C"))}
    return atom_complex(labels, bonds=bonds), replace(params, bond=bond, angle=angle, dihedral=dihedral)
