"""Atomic complexes: particles of one atom glued into a CW-complex.

Protons and neutrons are solid balls (default dimension 3, radii 1 fm and
0.8 fm); electrons are points (dimension 0) that carry a 1s wavefunction.
Besides the complex ``K`` an atom carries a Hermitian force matrix ``D_F`` over
its nucleons and a radial matrix ``D_E`` over its electrons.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .complex_core import Cell, Complex, GlueMap, glue
from .elements import ElementRecord


class AtomicError(ValueError):
    pass


class ZeroRadius(AtomicError):
    pass


class InvalidSpec(AtomicError):
    pass


class NonHermitianProvided(AtomicError):
    pass


class IndexOutOfRange(AtomicError, IndexError):
    pass


@dataclass(frozen=True)
class AtomConfig:
    proton_dim: int = 3
    neutron_dim: int = 3
    electron_dim: int = 0
    dim_range: int | None = None  # when set, every particle gets cells of dims 0..dim_range
    samples_per_cell: int = 8
    radius_p_fm: float = 1.0
    radius_n_fm: float = 0.8
    radius_e_fm: float = 2.8
    force_matrix_mode: str = "gue"

    def __post_init__(self):
        for name in ("radius_p_fm", "radius_n_fm", "radius_e_fm"):
            if not getattr(self, name) > 0:
                raise ZeroRadius(f"{name} must be positive")
        dims = [self.proton_dim, self.neutron_dim, self.electron_dim]
        if self.dim_range is not None:
            dims.append(self.dim_range)
        if min(dims) < 0:
            raise InvalidSpec("cell dimensions must be non-negative")
        if self.samples_per_cell < 1:
            raise InvalidSpec("samples_per_cell must be at least 1")
        if self.force_matrix_mode not in ("gue", "provided"):
            raise InvalidSpec(f"unknown force_matrix_mode {self.force_matrix_mode!r}")

    @classmethod
    def from_mapping(cls, values) -> "AtomConfig":
        """Build from string-valued config entries, ignoring unrelated keys."""
        kwargs = {}
        for name, kind in cls.__annotations__.items():
            if name not in values:
                continue
            raw = values[name]
            if name == "dim_range":
                kwargs[name] = None if raw in (None, "", "none", "None") else int(raw)
            elif name == "force_matrix_mode":
                kwargs[name] = str(raw)
            elif kind == "int":
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        return cls(**kwargs)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AtomSpec:
    """Particle counts of one atom plus labels used downstream."""

    P: int
    N: int
    E: int
    symbol: str = ""

    def __post_init__(self):
        if self.P < 1:
            raise InvalidSpec("an atom needs at least one proton")
        if self.N < 0 or self.E < 0:
            raise InvalidSpec("particle counts must be non-negative")

    @classmethod
    def from_record(cls, record: ElementRecord) -> "AtomSpec":
        return cls(*record.counts(), symbol=record.symbol)

    @property
    def K(self) -> int:
        return self.P + self.N + self.E

    @property
    def mass_number(self) -> int:
        return self.P + self.N

    @property
    def charge(self) -> int:
        return self.P - self.E

    def sort_key(self) -> tuple[int, int, int]:
        return (self.P, self.mass_number, self.charge)


@dataclass(frozen=True)
class Orbital1s:
    """Hydrogen-like 1s orbital psi(r) = exp(-r/a0) / sqrt(pi a0^3)."""

    a0: float = 1.0

    def __call__(self, r):
        return np.exp(-np.asarray(r) / self.a0) / np.sqrt(np.pi * self.a0**3)


@lru_cache(maxsize=64)
def _radial_moment(w: Callable, power: int) -> float:
    value, _ = integrate.quad(lambda r: r**power * w(r) ** 2 * 4 * np.pi * r * r, 0, np.inf)
    return value


def normalization(w: Callable) -> float:
    """Integral of |psi|^2 over R^3 for a radial wavefunction."""
    return _radial_moment(w, 0)


def radial_expectation(w: Callable) -> float:
    """<r> = integral of r |psi|^2 4 pi r^2 dr, by quadrature."""
    return _radial_moment(w, 1)


@dataclass(frozen=True)
class ElectronCell:
    cell_id: int
    wavefunction: Callable = field(default_factory=Orbital1s)

    @property
    def mean_radius(self) -> float:
        return radial_expectation(self.wavefunction)


@dataclass
class AtomicComplex:
    """The tuple (K, A_E, D_F, D_E) for one atom."""

    K: Complex
    A_E: list[ElectronCell]
    D_F: np.ndarray
    D_E: np.ndarray
    spec: AtomSpec
    cell_ids: range = range(0)

    def serialize(self, include_points: bool = True) -> str:
        payload = {
            "spec": asdict(self.spec),
            "complex": self.K.to_dict(include_points),
            "D_F": {"real": self.D_F.real.tolist(), "imag": self.D_F.imag.tolist()},
            "D_E": self.D_E.tolist(),
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def fingerprint(self) -> str:
        """Hash of the cell structure (no random payloads)."""
        return self.K.fingerprint(include_points=False)


def sample_sphere(dim: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform points on the ``dim``-sphere of the given radius in R^(dim+1)."""
    if not radius > 0:
        raise ZeroRadius(f"radius must be positive, got {radius}")
    if dim < 1 or count < 1:
        raise AtomicError("sample_sphere needs dim >= 1 and count >= 1")
    g = rng.standard_normal((count, dim + 1))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0):  # probability zero, but keep the contract
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), dim + 1))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None] * radius


def init_force_matrix(
    size: int,
    mode: str = "gue",
    rng: np.random.Generator | None = None,
    provided: np.ndarray | None = None,
) -> np.ndarray:
    """GUE sample H = (G + G^H)/2, or a validated caller-supplied Hermitian matrix.

    G has independent entries with standard normal real and imaginary parts, so
    H has unit-variance real diagonal and off-diagonal components of variance 1/2.
    """
    if size < 1:
        raise AtomicError("force matrix size must be at least 1")
    if mode == "provided":
        m = np.asarray(provided, dtype=complex)
        if m.shape != (size, size):
            raise NonHermitianProvided(f"provided matrix must be {size}x{size}")
        if not np.array_equal(m, m.conj().T):
            raise NonHermitianProvided("provided force matrix is not Hermitian")
        return m
    if mode != "gue":
        raise InvalidSpec(f"unknown force matrix mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    g = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    return (g + g.conj().T) / 2


def update_distances(D_E: np.ndarray, wavefunctions: list[Callable], e: int) -> np.ndarray:
    """Fill row and column ``e`` of D_E with |<r>_e - <r>_j| for the known electrons."""
    if not 0 <= e < D_E.shape[0] or e >= len(wavefunctions):
        raise IndexOutOfRange(f"electron index {e} out of range")
    r_e = radial_expectation(wavefunctions[e])
    for j in range(min(len(wavefunctions), D_E.shape[0])):
        d = abs(r_e - radial_expectation(wavefunctions[j]))
        D_E[e, j] = D_E[j, e] = d
    return D_E


def _particle_dims(config: AtomConfig, kind_dim: int) -> list[int]:
    if config.dim_range is not None:
        return list(range(config.dim_range + 1))
    return [kind_dim]


def _glue_particle(
    K: Complex,
    next_id: int,
    kind: str,
    dims: list[int],
    radius: float,
    config: AtomConfig,
    rng: np.random.Generator,
    attrs: dict,
) -> tuple[Complex, int, list[int]]:
    """Glue one particle's cells (one per dimension in ``dims``).

    In range mode the cells of one particle form a chain: each even cell of
    dimension >= 2 attaches with degree one onto the odd cell below it, and odd
    cells attach trivially, so B B = 0 holds and the particle is contractible
    for even top dimension.
    """
    ids = []
    prev_id = None
    for k in dims:
        if k == 0:
            points = None
        else:
            # electrons live strictly inside their bound
            r = radius * 0.99 if kind == "electron" else radius
            points = sample_sphere(k, r, config.samples_per_cell, rng)
        cell = Cell(next_id, k, kind, points, {**attrs, "radius": radius})
        if k >= 2 and k % 2 == 0 and prev_id is not None:
            gmap = GlueMap(next_id, ((prev_id, 1),))
        else:
            gmap = GlueMap(next_id)
        K = glue(K, cell, gmap)
        ids.append(next_id)
        prev_id = next_id
        next_id += 1
    return K, next_id, ids


def build_atomic_complex(
    spec: AtomSpec,
    config: AtomConfig | None = None,
    rng: np.random.Generator | int | None = None,
    *,
    base: Complex | None = None,
    id_offset: int = 0,
    atom_index: int = 0,
    force_matrix: np.ndarray | None = None,
    wavefunction: Callable | None = None,
) -> AtomicComplex:
    """Build one atomic complex.

    Cells are glued protons first, then neutrons, then electrons, each kind in
    index order.  ``rng`` seeds four independent child streams (force matrix,
    protons, neutrons, electrons), so e.g. adding neutrons never changes the
    proton samples.  Passing ``base`` glues the atom into an existing complex
    starting at cell id ``id_offset``.
    """
    config = config or AtomConfig()
    if isinstance(rng, np.random.Generator):
        seed_seq = rng.bit_generator.seed_seq
    else:
        seed_seq = np.random.SeedSequence(rng)
    rng_f, rng_p, rng_n, rng_e = (np.random.default_rng(s) for s in seed_seq.spawn(4))
    wavefunction = wavefunction or Orbital1s()

    D_F = init_force_matrix(spec.P + spec.N, config.force_matrix_mode, rng_f, force_matrix)

    K = base if base is not None else Complex.empty()
    owner = {"atom": atom_index, "Z": spec.P, "A": spec.mass_number}
    next_id = id_offset
    tops: dict[str, list[int]] = {"proton": [], "neutron": [], "electron": []}
    plan = (
        ("proton", spec.P, config.proton_dim, config.radius_p_fm, rng_p),
        ("neutron", spec.N, config.neutron_dim, config.radius_n_fm, rng_n),
        ("electron", spec.E, config.electron_dim, config.radius_e_fm, rng_e),
    )
    A_E: list[ElectronCell] = []
    for kind, count, kind_dim, radius, stream in plan:
        dims = _particle_dims(config, kind_dim)
        for i in range(count):
            K, next_id, ids = _glue_particle(
                K, next_id, kind, dims, radius, config, stream, {**owner, "index": i}
            )
            tops[kind].append(ids[-1])
            if kind == "electron":
                A_E.append(ElectronCell(ids[0], wavefunction))

    D_E = np.zeros((spec.E, spec.E))
    wavefunctions = [ec.wavefunction for ec in A_E]
    for e in range(spec.E):
        update_distances(D_E, wavefunctions[: e + 1], e)

    # cross-links between the top cells of the P, N and E subcomplexes
    chain = [(kind, tops[kind][-1]) for kind in ("proton", "neutron", "electron") if tops[kind]]
    for (kind_a, a), (_, b) in zip(chain, chain[1:]):
        K = K.link(a, b, f"phi_{kind_a[0]}")

    return AtomicComplex(K, A_E, D_F, D_E, spec, range(id_offset, next_id))
