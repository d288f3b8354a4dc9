"""Fixed-width real projections of complexes (Fast and Deep Complex).

Fast rows, one per cell in gluing order::

    [kind, dim, radius, Z, isotope, mean |x|, mean x_0, mean x_1, mean x_2, mean x_3]

``kind`` codes proton=1, neutron=2, electron=3, atom=4.  ``Z`` is the owning
atom's atomic number.  ``isotope`` is the owning atom's mass number, written on
neutron rows only: the neutron cells are what realise the isotope, and keeping
the column zero elsewhere means H and D differ only in their neutron rows.
The point statistics are zero for cells without sampled points.

Deep rows append ``m_spec`` eigenvalues of the Hodge Laplacian of the cell's
dimension (largest first, zero-filled) and three degree columns: number of
faces, number of cofaces and cross-link degree.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .complex_core import Complex, hodge_laplacian, laplacian_spectrum
from .polyatomic import PolyatomicComplex

KIND_CODES = {"proton": 1.0, "neutron": 2.0, "electron": 3.0, "atom": 4.0}
FAST_WIDTH = 10
DEFAULT_M_SPEC = 8


class FeaturizeError(ValueError):
    pass


class EmptyBatch(FeaturizeError):
    pass


class EigenFailure(FeaturizeError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    schema: str
    provenance: dict = field(default_factory=dict)
    spectra: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _complex_of(obj) -> Complex:
    if isinstance(obj, PolyatomicComplex):
        return obj.C
    if isinstance(obj, Complex):
        return obj
    K = getattr(obj, "K", None)
    if isinstance(K, Complex):
        return K
    raise FeaturizeError(f"cannot featurize {type(obj).__name__}")


def _config_hash(obj) -> str:
    config = getattr(obj, "config", None)
    return config.digest() if config is not None else ""


def _fast_rows(cx: Complex) -> np.ndarray:
    rows = np.zeros((len(cx), FAST_WIDTH))
    for r, cell in enumerate(cx.cells):
        attrs = cell.attrs
        row = rows[r]
        row[0] = KIND_CODES[cell.kind]
        row[1] = cell.dim
        row[2] = attrs.get("radius", 0.0)
        row[3] = attrs.get("Z", 0)
        if cell.kind == "neutron":
            row[4] = attrs.get("A", 0)
        if cell.points is not None and len(cell.points):
            pts = cell.points
            row[5] = np.linalg.norm(pts, axis=1).mean()
            means = pts.mean(axis=0)[:4]
            row[6 : 6 + len(means)] = means
    return rows


def fast_complex(P) -> FeatureMatrix:
    """Cells as disconnected rows; incidence and force data are ignored."""
    cx = _complex_of(P)
    values = _fast_rows(cx)
    return FeatureMatrix(values, "fast/1", {"featurizer": "fast", "config": _config_hash(P)})


def deep_complex(P, m_spec: int = DEFAULT_M_SPEC) -> FeatureMatrix:
    """Fast rows plus per-dimension Hodge spectra and incidence degrees."""
    cx = _complex_of(P)
    fast = _fast_rows(cx)
    spectra: dict[int, np.ndarray] = {}
    top: dict[int, np.ndarray] = {}
    for k in range(cx.max_dim + 1):
        if cx.count(k) == 0:
            continue
        lap = hodge_laplacian(cx, k)
        try:
            spec = laplacian_spectrum(lap)
        except np.linalg.LinAlgError as exc:
            raise EigenFailure(f"eigen-decomposition of the dimension-{k} Laplacian failed: {exc}") from exc
        spectra[k] = spec
        head = np.zeros(m_spec)
        desc = spec[::-1][:m_spec]
        head[: len(desc)] = desc
        top[k] = head

    links = cx.link_degree()
    coface_count: dict[int, int] = {}
    for gmap in cx.glue_maps:
        for target, _ in gmap.targets:
            coface_count[target] = coface_count.get(target, 0) + 1

    extra = np.zeros((len(cx), m_spec + 3))
    for r, cell in enumerate(cx.cells):
        extra[r, :m_spec] = top.get(cell.dim, 0.0)
        extra[r, m_spec] = len(cx.faces(cell.id))
        extra[r, m_spec + 1] = coface_count.get(cell.id, 0)
        extra[r, m_spec + 2] = links.get(cell.id, 0)
    values = np.hstack([fast, extra])
    provenance = {"featurizer": "deep", "config": _config_hash(P), "m_spec": m_spec}
    return FeatureMatrix(values, f"deep/1/m{m_spec}", provenance, spectra)


def featurize(P, featurizer: str = "fast", **kwargs) -> FeatureMatrix:
    if featurizer == "fast":
        return fast_complex(P)
    if featurizer == "deep":
        return deep_complex(P, **kwargs)
    raise FeaturizeError(f"unknown featurizer {featurizer!r} (expected fast or deep)")


def zero_pad(batch: Sequence[FeatureMatrix]) -> list[FeatureMatrix]:
    """Pad every matrix with trailing zero rows/columns to the batch's max shape."""
    if not batch:
        raise EmptyBatch("zero_pad needs at least one matrix")
    rows = max(m.values.shape[0] for m in batch)
    cols = max(m.values.shape[1] for m in batch)
    out = []
    for m in batch:
        if m.values.shape == (rows, cols):
            out.append(m)
            continue
        padded = np.zeros((rows, cols))
        r, c = m.values.shape
        padded[:r, :c] = m.values
        out.append(FeatureMatrix(padded, m.schema, m.provenance, m.spectra))
    return out


def flatten(M: FeatureMatrix | np.ndarray) -> np.ndarray:
    values = M.values if isinstance(M, FeatureMatrix) else np.asarray(M)
    return values.reshape(-1).copy()


def write_feature_cache(path: str | Path, ids: Sequence[str], matrices: Sequence[FeatureMatrix]) -> None:
    """CSV cache: ``id,rows,cols,values`` with values space-separated in row-major order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "rows", "cols", "values"])
        for ident, m in zip(ids, matrices):
            r, c = m.values.shape
            writer.writerow([ident, r, c, " ".join(repr(float(v)) for v in m.values.ravel())])


def read_feature_cache(path: str | Path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            r, c = int(row["rows"]), int(row["cols"])
            vals = np.array([float(v) for v in row["values"].split()]) if row["values"] else np.zeros(0)
            out[row["id"]] = vals.reshape(r, c)
    return out


def batch_digest(matrices: Sequence[FeatureMatrix]) -> str:
    h = hashlib.sha256()
    for m in matrices:
        h.update(json.dumps(m.values.shape).encode())
        h.update(np.ascontiguousarray(m.values).tobytes())
    return h.hexdigest()
