"""Tanimoto, bag-of-characters and Weisfeiler-Lehman kernels, plus Gram assembly."""

from __future__ import annotations

import hashlib
import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .smiles import MolecularGraph

log = logging.getLogger(__name__)

KERNELS = ("tanimoto", "string", "wl")


class KernelError(ValueError):
    pass


class LengthMismatch(KernelError):
    pass


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    jitter: float
    kernel: str
    sigma2: float


def _pow2_shift(*arrays: np.ndarray) -> int:
    """Binary exponent that brings the largest magnitude near 1.

    Rescaling by a power of two is exact, and it stops squared norms from
    underflowing or overflowing.
    """
    peak = max((float(np.abs(a).max()) for a in arrays if a.size), default=0.0)
    if peak == 0 or not math.isfinite(peak):
        return 0
    return -math.frexp(peak)[1]


def tanimoto(x, y, sigma2: float = 1.0) -> float:
    """sigma2 * <x,y> / (|x|^2 + |y|^2 - <x,y>) on real vectors.

    Sums are exactly rounded, so appending zeros to both vectors never changes
    the result.  Two zero vectors give 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise LengthMismatch(f"vectors have lengths {x.size} and {y.size}")
    shift = _pow2_shift(x, y)
    x, y = np.ldexp(x, shift), np.ldexp(y, shift)
    xy = math.fsum(x * y)
    denom = math.fsum(x * x) + math.fsum(y * y) - xy
    if denom == 0:
        log.debug("tanimoto on two zero vectors; returning 0")
        return 0.0
    return sigma2 * xy / denom


def tanimoto_matrix(X: np.ndarray, Y: np.ndarray | None = None, sigma2: float = 1.0) -> np.ndarray:
    """All-pairs Tanimoto between the rows of X and Y (vectorised)."""
    X = np.asarray(X, dtype=float)
    symmetric = Y is None
    Y = X if symmetric else np.asarray(Y, dtype=float)
    if X.shape[1] != Y.shape[1]:
        raise LengthMismatch(f"feature widths {X.shape[1]} and {Y.shape[1]} differ")
    shift = _pow2_shift(X, Y)
    nonzero = np.any(X != 0, axis=1)
    X = np.ldexp(X, shift)
    Y = X if symmetric else np.ldexp(Y, shift)
    dot = X @ Y.T
    nx = np.einsum("ij,ij->i", X, X)
    ny = nx if symmetric else np.einsum("ij,ij->i", Y, Y)
    denom = nx[:, None] + ny[None, :] - dot
    zero = denom == 0
    if np.any(zero):
        log.debug("tanimoto: %d pairs of zero vectors set to 0", int(zero.sum()))
    K = np.divide(dot, denom, out=np.zeros_like(dot), where=~zero)
    if symmetric:
        K = (K + K.T) / 2
        # k(x, x) is exactly 1 unless x = 0
        np.fill_diagonal(K, np.where(nonzero, 1.0, 0.0))
    return sigma2 * K


def char_counts(s: str) -> Counter:
    return Counter(s)


def string_kernel(s: str, t: str, sigma2: float = 1.0) -> float:
    """Bag-of-characters inner product."""
    cs, ct = char_counts(s), char_counts(t)
    return sigma2 * float(sum(n * ct[ch] for ch, n in cs.items()))


def _stable_hash(text: str) -> str:
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


def wl_features(graph: MolecularGraph, iterations: int = 3) -> Counter:
    """Subtree-pattern counts for iterations 0..h, keyed by (iteration, label)."""
    if iterations < 0:
        raise KernelError("iterations must be non-negative")
    labels = [a.symbol for a in graph.atoms]
    adj = [[j for j, _ in nbrs] for nbrs in graph.neighbors()]
    feats: Counter = Counter((0, lab) for lab in labels)
    for it in range(1, iterations + 1):
        labels = [
            _stable_hash(labels[v] + "|" + ",".join(sorted(labels[u] for u in adj[v])))
            for v in range(len(labels))
        ]
        feats.update((it, lab) for lab in labels)
    return feats


def wl_kernel(g: MolecularGraph, h: MolecularGraph, iterations: int = 3, sigma2: float = 1.0) -> float:
    fg, fh = wl_features(g, iterations), wl_features(h, iterations)
    return sigma2 * float(sum(n * fh[key] for key, n in fg.items()))


def _sparse_counts(bags: Sequence[Counter], vocab: dict | None = None) -> tuple[sp.csr_matrix, dict]:
    vocab = {} if vocab is None else vocab
    grow = not vocab
    rows, cols, vals = [], [], []
    for i, bag in enumerate(bags):
        for key, n in bag.items():
            j = vocab.get(key)
            if j is None:
                if not grow:
                    continue
                j = vocab[key] = len(vocab)
            rows.append(i)
            cols.append(j)
            vals.append(float(n))
    width = max(len(vocab), 1)
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(bags), width)), vocab


def _bags(kernel: str, items: Sequence, iterations: int) -> list[Counter]:
    if kernel == "string":
        return [char_counts(s) for s in items]
    return [wl_features(g, iterations) for g in items]


def cross_kernel(
    kernel: str | Callable,
    A: Sequence,
    B: Sequence,
    sigma2: float = 1.0,
    iterations: int = 3,
) -> np.ndarray:
    """Rectangular matrix k(a_i, b_j)."""
    if callable(kernel):
        return np.array([[kernel(a, b) for b in B] for a in A], dtype=float).reshape(len(A), len(B)) * sigma2
    if kernel == "tanimoto":
        return tanimoto_matrix(np.asarray(A), np.asarray(B), sigma2)
    if kernel in ("string", "wl"):
        PA, vocab = _sparse_counts(_bags(kernel, A, iterations))
        PB, _ = _sparse_counts(_bags(kernel, B, iterations), vocab)
        return sigma2 * (PA @ PB.T).toarray()
    raise KernelError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")


def gram(
    kernel: str | Callable,
    dataset: Sequence,
    sigma2: float = 1.0,
    jitter: float = 0.0,
    iterations: int = 3,
) -> KernelMatrix:
    """Symmetric K_ij = k(x_i, x_j) + jitter * delta_ij."""
    if len(dataset) == 0:
        raise KernelError("gram needs at least one item")
    if kernel == "tanimoto":
        K = tanimoto_matrix(np.asarray(dataset, dtype=float), None, sigma2)
    elif callable(kernel):
        n = len(dataset)
        K = np.zeros((n, n))
        for i in range(n):
            for j in range(i, n):
                K[i, j] = K[j, i] = kernel(dataset[i], dataset[j])
        K *= sigma2
    else:
        K = cross_kernel(kernel, dataset, dataset, sigma2, iterations)
        K = (K + K.T) / 2
    K = K + jitter * np.eye(len(K))
    name = kernel if isinstance(kernel, str) else getattr(kernel, "__name__", "callable")
    return KernelMatrix(K, jitter, name, sigma2)
