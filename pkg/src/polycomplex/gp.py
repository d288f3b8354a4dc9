"""Exact Gaussian-process regression with a deterministic hyperparameter search.

The covariance is ``sigma_f2 * k(x, x') + noise * I`` where ``k`` is one of the
unit-scale kernels from :mod:`polycomplex.kernels`.  Targets are centred on
their training mean before fitting; see :func:`fit` for the mean convention.

Each optimisation epoch visits ``sigma_f2`` and then ``noise`` in log10 space.
It scans a coarse grid and refines the best cell by golden-section search.
The bracket halves around the incumbent every epoch, and the best value seen
so far is always kept, so the per-epoch log likelihood never decreases.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .kernels import cross_kernel, gram, string_kernel, wl_kernel

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-6
JITTER_LADDER = (1e-6, 1e-4, 1e-2)
_GRID_POINTS = 9
_GOLDEN_STEPS = 24
_INVPHI = (math.sqrt(5) - 1) / 2


class GPError(ValueError):
    pass


class FactorizationFailed(GPError):
    pass


class DegenerateTargets(UserWarning):
    pass


@dataclass
class GPModel:
    kernel: str | Callable
    X: Sequence
    y: np.ndarray
    y_mean: float
    sigma_f2: float
    noise: float
    L: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    lml_log: list[float] = field(default_factory=list)
    iterations: int = 3
    clamp_events: int = 0

    @property
    def theta(self) -> tuple[float, float]:
        return self.sigma_f2, self.noise


def _factor(K_unit: np.ndarray, sigma_f2: float, noise: float, quiet: bool = False):
    A = sigma_f2 * K_unit
    A[np.diag_indices_from(A)] += noise
    extra = 0.0
    for step in (0.0, *JITTER_LADDER):
        if step:
            A[np.diag_indices_from(A)] += step - extra
            extra = step
            if not quiet:
                log.warning("Cholesky failed; escalating jitter to %g", step)
        try:
            return cholesky(A, lower=True, check_finite=False), extra
        except LinAlgError:
            continue
    raise FactorizationFailed(
        f"covariance not positive definite even with jitter {JITTER_LADDER[-1]}"
    )


def _lml(L: np.ndarray, alpha: np.ndarray, yc: np.ndarray) -> float:
    n = len(yc)
    return float(-0.5 * yc @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi))


def lml_for(K_unit: np.ndarray, yc: np.ndarray, sigma_f2: float, noise: float) -> float:
    """Log marginal likelihood of centred targets; -inf if no factorisation exists."""
    try:
        L, _ = _factor(K_unit, sigma_f2, noise, quiet=True)
    except FactorizationFailed:
        return -math.inf
    alpha = cho_solve((L, True), yc, check_finite=False)
    return _lml(L, alpha, yc)


def log_marginal_likelihood(model: GPModel) -> float:
    """-1/2 y^T (K + s I)^-1 y - 1/2 log det(K + s I) - n/2 log 2 pi."""
    return _lml(model.L, model.alpha, model.y - model.y_mean)


def _golden(f, lo: float, hi: float, steps: int = _GOLDEN_STEPS) -> tuple[float, float]:
    """Maximise f on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(steps):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _optimise(K_unit, yc, theta0, bounds, free, n_epochs):
    """Coordinate search in log10 space; returns the best theta and per-epoch LML."""
    best = list(theta0)
    best_val = lml_for(K_unit, yc, 10 ** best[0], 10 ** best[1])
    history = []
    for epoch in range(n_epochs):
        for p in free:
            lo_b, hi_b = bounds[p]
            half = (hi_b - lo_b) / 2 * 0.5**epoch
            lo, hi = max(lo_b, best[p] - half), min(hi_b, best[p] + half)

            def f(v, p=p):
                theta = list(best)
                theta[p] = v
                return lml_for(K_unit, yc, 10 ** theta[0], 10 ** theta[1])

            grid = np.linspace(lo, hi, _GRID_POINTS)
            vals = [f(v) for v in grid]
            i = int(np.argmax(vals))
            cand, cand_val = grid[i], vals[i]
            a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
            if b > a:
                g, g_val = _golden(f, a, b)
                if g_val > cand_val:
                    cand, cand_val = g, g_val
            if cand_val > best_val:
                best[p], best_val = float(cand), cand_val
        history.append(best_val)
    return best, history


def fit_gram(
    K_unit: np.ndarray,
    targets: Sequence[float],
    n_epochs: int = 5,
    *,
    noise: float | None = None,
    center: bool = True,
    kernel: str | Callable = "precomputed",
    items: Sequence | None = None,
    iterations: int = 3,
) -> GPModel:
    """Fit on a precomputed unit-scale Gram matrix (see :func:`fit`)."""
    y = np.asarray(targets, dtype=float)
    K_unit = np.asarray(K_unit, dtype=float)
    n = len(y)
    if n < 2 or K_unit.shape != (n, n):
        raise GPError(f"need >= 2 targets and a matching {n}x{n} Gram matrix")
    if noise is not None and noise < NOISE_FLOOR:
        raise GPError(f"noise must be at least {NOISE_FLOOR}")
    y_mean = float(y.mean()) if center else 0.0
    yc = y - y_mean
    var = float(np.var(y))

    if var == 0:
        warnings.warn("targets have zero variance; noise fixed at the floor", DegenerateTargets, stacklevel=2)
        sigma_f2, noise_v, history = 1.0, NOISE_FLOOR if noise is None else noise, []
    else:
        c = math.log10(var)
        theta0 = [c, math.log10(noise if noise is not None else max(0.1 * var, NOISE_FLOOR))]
        bounds = [(c - 3.0, c + 3.0), (math.log10(NOISE_FLOOR), c + 1.0)]
        free = [0] if noise is not None else [0, 1]
        theta, history = _optimise(K_unit, yc, theta0, bounds, free, n_epochs)
        sigma_f2, noise_v = 10 ** theta[0], 10 ** theta[1]
        if noise is not None:
            noise_v = noise

    L, jitter = _factor(K_unit, sigma_f2, noise_v)
    alpha = cho_solve((L, True), yc, check_finite=False)
    return GPModel(
        kernel=kernel,
        X=items if items is not None else [],
        y=y,
        y_mean=y_mean,
        sigma_f2=sigma_f2,
        noise=noise_v,
        L=L,
        alpha=alpha,
        jitter=jitter,
        lml_log=history,
        iterations=iterations,
    )


def fit(
    items: Sequence,
    targets: Sequence[float],
    kernel: str | Callable = "tanimoto",
    n_epochs: int = 5,
    *,
    noise: float | None = None,
    center: bool = True,
    iterations: int = 3,
) -> GPModel:
    """Fit an exact GP.

    With ``center=True`` (default) the prior mean is the training-target mean,
    so constant targets are reproduced everywhere and far-away queries revert to
    that mean.  ``center=False`` gives a zero prior mean.  ``noise`` fixes the
    noise variance and leaves only ``sigma_f2`` to optimise.  ``n_epochs=0``
    returns the default hyperparameters (signal variance = target variance,
    noise = 0.1 x that).
    """
    if len(items) != len(targets):
        raise GPError(f"{len(items)} items but {len(targets)} targets")
    K_unit = gram(kernel, items, 1.0, 0.0, iterations).values
    return fit_gram(
        K_unit, targets, n_epochs, noise=noise, center=center, kernel=kernel, items=items, iterations=iterations
    )


def predict_gram(model: GPModel, K_star: np.ndarray, k_diag: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior from unit-scale cross-covariances ``K_star`` (queries x train)."""
    K_star = np.asarray(K_star, dtype=float) * model.sigma_f2
    mean = model.y_mean + K_star @ model.alpha
    v = solve_triangular(model.L, K_star.T, lower=True, check_finite=False)
    noise = model.noise + model.jitter
    var = model.sigma_f2 * np.asarray(k_diag, dtype=float) - np.einsum("ij,ij->j", v, v) + noise
    negative = var < 0
    if np.any(negative):
        model.clamp_events += int(negative.sum())
        var = np.where(negative, 0.0, var)
    return mean, var


def _self_kernel(model: GPModel, query: Sequence) -> np.ndarray:
    kernel = model.kernel
    if kernel == "tanimoto":
        q = np.asarray(query, dtype=float)
        return (np.einsum("ij,ij->i", q, q) > 0).astype(float)
    if kernel == "string":
        return np.array([string_kernel(s, s) for s in query])
    if kernel == "wl":
        return np.array([wl_kernel(g, g, model.iterations) for g in query])
    return np.array([kernel(x, x) for x in query], dtype=float)


def predict(model: GPModel, query: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Predictive mean and variance (including observation noise) at ``query``."""
    if model.kernel == "precomputed":
        raise GPError("model was fit on a precomputed Gram matrix; use predict_gram")
    K_star = cross_kernel(model.kernel, query, model.X, 1.0, model.iterations)
    return predict_gram(model, K_star, _self_kernel(model, query))
