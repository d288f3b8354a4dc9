import warnings

import numpy as np
import pytest

from polycomplex import gp
from polycomplex.gp import DegenerateTargets, fit, fit_gram, log_marginal_likelihood, predict, predict_gram


def fixture30(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((30, 12))
    y = np.sin(X @ rng.normal(size=12)) + 0.1 * rng.normal(size=30)
    return X, y


def test_interpolation_at_noise_floor():
    X, y = fixture30()
    model = fit(X, y, "tanimoto", n_epochs=3, noise=gp.NOISE_FLOOR)
    mean, _ = predict(model, X)
    assert np.max(np.abs(mean - y)) < 1e-4


def test_posterior_variance_bounded_by_prior():
    X, y = fixture30(1)
    model = fit(X, y, "tanimoto", n_epochs=2)
    rng = np.random.default_rng(2)
    Q = np.vstack([X, rng.random((50, 12)), np.zeros((1, 12))])
    _, var = predict(model, Q)
    prior = model.sigma_f2 * gp._self_kernel(model, Q) + model.noise + model.jitter
    assert np.all(var <= prior + 1e-8)
    assert np.all(var >= 0)


def test_lml_non_decreasing():
    X, y = fixture30(3)
    model = fit(X, y, "tanimoto", n_epochs=5)
    hist = model.lml_log
    assert len(hist) == 5
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert log_marginal_likelihood(model) == pytest.approx(hist[-1], rel=1e-9, abs=1e-9)


def test_lml_matches_dense_formula():
    X, y = fixture30(4)
    model = fit(X, y, "tanimoto", n_epochs=0)
    var = np.var(y)
    assert model.theta == pytest.approx((var, 0.1 * var))
    K = model.sigma_f2 * gp.gram("tanimoto", X).values + model.noise * np.eye(30)
    r = y - y.mean()
    ref = -0.5 * r @ np.linalg.solve(K, r) - 0.5 * np.linalg.slogdet(K)[1] - 15 * np.log(2 * np.pi)
    assert log_marginal_likelihood(model) == pytest.approx(ref, rel=1e-10)


def test_constant_targets_warn_and_reproduce():
    X, _ = fixture30()
    with pytest.warns(DegenerateTargets):
        model = fit(X, np.full(30, 3.0), "tanimoto")
    assert model.noise == gp.NOISE_FLOOR
    mean, _ = predict(model, X[:5])
    assert np.allclose(mean, 3.0)


def test_zero_mean_orthogonal_query():
    X = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    model = fit(X, [1.0, 2.0], "tanimoto", n_epochs=0, center=False)
    mean, var = predict(model, np.array([[0, 0, 1.0]]))
    assert mean[0] == 0.0
    assert var[0] == pytest.approx(model.sigma_f2 + model.noise)


def test_centred_far_query_returns_mean():
    X = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    model = fit(X, [1.0, 2.0], "tanimoto", n_epochs=0)
    mean, _ = predict(model, np.array([[0, 0, 1.0]]))
    assert mean[0] == pytest.approx(1.5)


def test_jitter_ladder_recovers_singular_gram():
    K = np.ones((4, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L, extra = gp._factor(K, 1.0, 0.0)
    assert extra in gp.JITTER_LADDER
    with pytest.raises(gp.FactorizationFailed):
        gp._factor(-np.eye(3), 1.0, 0.0)


def test_other_kernels_and_errors():
    smiles = ["CCO", "CCC", "CCCO", "OCCO", "CC"]
    model = fit(smiles, [1.0, 2.0, 1.5, 0.5, 2.5], "string", n_epochs=1)
    mean, var = predict(model, ["CCO"])
    assert mean.shape == (1,) and var[0] > 0
    with pytest.raises(gp.GPError):
        fit(smiles, [1.0], "string")
    with pytest.raises(gp.GPError):
        fit_gram(np.eye(2), [1.0, 2.0], noise=1e-9)
    pre = fit_gram(np.eye(2), [1.0, 2.0], 1)
    with pytest.raises(gp.GPError):
        predict(pre, [[1.0, 0.0]])
    mean, var = predict_gram(pre, np.array([[1.0, 0.0]]), np.array([1.0]))
    assert mean.shape == (1,)
