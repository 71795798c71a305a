import warnings

import numpy as np
import pytest
from scipy.special import expit, logit

from conftest import ordered_data
from orderedforest.data import Dataset
from orderedforest.errors import NotConverged, RankDeficient
from orderedforest.ologit import (OlogitModel, fit_ologit, gradient, hessian, loglik,
                                  loglik_alpha, ologit_marginal_effects,
                                  ologit_pointwise_effects, predict_proba_ologit,
                                  thresholds_from_theta)
from orderedforest.ordered import load_model, save_model


def irls_logit(X, z, iters=100):
    """Plain iteratively-reweighted least squares for P(z=1) = expit(c + x'b)."""
    A = np.column_stack([np.ones(len(z)), X])
    w = np.zeros(A.shape[1])
    for _ in range(iters):
        mu = expit(A @ w)
        W = mu * (1 - mu)
        delta = np.linalg.solve(A.T @ (W[:, None] * A), A.T @ (z - mu))
        w += delta
        if np.max(np.abs(delta)) < 1e-14:
            break
    return w


def test_two_classes_match_binary_logit():
    ds = ordered_data(n=400, p=3, M=2, seed=5)
    model = fit_ologit(ds)
    assert model.converged
    # P(y=2) = 1 - F(alpha - x'b) = expit(-alpha + x'b)
    w = irls_logit(ds.X, (ds.y == 2).astype(float))
    np.testing.assert_allclose(model.beta, w[1:], atol=1e-6)
    assert model.alpha[0] == pytest.approx(-w[0], abs=1e-6)


def test_predict_hand_examples():
    m2 = OlogitModel(np.array([1.0]), np.array([0.0]), True, 0.0, 0)
    np.testing.assert_allclose(predict_proba_ologit(m2, [[0.0]]), [[0.5, 0.5]], atol=1e-15)
    m3 = OlogitModel(np.array([0.0]), np.array([-1.0, 1.0]), True, 0.0, 0)
    lo = 1 / (1 + np.e)
    np.testing.assert_allclose(predict_proba_ologit(m3, [[3.0]]),
                               [[lo, 1 - 2 * lo, lo]], atol=1e-15)
    assert lo == pytest.approx(0.2689414213699951)


def numeric_gradient(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for j in range(len(theta)):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


@pytest.mark.parametrize("M", [2, 3, 5])
def test_gradient_and_hessian_match_finite_differences(M):
    ds = ordered_data(n=150, p=3, M=M, seed=M)
    rng = np.random.default_rng(M)
    for _ in range(100 if M == 3 else 20):
        theta = np.concatenate([rng.normal(scale=0.7, size=3), [rng.normal()],
                                rng.normal(scale=0.5, size=M - 2)])
        g = gradient(theta, ds.X, ds.y, M)
        fd = numeric_gradient(lambda t: loglik(t, ds.X, ds.y, M), theta)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * np.max(np.abs(g)))
    H = hessian(theta, ds.X, ds.y, M)
    fdH = np.array([numeric_gradient(lambda t: gradient(t, ds.X, ds.y, M)[j], theta)
                    for j in range(len(theta))])
    np.testing.assert_allclose(H, fdH, rtol=1e-5, atol=1e-5 * np.max(np.abs(H)))
    np.testing.assert_allclose(H, H.T, atol=1e-10)


def test_analytic_effects_match_finite_differences():
    ds = ordered_data(n=300, p=3, M=4, seed=1)
    model = fit_ologit(ds)
    X = ds.X[:25]
    h = 1e-6
    for k in range(3):
        up, lo = X.copy(), X.copy()
        up[:, k] += h
        lo[:, k] -= h
        fd = (predict_proba_ologit(model, up) - predict_proba_ologit(model, lo)) / (2 * h)
        analytic = ologit_pointwise_effects(model, X, k)
        np.testing.assert_allclose(analytic, fd, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(analytic.sum(axis=1), 0.0, atol=1e-15)


def test_zero_coefficient_gives_zero_effects():
    model = OlogitModel(np.array([0.0, 1.2]), np.array([-0.5, 0.5]), True, 0.0, 0)
    X = np.random.default_rng(0).normal(size=(10, 2))
    assert np.all(ologit_pointwise_effects(model, X, 0) == 0.0)


def test_marginal_effects_table():
    ds = ordered_data(n=300, p=4, M=3, seed=2, binary_col=True)
    model = fit_ologit(ds)
    table = ologit_marginal_effects(model, ds, "mean")
    E = table.matrix()
    np.testing.assert_allclose(E.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(E[0], ologit_pointwise_effects(model, ds.X, 0).mean(axis=0))
    # binary column: mean over rows of the 1-vs-0 change
    hi, lo = ds.X.copy(), ds.X.copy()
    hi[:, 3], lo[:, 3] = 1.0, 0.0
    expected = (predict_proba_ologit(model, hi) - predict_proba_ologit(model, lo)).mean(axis=0)
    np.testing.assert_allclose(E[3], expected, atol=1e-14)
    assert not table.with_inference


def test_intercept_only_fit_recovers_empirical_cumulative_logits():
    rng = np.random.default_rng(3)
    y = rng.choice([1, 2, 3, 4], size=500, p=[0.1, 0.4, 0.3, 0.2])
    # a pure-noise covariate keeps the design non-empty; its slope should be small
    ds = Dataset(rng.normal(size=(500, 1)), y, ("z",), np.zeros(1, bool), 4)
    model = fit_ologit(ds)
    cum = np.cumsum(np.bincount(y, minlength=5)[1:])[:-1] / 500
    np.testing.assert_allclose(model.alpha, logit(cum), atol=0.15)
    assert abs(model.beta[0]) < 0.2


def test_loglik_trace_is_nondecreasing_and_matches_final():
    ds = ordered_data(n=200, p=4, M=5, seed=9)
    model = fit_ologit(ds)
    trace = np.array(model.loglik_trace)
    assert len(trace) == model.n_iter + 1
    assert np.all(np.diff(trace) >= 0)
    assert model.loglik == pytest.approx(loglik_alpha(model.beta, model.alpha, ds.X, ds.y),
                                         abs=1e-8)


def test_thresholds_are_increasing():
    a = thresholds_from_theta(-1.0, np.array([-5.0, 0.0, 2.0]))
    assert np.all(np.diff(a) > 0)


def test_rank_deficient_and_not_converged():
    ds = ordered_data(n=100, p=2, seed=4)
    X = np.column_stack([ds.X, 2 * ds.X[:, 0]])
    with pytest.raises(RankDeficient):
        fit_ologit(Dataset(X, ds.y, ("a", "b", "c"), np.zeros(3, bool), ds.M))
    with pytest.warns(NotConverged):
        model = fit_ologit(ds, max_iter=1)
    assert not model.converged and model.n_iter == 1


def test_roundtrip(tmp_path):
    ds = ordered_data(n=120, seed=6)
    model = fit_ologit(ds)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert isinstance(back, OlogitModel)
    assert np.array_equal(back.predict_proba(ds.X), model.predict_proba(ds.X))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fit_ologit(ds)
