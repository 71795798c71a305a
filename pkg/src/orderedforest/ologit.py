"""Ordered logit (proportional odds) baseline.

``P(Y <= m | x) = F(alpha_m - x'beta)`` with ``F`` the logistic cdf. The
thresholds are optimised through ``alpha_1`` and log-gaps
``gamma_m = log(alpha_m - alpha_{m-1})`` so every Newton step stays
feasible, on standardised covariates, then mapped back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .data import Dataset
from .effects import EffectRow, EffectsTable, build_window, evaluation_rows
from .errors import ColumnMismatch, NotConverged, RankDeficient, ZeroVarianceCovariate
from .ordered import TrainMeta

GRAD_TOL = 1e-8
MIN_GAP = 1e-6


@dataclass(frozen=True)
class OlogitModel:
    beta: np.ndarray
    alpha: np.ndarray
    converged: bool
    loglik: float
    n_iter: int
    train_meta: TrainMeta | None = None
    label_values: tuple = ()
    loglik_trace: tuple = ()  # log-likelihood after each accepted step, start included

    @property
    def M(self) -> int:
        return len(self.alpha) + 1

    @property
    def p(self) -> int:
        return len(self.beta)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba_ologit(self, X)

    def to_dict(self) -> dict:
        return {"format": "orderedforest.OlogitModel", "version": 1,
                "beta": self.beta.tolist(), "alpha": self.alpha.tolist(),
                "converged": self.converged, "loglik": self.loglik, "n_iter": self.n_iter,
                "train_meta": None if self.train_meta is None else self.train_meta.to_dict(),
                "label_values": list(self.label_values),
                "loglik_trace": list(self.loglik_trace)}

    @classmethod
    def from_dict(cls, d: dict) -> "OlogitModel":
        meta = None if d["train_meta"] is None else TrainMeta.from_dict(d["train_meta"])
        return cls(np.array(d["beta"]), np.array(d["alpha"]), d["converged"], d["loglik"],
                   d["n_iter"], meta, tuple(d["label_values"]), tuple(d.get("loglik_trace", ())))


def logistic_pdf(z):
    F = expit(z)
    return F * (1.0 - F)


def thresholds_from_theta(a1: float, log_gaps) -> np.ndarray:
    return a1 + np.concatenate([[0.0], np.cumsum(np.exp(log_gaps))])


def _unpack(theta, p):
    beta = theta[:p]
    alpha = thresholds_from_theta(theta[p], theta[p + 1:])
    return beta, alpha


def _cell_probs(alpha, eta, y):
    """Bounds and probabilities of each observation's observed interval."""
    M = len(alpha) + 1
    ext = np.concatenate([[-np.inf], alpha, [np.inf]])
    z_hi = ext[y] - eta
    z_lo = ext[y - 1] - eta
    # difference on the side of the cdf where it is best conditioned
    flip = z_lo > 0
    prob = np.where(flip, expit(-z_lo) - expit(-z_hi), expit(z_hi) - expit(z_lo))
    return z_hi, z_lo, np.maximum(prob, 1e-300), M


def loglik_alpha(beta, alpha, X, y) -> float:
    """Log-likelihood at coefficients ``beta`` and thresholds ``alpha``."""
    _, _, prob, _ = _cell_probs(alpha, X @ beta, y)
    return float(np.log(prob).sum())


def _derivatives(beta, alpha, X, y, hessian: bool):
    """Log-likelihood, gradient, Hessian in (beta, alpha) coordinates."""
    n, p = X.shape
    z_hi, z_lo, prob, M = _cell_probs(alpha, X @ beta, y)
    f_hi = np.where(np.isfinite(z_hi), logistic_pdf(z_hi), 0.0)
    f_lo = np.where(np.isfinite(z_lo), logistic_pdf(z_lo), 0.0)
    # rows of the Jacobians of z_hi and z_lo w.r.t. (beta, alpha)
    G_hi = np.zeros((n, p + M - 1))
    G_lo = np.zeros((n, p + M - 1))
    G_hi[:, :p] = -X
    G_lo[:, :p] = -X
    rows = np.arange(n)
    top = y <= M - 1
    G_hi[rows[top], p + y[top] - 1] = 1.0
    G_hi[~top, :p] = 0.0
    bottom = y >= 2
    G_lo[rows[bottom], p + y[bottom] - 2] = 1.0
    G_lo[~bottom, :p] = 0.0
    S = (f_hi / prob)[:, None] * G_hi - (f_lo / prob)[:, None] * G_lo
    ll = float(np.log(prob).sum())
    grad = S.sum(axis=0)
    if not hessian:
        return ll, grad, None
    fp_hi = np.where(np.isfinite(z_hi), f_hi * (1.0 - 2.0 * expit(z_hi)), 0.0)
    fp_lo = np.where(np.isfinite(z_lo), f_lo * (1.0 - 2.0 * expit(z_lo)), 0.0)
    H = (G_hi.T * (fp_hi / prob)) @ G_hi - (G_lo.T * (fp_lo / prob)) @ G_lo - S.T @ S
    return ll, grad, H


def _theta_jacobian(theta, p, M):
    """d(beta, alpha)/d theta."""
    J = np.eye(p + M - 1)
    gaps = np.exp(theta[p + 1:])
    for m in range(1, M - 1):
        J[p + m, p] = 1.0
        J[p + m, p + 1:p + 1 + m] = gaps[:m]
    return J


def loglik(theta, X, y, M) -> float:
    """Log-likelihood in the optimiser's parameterisation ``(beta, alpha_1, log-gaps)``."""
    X = np.asarray(X, dtype=np.float64)
    beta, alpha = _unpack(np.asarray(theta, dtype=np.float64), X.shape[1])
    return loglik_alpha(beta, alpha, X, np.asarray(y))


def gradient(theta, X, y, M) -> np.ndarray:
    """Analytic gradient of :func:`loglik`."""
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    beta, alpha = _unpack(theta, X.shape[1])
    _, g, _ = _derivatives(beta, alpha, X, np.asarray(y), hessian=False)
    return _theta_jacobian(theta, X.shape[1], M).T @ g


def hessian(theta, X, y, M) -> np.ndarray:
    """Analytic Hessian of :func:`loglik`."""
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    p = X.shape[1]
    beta, alpha = _unpack(theta, p)
    _, g, H = _derivatives(beta, alpha, X, np.asarray(y), hessian=True)
    J = _theta_jacobian(theta, p, M)
    Ht = J.T @ H @ J
    gaps = np.exp(theta[p + 1:])
    g_alpha = g[p:]
    for j in range(1, M - 1):
        # alpha_m for m >= j depends on exp(gamma_j)
        Ht[p + j, p + j] += gaps[j - 1] * g_alpha[j:].sum()
    return Ht


def _null_thresholds(y, M) -> np.ndarray:
    counts = np.bincount(y, minlength=M + 1)[1:].astype(float)
    cum = np.cumsum(counts)[:-1] / counts.sum()
    cum = np.clip(cum, 1e-4, 1 - 1e-4)
    alpha = logit(cum)
    for m in range(1, len(alpha)):
        alpha[m] = max(alpha[m], alpha[m - 1] + MIN_GAP)
    return alpha


def _newton(theta, X, y, M, max_iter):
    """Damped Newton ascent; returns (theta, loglik, converged, steps, trace)."""
    ll = loglik(theta, X, y, M)
    trace = [ll]
    steps = 0
    while True:
        g = gradient(theta, X, y, M)
        if np.max(np.abs(g)) < GRAD_TOL:
            return theta, ll, True, steps, trace
        if steps == max_iter:
            return theta, ll, False, steps, trace
        neg = -hessian(theta, X, y, M)
        # add a ridge until the negative Hessian factorises
        damping = 0.0
        scale = max(1.0, np.max(np.abs(np.diag(neg))))
        while True:
            try:
                L = np.linalg.cholesky(neg + damping * np.eye(len(theta)))
                break
            except np.linalg.LinAlgError:
                damping = 1e-8 * scale if damping == 0.0 else damping * 10.0
        step = np.linalg.solve(L.T, np.linalg.solve(L, g))
        slope = g @ step
        t = 1.0
        for _ in range(40):
            cand = theta + t * step
            ll_new = loglik(cand, X, y, M)
            if np.isfinite(ll_new) and ll_new >= ll + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no ascent along the Newton direction: stuck at machine precision
            return theta, ll, False, steps, trace
        theta, ll = cand, ll_new
        steps += 1
        trace.append(ll)


def fit_ologit(dataset: Dataset, max_iter: int = 25, warn: bool = True) -> OlogitModel:
    """Maximum-likelihood ordered logit.

    Newton iterations with Armijo backtracking, starting from the exact null
    model (``beta = 0``, thresholds at the empirical cumulative logits).
    Converged means the gradient's largest entry fell below ``1e-8``; a
    model that runs out of iterations is still returned, with
    ``converged=False``.

    Raises
    ------
    RankDeficient
        If ``[1, X]`` does not have full column rank.
    """
    X = np.asarray(dataset.X, dtype=np.float64)
    y = np.asarray(dataset.y, dtype=np.int64)
    M = dataset.M
    n, p = X.shape
    if np.linalg.matrix_rank(np.column_stack([np.ones(n), X])) < p + 1:
        raise RankDeficient("covariates are collinear with each other or the thresholds")
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    Z = (X - mu) / sigma

    alpha0 = _null_thresholds(y, M)
    theta0 = np.concatenate([np.zeros(p), [alpha0[0]], np.log(np.diff(alpha0))])
    theta, ll, converged, n_iter, trace = _newton(theta0, Z, y, M, max_iter)
    beta_s, alpha_s = _unpack(theta, p)
    beta = beta_s / sigma
    alpha = alpha_s + mu @ beta
    if warn and not converged:
        warnings.warn(f"ordered logit did not converge in {max_iter} iterations",
                      NotConverged, stacklevel=2)
    meta = TrainMeta.from_data(X, dataset.col_names, dataset.categorical_mask)
    return OlogitModel(beta, alpha, converged, ll, n_iter, meta, dataset.label_values,
                       tuple(trace))


def _matrix(model, X):
    if isinstance(X, Dataset):
        X = X.X
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.p:
        raise ColumnMismatch(f"expected {model.p} columns, got {X.shape[1]}")
    return X


def predict_proba_ologit(model: OlogitModel, X) -> np.ndarray:
    """``P(m | x) = F(alpha_m - x'beta) - F(alpha_{m-1} - x'beta)``, shape (n, M)."""
    X = _matrix(model, X)
    eta = X @ model.beta
    cdf = expit(model.alpha[None, :] - eta[:, None])
    n = X.shape[0]
    return np.diff(np.hstack([np.zeros((n, 1)), cdf, np.ones((n, 1))]), axis=1)


def ologit_pointwise_effects(model: OlogitModel, X, k: int) -> np.ndarray:
    """Analytic derivative of every class probability w.r.t. ``x_k``, shape (n, M)."""
    X = _matrix(model, X)
    eta = X @ model.beta
    n = X.shape[0]
    dens = logistic_pdf(model.alpha[None, :] - eta[:, None])
    padded = np.hstack([np.zeros((n, 1)), dens, np.zeros((n, 1))])
    return (padded[:, :-1] - padded[:, 1:]) * model.beta[k]


def ologit_marginal_effects(model: OlogitModel, data, eval_kind: str = "mean",
                            x=None) -> EffectsTable:
    """Marginal effects of the ordered logit in the Ordered Forest table layout.

    Continuous covariates use the analytic derivative; binary and
    categorical covariates use discrete probability changes over the same
    windows as the forest. No standard errors are attached.
    """
    meta = model.train_meta
    E = evaluation_rows(_matrix(model, data), eval_kind, x)
    labels = model.label_values or tuple(range(1, model.M + 1))
    rows = []
    for k in range(model.p):
        name = meta.col_names[k] if meta is not None else f"x{k + 1}"
        kind = meta.kind[k] if meta is not None else "continuous"
        if kind == "continuous":
            eff = ologit_pointwise_effects(model, E, k).mean(axis=0)
        else:
            try:
                window = build_window(k, E, meta)
            except ZeroVarianceCovariate:
                eff = np.zeros(model.M)
            else:
                X_up = E.copy()
                X_lo = E.copy()
                X_up[:, k] = window.x_up
                X_lo[:, k] = window.x_lo
                eff = (predict_proba_ologit(model, X_up) - predict_proba_ologit(model, X_lo)).mean(axis=0)
        for m in range(1, model.M + 1):
            rows.append(EffectRow(name, k, labels[m - 1], m, float(eff[m - 1]),
                                  None, None, None, eval_kind))
    return EffectsTable(tuple(rows), model.M, eval_kind, False)
