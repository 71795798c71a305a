"""Weight-based standard errors for Ordered Forest marginal effects.

A marginal effect of class ``m`` is a difference of two weighted outcome
means, one per adjacent cumulative forest. Writing both evaluation points'
weights as a single difference weight per forest gives the effect as

    (sum_i wt_m[i] * Y_m[i] - sum_i wt_{m-1}[i] * Y_{m-1}[i]) / scale

whose variance is estimated with sample counterparts, covariance term
included. All sums run over the estimation half of an inference-ready model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.stats import norm

from . import forest as fc
from .errors import NegativeVariance, NotInferenceReady

_CHUNK = 256


@dataclass(frozen=True)
class DiffWeights:
    """Difference weights of the two forests entering class ``m``'s effect.

    ``w_tilde_m`` is ``None`` for the top class (its cumulative probability
    is the constant 1) and ``w_tilde_m_minus`` is ``None`` for class 1.
    """

    w_tilde_m: np.ndarray | None
    w_tilde_m_minus: np.ndarray | None
    y_m: np.ndarray | None
    y_m_minus: np.ndarray | None
    scale: float = 1.0

    def __post_init__(self):
        if self.w_tilde_m is None and self.w_tilde_m_minus is None:
            raise ValueError("at least one weight vector is required")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        lengths = {len(v) for v in (self.w_tilde_m, self.w_tilde_m_minus, self.y_m, self.y_m_minus)
                   if v is not None}
        if len(lengths) != 1:
            raise ValueError("weight and outcome vectors must have equal length")

    @property
    def n(self) -> int:
        v = self.w_tilde_m if self.w_tilde_m is not None else self.w_tilde_m_minus
        return len(v)

    def effect(self) -> float:
        """The weighted-mean form of the marginal effect."""
        total = 0.0
        if self.w_tilde_m is not None:
            total += float(self.w_tilde_m @ self.y_m)
        if self.w_tilde_m_minus is not None:
            total -= float(self.w_tilde_m_minus @ self.y_m_minus)
        return total / self.scale


def variance_me(dw: DiffWeights) -> float:
    """Estimated variance of a marginal effect from its difference weights.

    ``N/(N-1) / scale**2 * (S_m + S_{m-1} - 2 * S_cross)`` with ``S`` the
    centred sums of squares and cross-products of ``wt * Y`` over the
    estimation sample. Missing terms (classes 1 and M) contribute zero.
    """
    n = dw.n
    if n < 2:
        return 0.0
    zero = np.zeros(n)
    a = dw.w_tilde_m * dw.y_m if dw.w_tilde_m is not None else zero
    b = dw.w_tilde_m_minus * dw.y_m_minus if dw.w_tilde_m_minus is not None else zero
    da = a - a.mean()
    db = b - b.mean()
    s = da @ da + db @ db - 2.0 * (da @ db)
    return max(0.0, n / (n - 1) / dw.scale ** 2 * s)


class Summary(NamedTuple):
    std_error: float
    t_value: float
    p_value: float
    degenerate: bool = False


def summarize(effect: float, variance: float) -> Summary:
    """Standard error, t-value and two-sided normal p-value of an effect."""
    if variance < 0:
        raise NegativeVariance(f"variance must be nonnegative, got {variance}")
    se = float(np.sqrt(variance))
    if se == 0.0:
        if effect == 0.0:
            return Summary(0.0, 0.0, 1.0)
        return Summary(0.0, float(np.copysign(np.inf, effect)), 0.0, True)
    t = effect / se
    return Summary(se, t, float(2.0 * norm.sf(abs(t))))


def _require_ready(model):
    if not getattr(model, "inference_ready", False):
        raise NotInferenceReady("fit the model with inference=True to get standard errors")
    if model.variant != "ordered":
        raise NotInferenceReady("weight-based inference is available for the ordered variant")


def mean_difference_weights(forest, X_up, X_lo) -> np.ndarray:
    """Row-average of ``w(X_up[r]) - w(X_lo[r])`` over the evaluation rows."""
    X_up = np.atleast_2d(X_up)
    X_lo = np.atleast_2d(X_lo)
    total = np.zeros(forest.n_train)
    for lo in range(0, X_up.shape[0], _CHUNK):
        hi = lo + _CHUNK
        total += (fc.extract_weights(forest, X_up[lo:hi]) -
                  fc.extract_weights(forest, X_lo[lo:hi])).sum(axis=0)
    return total / X_up.shape[0]


def window_rows(x, k: int, x_up, x_lo):
    """Copies of the evaluation rows with column ``k`` set to each window end."""
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    X_up = X.copy()
    X_lo = X.copy()
    X_up[:, k] = x_up
    X_lo[:, k] = x_lo
    return X_up, X_lo


def window_scale(window) -> float:
    if window.is_discrete:
        return 1.0
    return float(np.mean(np.asarray(window.x_up) - np.asarray(window.x_lo)))


def assemble(model, m: int, wt: list, scale: float) -> DiffWeights:
    """DiffWeights of class ``m`` given per-forest difference weights ``wt``."""
    M = model.M
    if not 1 <= m <= M:
        raise ValueError(f"class must lie in 1..{M}")
    y = model.est_outcomes
    upper = (wt[m - 1], y[m - 1]) if m <= M - 1 else (None, None)
    lower = (wt[m - 2], y[m - 2]) if m >= 2 else (None, None)
    return DiffWeights(upper[0], lower[0], upper[1], lower[1], scale)


def build_diff_weights(model, k: int, m: int, x, window, eval_kind: str = "at_point") -> DiffWeights:
    """Difference weights for covariate ``k`` and class ``m``.

    Parameters
    ----------
    model : OrderedForestModel
        Must be inference-ready.
    k : int
        Covariate index.
    m : int
        Class in ``1..M``.
    x : (p,) or (n, p) array_like
        Evaluation point(s); for ``eval_kind="mean"`` the rows over which
        difference weights and window widths are averaged.
    window : EvalWindow
        Window ends for column ``k`` (scalars or one entry per row).
    """
    _require_ready(model)
    X_up, X_lo = window_rows(x, k, window.x_up, window.x_lo)
    if eval_kind != "mean" and X_up.shape[0] != 1:
        raise ValueError("pointwise difference weights need a single evaluation point")
    members = [j for j in (m - 2, m - 1) if 0 <= j < model.M - 1]
    wt = [None] * (model.M - 1)
    for j in members:
        wt[j] = mean_difference_weights(model.forests[j], X_up, X_lo)
    return assemble(model, m, wt, window_scale(window))
