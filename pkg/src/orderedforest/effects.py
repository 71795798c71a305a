"""Marginal effects of covariates on class probabilities.

Continuous covariates use a centred finite difference over a window of
+-0.1 standard deviations kept inside the training support; binary and
categorical covariates use a discrete change between the rounded-up and
rounded-down values. Effects are reported either as the mean of pointwise
effects over a sample or at the sample mean of the covariates.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import inference as inf
from .data import Dataset
from .errors import ZeroVarianceCovariate

EVAL_KINDS = ("mean", "at_mean", "at_point")
WINDOW_SD = 0.1


@dataclass(frozen=True)
class EvalWindow:
    """Upper and lower evaluation values of one covariate (scalars or per-row arrays)."""

    x_up: float | np.ndarray
    x_lo: float | np.ndarray
    is_discrete: bool


def build_window(k: int, x, train_meta) -> EvalWindow:
    """Evaluation window for covariate ``k`` around ``x[..., k]``.

    Continuous: ``x_k +- 0.1 sd_k``; when one end leaves ``[min_k, max_k]``
    it is set to the bound and the other end moved so the width stays
    ``min(0.2 sd_k, max_k - min_k)``. Categorical: ``ceil(x_k)`` and
    ``floor(x_k)``, or the unit step ``(x_k, x_k - 1)`` at integer points
    (``(x_k + 1, x_k)`` at the support minimum). Binary: ``(1, 0)``.

    Raises
    ------
    ZeroVarianceCovariate
        If the covariate is constant in the training data.
    """
    x = np.asarray(x, dtype=np.float64)
    xk = x[..., k]
    sd, lo_b, hi_b = train_meta.sd[k], train_meta.min[k], train_meta.max[k]
    kind = train_meta.kind[k]
    if not sd > 0 or hi_b <= lo_b:
        raise ZeroVarianceCovariate(f"covariate {train_meta.col_names[k]!r} has no variation")

    if kind == "binary":
        up = np.ones_like(xk)
        lo = np.zeros_like(xk)
        return EvalWindow(_scalar(up), _scalar(lo), True)

    if kind == "categorical":
        up = np.ceil(xk)
        lo = np.floor(xk)
        integral = up == lo
        at_min = integral & (xk <= lo_b)
        up = np.where(integral, xk, up)
        lo = np.where(integral, xk - 1.0, lo)
        up = np.where(at_min, xk + 1.0, up)
        lo = np.where(at_min, xk, lo)
        up = np.clip(up, lo_b, hi_b)
        lo = np.clip(lo, lo_b, hi_b)
        return EvalWindow(_scalar(up), _scalar(lo), True)

    half = WINDOW_SD * sd
    width = min(2.0 * half, hi_b - lo_b)
    up = xk + half
    lo = xk - half
    over = up > hi_b
    up = np.where(over, hi_b, up)
    lo = np.where(over, hi_b - width, lo)
    under = lo < lo_b
    lo = np.where(under, lo_b, lo)
    up = np.where(under, lo_b + width, up)
    return EvalWindow(_scalar(up), _scalar(lo), False)


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class EffectRow:
    covariate: str
    k: int
    class_label: object
    m: int
    effect: float
    std_error: float | None
    t_value: float | None
    p_value: float | None
    eval_kind: str


def stars(p_value) -> str:
    if p_value is None or np.isnan(p_value):
        return ""
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.10:
        return "*"
    return ""


@dataclass(frozen=True)
class EffectsTable:
    """Marginal effects, one row per (covariate, class)."""

    rows: tuple
    M: int
    eval_kind: str
    with_inference: bool

    def matrix(self) -> np.ndarray:
        """(p, M) array of effects in covariate order."""
        ks = sorted({r.k for r in self.rows})
        out = np.zeros((len(ks), self.M))
        pos = {k: i for i, k in enumerate(ks)}
        for r in self.rows:
            out[pos[r.k], r.m - 1] = r.effect
        return out

    def column(self, name: str) -> list:
        return [r for r in self.rows if r.covariate == name]

    def to_csv(self, path=None) -> str:
        """Write (or return) the table as CSV."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["covariate", "class", "effect"]
        if self.with_inference:
            header += ["std_error", "t_value", "p_value", "signif"]
        header.append("eval_kind")
        writer.writerow(header)
        for r in self.rows:
            line = [r.covariate, r.class_label, repr(float(r.effect))]
            if self.with_inference:
                line += [_fmt_opt(r.std_error), _fmt_opt(r.t_value), _fmt_opt(r.p_value),
                         stars(r.p_value)]
            line.append(r.eval_kind)
            writer.writerow(line)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def format(self) -> str:
        """Console table in the layout Effect / Std.Error / t-Value / p-Value."""
        width = max(8, *(len(r.covariate) for r in self.rows)) if self.rows else 8
        head = f"{'Variable':<{width}}  {'Class':>5}  {'Effect':>9}"
        if self.with_inference:
            head += f"  {'Std.Error':>9}  {'t-Value':>9}  {'p-Value':>7}"
        lines = [head, "-" * len(head)]
        last = None
        for r in self.rows:
            name = r.covariate if r.covariate != last else ""
            last = r.covariate
            line = f"{name:<{width}}  {str(r.class_label):>5}  {r.effect:>9.4f}"
            if self.with_inference:
                se = "" if r.std_error is None or np.isnan(r.std_error) else f"{r.std_error:.4f}"
                tv = "" if r.t_value is None or np.isnan(r.t_value) else f"{r.t_value:.4f}"
                pv = "" if r.p_value is None or np.isnan(r.p_value) else f"{r.p_value:.4f}"
                line += f"  {se:>9}  {tv:>9}  {pv:>7} {stars(r.p_value)}"
            lines.append(line)
        if self.with_inference:
            lines.append("Signif. codes: *** p<0.01, ** p<0.05, * p<0.1")
        return "\n".join(lines)


def _fmt_opt(v):
    return "" if v is None or np.isnan(v) else repr(float(v))


def evaluation_rows(X, eval_kind: str, x=None) -> np.ndarray:
    """Points at which pointwise effects are evaluated."""
    if eval_kind == "mean":
        return np.asarray(X, dtype=np.float64)
    if eval_kind == "at_mean":
        return np.asarray(X, dtype=np.float64).mean(axis=0, keepdims=True)
    if eval_kind == "at_point":
        if x is None:
            raise ValueError("eval_kind='at_point' needs x")
        return np.atleast_2d(np.asarray(x, dtype=np.float64))
    raise ValueError(f"eval_kind must be one of {EVAL_KINDS}, got {eval_kind!r}")


def _data_matrix(data) -> np.ndarray:
    return data.X if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))


def marginal_effects(model, data, eval_kind: str = "mean", with_inference: bool = False,
                     x=None, columns=None) -> EffectsTable:
    """Marginal effects of every covariate on every class probability.

    Parameters
    ----------
    model : OrderedForestModel
    data : Dataset or (n, p) array
        Sample whose rows are averaged over (``"mean"``) or whose column means
        define the evaluation point (``"at_mean"``).
    eval_kind : {"mean", "at_mean", "at_point"}
    with_inference : bool
        Attach weight-based standard errors, t-values and p-values; needs a
        model fit with ``inference=True``.
    x : (p,) array_like, optional
        Evaluation point for ``"at_point"``.
    columns : sequence of int, optional
        Covariates to report (default: all).
    """
    if with_inference:
        inf._require_ready(model)
    meta = model.train_meta
    E = evaluation_rows(_data_matrix(data), eval_kind, x)
    ks = range(model.p) if columns is None else columns
    rows = []
    for k in ks:
        name = meta.col_names[k]
        try:
            window = build_window(k, E, meta)
        except ZeroVarianceCovariate:
            for m in range(1, model.M + 1):
                rows.append(EffectRow(name, k, model.label_values[m - 1], m, 0.0,
                                      np.nan if with_inference else None,
                                      np.nan if with_inference else None,
                                      np.nan if with_inference else None, eval_kind))
            continue
        X_up, X_lo = inf.window_rows(E, k, window.x_up, window.x_lo)
        diff = model.predict_proba(X_up) - model.predict_proba(X_lo)
        if not window.is_discrete:
            diff = diff / (np.asarray(window.x_up) - np.asarray(window.x_lo)).reshape(-1, 1)
        effects = diff.mean(axis=0)

        summaries = [None] * model.M
        if with_inference:
            wt = [inf.mean_difference_weights(f, X_up, X_lo) for f in model.forests]
            scale = inf.window_scale(window)
            for m in range(1, model.M + 1):
                var = inf.variance_me(inf.assemble(model, m, wt, scale))
                summaries[m - 1] = inf.summarize(float(effects[m - 1]), var)
        for m in range(1, model.M + 1):
            s = summaries[m - 1]
            rows.append(EffectRow(name, k, model.label_values[m - 1], m, float(effects[m - 1]),
                                  None if s is None else s.std_error,
                                  None if s is None else s.t_value,
                                  None if s is None else s.p_value, eval_kind))
    return EffectsTable(tuple(rows), model.M, eval_kind, with_inference)

