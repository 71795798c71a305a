"""Accuracy of class-probability predictions for ordered outcomes.

Truth is either a matrix of true class probabilities (simulations) or a
vector of realised classes ``1..M`` (real data), in which case it is turned
into one-hot rows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import Dataset, fold_assignments
from .errors import ClassAbsentFromFold, LengthMismatch

MAX_RESPLITS = 10


def _truth_matrix(truth, M: int) -> np.ndarray:
    """2-D truth is taken as probabilities; 1-D truth as realised classes."""
    truth = np.asarray(truth)
    if truth.ndim == 2:
        return truth.astype(np.float64)
    classes = np.atleast_1d(truth)
    if classes.ndim != 1 or np.any(classes != np.round(classes)):
        raise ValueError("realised classes must be a vector of integers")
    classes = classes.astype(np.int64)
    if np.any(classes < 1) or np.any(classes > M):
        raise ValueError(f"classes must lie in 1..{M}")
    out = np.zeros((classes.shape[0], M))
    out[np.arange(classes.shape[0]), classes - 1] = 1.0
    return out


def _pair(truth, pred):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    M = pred.shape[1]
    T = _truth_matrix(truth, M)
    if T.shape != pred.shape:
        raise LengthMismatch(f"truth has shape {T.shape}, predictions {pred.shape}")
    return T, pred


def rps(truth, pred) -> np.ndarray:
    """Ranked probability score of every row.

    ``1/(M-1) * sum_{m=1..M} (F_true(m) - F_pred(m))**2`` with ``F`` the
    cumulative sums across classes. The ``m = M`` term is zero for
    normalised rows and kept anyway.
    """
    T, P = _pair(truth, pred)
    M = P.shape[1]
    d = np.cumsum(T, axis=1) - np.cumsum(P, axis=1)
    return (d * d).sum(axis=1) / (M - 1)


def mse(truth, pred) -> np.ndarray:
    """Mean squared probability error of every row, ``1/M * sum_m (P_true - P_pred)**2``."""
    T, P = _pair(truth, pred)
    d = T - P
    return (d * d).sum(axis=1) / P.shape[1]


def _row_pair(truth, pred):
    pred = np.asarray(pred, dtype=np.float64)
    if np.ndim(truth) == 0:
        return np.array([truth]), pred
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != pred.shape:
        raise LengthMismatch(f"truth has {truth.size} entries, prediction {pred.size}")
    return truth[None, :], pred


def rps_row(truth, pred) -> float:
    """RPS of one prediction; ``truth`` is a probability row or a class in ``1..M``."""
    truth, pred = _row_pair(truth, pred)
    return float(rps(truth, pred[None, :])[0])


def mse_row(truth, pred) -> float:
    """MSE of one prediction; ``truth`` is a probability row or a class in ``1..M``."""
    truth, pred = _row_pair(truth, pred)
    return float(mse(truth, pred[None, :])[0])


@dataclass(frozen=True)
class ScoreReport:
    arps: float
    amse: float
    n: int
    m: int

    def __post_init__(self):
        if not (self.arps >= 0 and self.amse >= 0):
            raise ValueError("scores must be nonnegative")


def score(truth, pred) -> ScoreReport:
    """Average RPS and MSE over rows."""
    r = rps(truth, pred)
    s = mse(truth, pred)
    P = np.atleast_2d(pred)
    return ScoreReport(float(r.mean()), float(s.mean()), P.shape[0], P.shape[1])


@dataclass(frozen=True)
class CVResult:
    """Held-out scores of every (repeat, fold) for each estimator."""

    scores: dict  # estimator -> list of ScoreReport, repeat-major
    fold_assignments: list  # one array per repeat
    k: int
    repeats: int

    def summary(self) -> dict:
        """``{estimator: {"arps": (mean, sd), "amse": (mean, sd)}}`` over folds."""
        out = {}
        for name, reports in self.scores.items():
            a = np.array([r.arps for r in reports])
            m = np.array([r.amse for r in reports])
            out[name] = {"arps": _mean_sd(a), "amse": _mean_sd(m)}
        return out

    def to_csv(self, dataset_name: str = "data", path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "estimator", "metric", "mean", "sd"])
        for name, stats in self.summary().items():
            for metric in ("arps", "amse"):
                mean, sd = stats[metric]
                w.writerow([dataset_name, name, metric, repr(mean), repr(sd)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _mean_sd(a):
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def _folds_with_all_classes(y, M, k, seed, r):
    for attempt in range(MAX_RESPLITS):
        folds = fold_assignments(len(y), k, np.random.default_rng([seed, r, attempt]))
        ok = True
        for f in range(k):
            present = np.unique(y[folds != f])
            if present.size < M:
                ok = False
                break
        if ok:
            return folds
    raise ClassAbsentFromFold(
        f"a training fold missed a class in {MAX_RESPLITS} random splits (repeat {r})")


def cross_validate(dataset: Dataset, estimators: dict, k: int = 10, repeats: int = 10,
                   seed: int = 0) -> CVResult:
    """Repeated k-fold cross-validation with realised-class scores.

    Parameters
    ----------
    dataset : Dataset
    estimators : dict
        Name to callable ``f(train: Dataset, X_test, seed) -> (n_test, M)``
        probabilities.
    k, repeats : int
        Every repeat draws a fresh partition; a partition where some
        training fold lacks a class is redrawn, up to 10 times.
    seed : int
        Fixes every partition and the seed passed to the estimators.
    """
    if k < 2 or k > dataset.N:
        raise ValueError(f"k must lie in 2..{dataset.N}")
    scores = {name: [] for name in estimators}
    plans = []
    for r in range(repeats):
        folds = _folds_with_all_classes(dataset.y, dataset.M, k, seed, r)
        plans.append(folds)
        for f in range(k):
            train = dataset.subset(np.flatnonzero(folds != f))
            test_rows = np.flatnonzero(folds == f)
            fit_seed = int(np.random.default_rng([seed, r, f, 7]).integers(2 ** 31))
            for name, est in estimators.items():
                P = est(train, dataset.X[test_rows], fit_seed)
                scores[name].append(score(dataset.y[test_rows], P))
    return CVResult(scores, plans, k, repeats)
