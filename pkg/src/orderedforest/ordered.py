"""Ordered Forest and multinomial forest class-probability estimators.

The ordered variant fits one regression forest per cumulative indicator
``1{y <= m}`` (m = 1..M-1) and differences adjacent predictions; the
multinomial variant fits one forest per class indicator ``1{y == m}``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import forest as fc
from .data import Dataset, split_halves
from .errors import ClassTooSmall, ColumnMismatch

MODEL_FORMAT_VERSION = 1
VARIANTS = ("ordered", "multinomial")


@dataclass(frozen=True)
class TrainMeta:
    """Column summaries of the training covariates used for effect windows."""

    col_names: tuple
    mean: np.ndarray
    sd: np.ndarray
    min: np.ndarray
    max: np.ndarray
    kind: tuple  # "continuous", "categorical" or "binary" per column

    @classmethod
    def from_data(cls, X, col_names, categorical_mask) -> "TrainMeta":
        X = np.asarray(X, dtype=np.float64)
        sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
        kinds = []
        for j in range(X.shape[1]):
            levels = np.unique(X[:, j])
            if levels.size == 2 and levels[0] == 0.0 and levels[1] == 1.0:
                kinds.append("binary")
            elif categorical_mask[j]:
                kinds.append("categorical")
            else:
                kinds.append("continuous")
        return cls(tuple(col_names), X.mean(axis=0), sd, X.min(axis=0), X.max(axis=0), tuple(kinds))

    def to_dict(self) -> dict:
        return {"col_names": list(self.col_names), "mean": self.mean.tolist(),
                "sd": self.sd.tolist(), "min": self.min.tolist(), "max": self.max.tolist(),
                "kind": list(self.kind)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainMeta":
        return cls(tuple(d["col_names"]), np.array(d["mean"]), np.array(d["sd"]),
                   np.array(d["min"]), np.array(d["max"]), tuple(d["kind"]))


@dataclass(frozen=True)
class OrderedForestModel:
    """Fitted member forests plus the bookkeeping needed for effects and inference.

    With ``inference_ready`` the forests were grown on ``fit_rows`` and their
    leaves refilled from ``est_rows``; ``est_outcomes[j]`` then holds the
    indicator outcomes of those rows for forest ``j``.
    """

    variant: str
    forests: list
    M: int
    label_values: tuple
    params: fc.ForestParams
    train_meta: TrainMeta
    categorical_mask: np.ndarray
    inference_ready: bool = False
    fit_rows: np.ndarray | None = None
    est_rows: np.ndarray | None = None
    est_outcomes: np.ndarray | None = None
    n_train: int = 0

    @property
    def honest(self) -> bool:
        return self.params.honest

    @property
    def p(self) -> int:
        return len(self.train_meta.col_names)

    def predict_proba(self, X, oob: bool = False) -> np.ndarray:
        return predict_proba(self, X, oob=oob)

    def to_dict(self) -> dict:
        return {
            "format": "orderedforest.OrderedForestModel",
            "version": MODEL_FORMAT_VERSION,
            "variant": self.variant,
            "M": self.M,
            "label_values": list(self.label_values),
            "params": self.params.to_dict(),
            "train_meta": self.train_meta.to_dict(),
            "categorical_mask": [bool(v) for v in self.categorical_mask],
            "inference_ready": self.inference_ready,
            "n_train": self.n_train,
            "fit_rows": None if self.fit_rows is None else self.fit_rows.tolist(),
            "est_rows": None if self.est_rows is None else self.est_rows.tolist(),
            "est_outcomes": None if self.est_outcomes is None
            else self.est_outcomes.astype(int).tolist(),
            "forests": [f.to_dict() for f in self.forests],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OrderedForestModel":
        if doc.get("format") != "orderedforest.OrderedForestModel":
            raise ValueError("not an Ordered Forest model document")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {doc.get('version')}")

        def arr(key, dtype):
            return None if doc[key] is None else np.asarray(doc[key], dtype=dtype)

        return cls(
            variant=doc["variant"], forests=[fc.Forest.from_dict(f) for f in doc["forests"]],
            M=doc["M"], label_values=tuple(doc["label_values"]),
            params=fc.ForestParams(**doc["params"]),
            train_meta=TrainMeta.from_dict(doc["train_meta"]),
            categorical_mask=np.asarray(doc["categorical_mask"], dtype=bool),
            inference_ready=doc["inference_ready"], n_train=doc["n_train"],
            fit_rows=arr("fit_rows", np.int64), est_rows=arr("est_rows", np.int64),
            est_outcomes=arr("est_outcomes", np.float64),
        )


def save_model(model, path) -> None:
    """Write a model as a deterministic JSON document."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True, separators=(",", ":"))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") == "orderedforest.OlogitModel":
        from .ologit import OlogitModel
        return OlogitModel.from_dict(doc)
    return OrderedForestModel.from_dict(doc)


def make_indicators(y, M: int, variant: str = "ordered") -> np.ndarray:
    """Binary targets, one row per member forest.

    ``ordered``: ``1{y <= m}`` for m = 1..M-1. ``multinomial``: ``1{y == m}``
    for m = 1..M.
    """
    y = np.asarray(y)
    if variant == "ordered":
        levels = np.arange(1, M)
        return (y[None, :] <= levels[:, None]).astype(np.float64)
    if variant == "multinomial":
        levels = np.arange(1, M + 1)
        return (y[None, :] == levels[:, None]).astype(np.float64)
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def cumulative_to_probs(cum) -> np.ndarray:
    """Class probabilities from (n, M-1) cumulative predictions.

    Differences adjacent cumulative values, sets negative results to zero and
    rescales each row to sum to one.
    """
    cum = np.atleast_2d(np.asarray(cum, dtype=np.float64))
    n = cum.shape[0]
    padded = np.hstack([np.zeros((n, 1)), cum, np.ones((n, 1))])
    return _normalise(np.maximum(np.diff(padded, axis=1), 0.0))


def _normalise(P: np.ndarray) -> np.ndarray:
    totals = P.sum(axis=1, keepdims=True)
    bad = ~(totals[:, 0] > 0)
    P = P / np.where(totals > 0, totals, 1.0)
    if np.any(bad):
        P[bad] = 1.0 / P.shape[1]
    return P


def fit(dataset: Dataset, params: fc.ForestParams | None = None, variant: str = "ordered",
        inference: bool = False) -> OrderedForestModel:
    """Fit an Ordered Forest (or multinomial forest) on a dataset.

    Parameters
    ----------
    dataset : Dataset
    params : ForestParams, optional
        Shared by every member forest, including the seed, so all forests
        see identical resampling.
    variant : {"ordered", "multinomial"}
    inference : bool
        Split the sample in two random halves: grow the forests on the first
        and fill their leaves from the second, so weights and outcomes used
        for standard errors are independent.
    """
    params = params or fc.ForestParams()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    counts = np.bincount(dataset.y, minlength=dataset.M + 1)[1:]
    if np.any(counts < params.min_leaf):
        small = [dataset.label_values[m] for m in np.flatnonzero(counts < params.min_leaf)]
        warnings.warn(f"classes {small} have fewer than min_leaf={params.min_leaf} observations",
                      ClassTooSmall, stacklevel=2)

    targets = make_indicators(dataset.y, dataset.M, variant)
    meta = TrainMeta.from_data(dataset.X, dataset.col_names, dataset.categorical_mask)
    common = dict(variant=variant, M=dataset.M, label_values=dataset.label_values,
                  params=params, train_meta=meta, categorical_mask=dataset.categorical_mask,
                  n_train=dataset.N)

    if not inference:
        forests = fc.fit_forests(dataset.X, list(targets), params)
        return OrderedForestModel(forests=forests, **common)

    half_one = split_halves(dataset.N, np.random.default_rng([params.seed, 1]))
    fit_rows = np.flatnonzero(half_one)
    est_rows = np.flatnonzero(~half_one)
    grown = fc.fit_forests(dataset.X[fit_rows], list(targets[:, fit_rows]), params)
    X_est = dataset.X[est_rows]
    forests = [fc.repopulate(f, X_est, targets[j, est_rows]) for j, f in enumerate(grown)]
    return OrderedForestModel(forests=forests, inference_ready=True, fit_rows=fit_rows,
                              est_rows=est_rows, est_outcomes=targets[:, est_rows], **common)


def _as_matrix(model, X) -> np.ndarray:
    if isinstance(X, Dataset):
        if X.col_names != model.train_meta.col_names:
            raise ColumnMismatch("dataset columns differ from the training columns")
        X = X.X
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.p:
        raise ColumnMismatch(f"expected {model.p} columns, got {X.shape[1]}")
    return X


def member_predictions(model: OrderedForestModel, X, oob: bool = False) -> np.ndarray:
    """(n, K) raw predictions of the K member forests."""
    X = _as_matrix(model, X)
    if oob:
        if model.inference_ready:
            raise ValueError("out-of-bag predictions are not available for inference models")
        if X.shape[0] != model.n_train:
            raise ValueError("out-of-bag predictions need the full training matrix")
        return np.column_stack([fc.predict_oob(f, X) for f in model.forests])
    return np.column_stack([fc.predict(f, X) for f in model.forests])


def predict_proba(model: OrderedForestModel, X, oob: bool = False) -> np.ndarray:
    """Class probabilities, shape (n, M); rows are nonnegative and sum to one.

    With ``oob=True`` ``X`` must be the training matrix and each row is
    predicted only by trees that did not use it.
    """
    Y = member_predictions(model, X, oob=oob)
    if model.variant == "ordered":
        return cumulative_to_probs(Y)
    return _normalise(np.maximum(Y, 0.0))
