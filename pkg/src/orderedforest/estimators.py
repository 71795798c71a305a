"""Named estimators with a common ``f(train, X_test, seed) -> P`` interface.

Used by the simulation runner and cross-validation so that every method is
trained and scored the same way.
"""

from __future__ import annotations

from dataclasses import replace

from . import ordered
from .forest import ForestParams
from .ologit import fit_ologit, predict_proba_ologit

NAMES = ("ologit", "ordered", "ordered_honest", "multinomial", "multinomial_honest")


def make_estimator(name: str, params: ForestParams | None = None, max_iter: int = 25):
    """Callable ``f(train: Dataset, X_test, seed) -> (n_test, M)`` probabilities.

    ``params`` sets the forest tuning; its ``honest`` and ``seed`` fields are
    overridden by the estimator name and the call's seed.
    """
    if name not in NAMES:
        raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(NAMES)}")
    if name == "ologit":
        def fit_predict(train, X_test, seed):
            model = fit_ologit(train, max_iter=max_iter)
            return predict_proba_ologit(model, X_test)
        fit_predict.__name__ = name
        return fit_predict

    variant, _, honest = name.partition("_")
    base = params or ForestParams()

    def fit_predict(train, X_test, seed):
        p = replace(base, honest=bool(honest), seed=int(seed))
        model = ordered.fit(train, p, variant=variant)
        return model.predict_proba(X_test)
    fit_predict.__name__ = name
    return fit_predict


def make_estimators(names, params: ForestParams | None = None) -> dict:
    return {n: make_estimator(n, params) for n in names}
