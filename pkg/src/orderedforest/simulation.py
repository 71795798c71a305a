"""Simulated ordered-outcome designs and a replication runner.

Every design is a latent ordered logit ``Y* = g(X) + u`` with standard
logistic ``u`` and 15 relevant covariates. Four switches alter it: extra
zero-effect covariates (``noise``), a sine index (``nonlinear``), correlated
relevant covariates (``multicollinear``) and randomly placed thresholds
(``random_thresholds``). Crossed with 3, 6 or 9 classes and a low- or
high-dimensional covariate set this gives 72 designs.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import ClassTooSmall, DegenerateDraw, NonPositiveDefinite, NotConverged
from .metrics import mse, rps

N_RELEVANT = 15
N_NOISE_NORMAL = 10
N_NOISE_BINARY = 5
N_HIGH_DIM = 1000
RHO = 0.8
CLASS_COUNTS = (3, 6, 9)
FLAGS = ("noise", "nonlinear", "multicollinear", "random_thresholds")
MAX_REDRAWS = 10

#: effect sizes of the 15 relevant covariates
BETA = np.repeat([1.0, 0.75, 0.5], 5)

# stream tags for the per-design random streams
_CALIBRATION_STREAM = 101
_QUANTILE_STREAM = 102


@dataclass(frozen=True)
class DgpConfig:
    """One simulation design.

    ``thresholds`` is ``None`` until :func:`calibrate_thresholds` has run.
    ``beta_scale`` multiplies every coefficient; it exists for checks with
    a null index and is 1 for all enumerated designs.
    """

    n_classes: int
    high_dim: bool = False
    noise: bool = False
    nonlinear: bool = False
    multicollinear: bool = False
    random_thresholds: bool = False
    seed: int = 0
    calibration_n: int = 1_000_000
    thresholds: tuple | None = None
    dgp_id: int | None = None
    beta_scale: float = 1.0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("a design needs at least 2 classes")
        if self.high_dim and not self.noise:
            object.__setattr__(self, "noise", True)
        if self.thresholds is not None:
            t = tuple(float(v) for v in self.thresholds)
            if len(t) != self.n_classes - 1 or np.any(np.diff(t) <= 0):
                raise ValueError("thresholds must be n_classes - 1 strictly increasing values")
            object.__setattr__(self, "thresholds", t)

    @property
    def n_covariates(self) -> int:
        p = N_RELEVANT
        if self.noise:
            p += N_NOISE_NORMAL + N_NOISE_BINARY
        if self.high_dim:
            p += N_HIGH_DIM
        return p

    @property
    def name(self) -> str:
        on = [getattr(self, f) for f in FLAGS]
        suffix = "-high" if self.high_dim else ""
        if not any(on[1:]) and (self.high_dim or not self.noise):
            return f"simple{self.n_classes}{suffix}"
        if all(on):
            return f"complex{self.n_classes}{suffix}"
        return f"dgp{self.dgp_id}" if self.dgp_id is not None else "custom"

    def flags(self) -> dict:
        return {f: getattr(self, f) for f in FLAGS}

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DgpConfig":
        doc = json.loads(text)
        if doc.get("thresholds") is not None:
            doc["thresholds"] = tuple(doc["thresholds"])
        return cls(**doc)


def enumerate_dgps() -> list[DgpConfig]:
    """All 72 designs, numbered 1..72.

    Low-dimensional designs come first, 16 per class count, ordered by the
    number of active switches and then by switch order (``noise``,
    ``nonlinear``, ``multicollinear``, ``random_thresholds``); the 24
    high-dimensional ones follow with ``noise`` always on.
    """
    out = []
    for M in CLASS_COUNTS:
        for flags in _flag_sets(FLAGS):
            out.append(DgpConfig(n_classes=M, **flags))
    for M in CLASS_COUNTS:
        for flags in _flag_sets(FLAGS[1:]):
            out.append(DgpConfig(n_classes=M, high_dim=True, noise=True, **flags))
    return [replace(c, dgp_id=i + 1, seed=i + 1) for i, c in enumerate(out)]


def _flag_sets(names):
    for r in range(len(names) + 1):
        for on in itertools.combinations(names, r):
            yield {n: (n in on) for n in names}


def get_dgp(key) -> DgpConfig:
    """Design by id (1..72, int or digit string) or name such as ``"complex9"``."""
    configs = enumerate_dgps()
    if isinstance(key, (int, np.integer)) or (isinstance(key, str) and key.isdigit()):
        i = int(key)
        if not 1 <= i <= len(configs):
            raise ValueError(f"design ids run from 1 to {len(configs)}")
        return configs[i - 1]
    for c in configs:
        if c.name == key:
            return c
    raise ValueError(f"unknown design {key!r}")


def covariance(config: DgpConfig) -> np.ndarray:
    """Covariance of the relevant covariates: identity or a 0.8 block on the odd ones."""
    S = np.eye(N_RELEVANT)
    if config.multicollinear:
        odd = np.arange(0, N_RELEVANT, 2)  # X1, X3, ..., X15
        S[np.ix_(odd, odd)] = RHO
        S[odd, odd] = 1.0
    return S


def _factor(S):
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise NonPositiveDefinite("covariate covariance is not positive definite") from None


def _relevant(n, config, rng):
    Z = rng.standard_normal((n, N_RELEVANT))
    if config.multicollinear:
        Z = Z @ _factor(covariance(config)).T
    return Z


def draw_covariates(n: int, config: DgpConfig, rng) -> np.ndarray:
    """Covariate matrix of one draw, shape (n, config.n_covariates).

    Columns 1-15 are normal with :func:`covariance`; with ``noise``, 10
    standard normals and 5 Bernoulli(0.5) dummies follow; high-dimensional
    designs append 1000 more standard normals.
    """
    blocks = [_relevant(n, config, rng)]
    if config.noise:
        blocks.append(rng.standard_normal((n, N_NOISE_NORMAL)))
        blocks.append((rng.random((n, N_NOISE_BINARY)) < 0.5).astype(np.float64))
    if config.high_dim:
        blocks.append(rng.standard_normal((n, N_HIGH_DIM)))
    return np.hstack(blocks)


def dgp_index(x, config: DgpConfig) -> np.ndarray:
    """Latent index ``g(x)`` from the first 15 columns.

    Linear: ``sum_j beta_j x_j``; nonlinear: ``sum_j beta_j sin(2 x_j)``.
    """
    x = np.asarray(x, dtype=np.float64)
    rel = x[..., :N_RELEVANT]
    if config.nonlinear:
        rel = np.sin(2.0 * rel)
    return rel @ (BETA * config.beta_scale)


def quantile_levels(config: DgpConfig) -> np.ndarray:
    """Cumulative class shares the thresholds are calibrated to."""
    M = config.n_classes
    if not config.random_thresholds:
        return np.arange(1, M) / M
    rng = np.random.default_rng([config.seed, _QUANTILE_STREAM])
    return np.sort(rng.random(M - 1))


def calibrate_thresholds(config: DgpConfig, rng=None) -> DgpConfig:
    """Copy of ``config`` with thresholds at quantiles of a large latent sample.

    Draws ``calibration_n`` values of ``g(X) + u`` and takes their empirical
    quantiles at :func:`quantile_levels`. Only the 15 relevant covariates
    are drawn since the others do not enter ``g``. ``rng`` defaults to a
    stream fixed by the design seed.
    """
    if rng is None:
        rng = np.random.default_rng([config.seed, _CALIBRATION_STREAM])
    latent = np.empty(config.calibration_n)
    chunk = 200_000
    for lo in range(0, config.calibration_n, chunk):
        n = min(chunk, config.calibration_n - lo)
        latent[lo:lo + n] = dgp_index(_relevant(n, config, rng), config) + rng.logistic(size=n)
    t = np.quantile(latent, quantile_levels(config))
    for m in range(1, len(t)):
        # ties can only arise from duplicated random levels
        t[m] = max(t[m], np.nextafter(t[m - 1], np.inf))
    return replace(config, thresholds=tuple(t))


def true_probabilities(x, config: DgpConfig) -> np.ndarray:
    """``F(alpha_m - g) - F(alpha_{m-1} - g)`` for every row, shape (n, M)."""
    g = np.atleast_1d(dgp_index(x, config))
    cdf = expit(np.asarray(config.thresholds)[None, :] - g[:, None])
    n = g.shape[0]
    return np.diff(np.hstack([np.zeros((n, 1)), cdf, np.ones((n, 1))]), axis=1)


def _classes(x, config, rng):
    latent = dgp_index(x, config) + rng.logistic(size=x.shape[0])
    return 1 + np.searchsorted(np.asarray(config.thresholds), latent, side="left")


@dataclass(frozen=True)
class SimSample:
    train: Dataset
    test: Dataset
    true_probs_test: np.ndarray
    true_probs_train: np.ndarray = field(repr=False, default=None)
    degenerate: bool = False
    redraws: int = 0


def _dataset(X, y, M):
    names = tuple(f"X{j + 1}" for j in range(X.shape[1]))
    return Dataset(X, y, names, np.zeros(X.shape[1], dtype=bool), M)


def draw_sample(config: DgpConfig, n_train: int = 200, n_test: int = 10_000, rng=None,
                on_degenerate: str = "raise") -> SimSample:
    """Training and test draws with the test set's true class probabilities.

    A training draw missing a class is redrawn, up to 10 times. After that
    ``on_degenerate="raise"`` raises :class:`DegenerateDraw` while ``"flag"``
    returns the last draw with ``degenerate=True``.
    """
    if config.thresholds is None:
        raise ValueError("calibrate the design's thresholds first")
    if on_degenerate not in ("raise", "flag"):
        raise ValueError("on_degenerate must be 'raise' or 'flag'")
    rng = np.random.default_rng() if rng is None else rng
    M = config.n_classes
    for redraws in range(MAX_REDRAWS + 1):
        X = draw_covariates(n_train, config, rng)
        y = _classes(X, config, rng)
        if np.unique(y).size == M:
            break
    degenerate = np.unique(y).size < M
    if degenerate and on_degenerate == "raise":
        raise DegenerateDraw(f"training draw missed a class after {MAX_REDRAWS} redraws")
    X_test = draw_covariates(n_test, config, rng)
    y_test = _classes(X_test, config, rng)
    return SimSample(_dataset(X, y, M), _dataset(X_test, y_test, M),
                     true_probabilities(X_test, config), true_probabilities(X, config),
                     degenerate, redraws)


@dataclass(frozen=True)
class ResultRow:
    dgp_id: int | None
    design: str
    estimator: str
    metric: str
    mean: float
    sd: float
    reps: int
    not_converged: int = 0
    degenerate: int = 0


@dataclass(frozen=True)
class ExperimentResults:
    rows: tuple
    scores: dict = field(repr=False)  # (design, estimator) -> {"rps": array, "mse": array}

    def get(self, design: str, estimator: str, metric: str = "rps") -> ResultRow:
        for r in self.rows:
            if r.design == design and r.estimator == estimator and r.metric == metric:
                return r
        raise KeyError((design, estimator, metric))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dgp_id", "design", "estimator", "metric", "mean", "sd", "reps",
                    "not_converged", "degenerate"])
        for r in self.rows:
            w.writerow(["" if r.dgp_id is None else r.dgp_id, r.design, r.estimator, r.metric,
                        repr(r.mean), repr(r.sd), r.reps, r.not_converged, r.degenerate])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def run_experiment(configs, estimators: dict, R: int = 100, n_train: int = 200,
                   n_test: int = 10_000, seed: int = 0, progress=None) -> ExperimentResults:
    """Score estimators over ``R`` fresh train/test draws of each design.

    Parameters
    ----------
    configs : iterable of DgpConfig
        Uncalibrated designs are calibrated first; thresholds then stay
        fixed across replications.
    estimators : dict
        Name to callable ``f(train: Dataset, X_test, seed) -> P``. The name
        ``"ologit"`` is skipped for high-dimensional designs.
    R : int
        Replications. Replication ``r`` of a design draws from
        ``default_rng([design seed, seed, r])``; every estimator gets the
        same draw and the same fitting seed.
    progress : callable, optional
        Called as ``progress(design, r)`` after each replication.

    Returns
    -------
    ExperimentResults
        Mean and sd (ddof=1) over replications of the test-set ARPS and
        AMSE against the true probabilities.
    """
    rows = []
    scores = {}
    for config in configs:
        if config.thresholds is None:
            config = calibrate_thresholds(config)
        names = [n for n in estimators if not (config.high_dim and n == "ologit")]
        acc = {n: {"rps": np.empty(R), "mse": np.empty(R)} for n in names}
        not_conv = dict.fromkeys(names, 0)
        degenerate = 0
        for r in range(R):
            rng = np.random.default_rng([config.seed, seed, r])
            sample = draw_sample(config, n_train, n_test, rng, on_degenerate="flag")
            degenerate += sample.degenerate
            fit_seed = int(rng.integers(2 ** 31))
            for n in names:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always", NotConverged)
                    warnings.simplefilter("ignore", ClassTooSmall)
                    P = estimators[n](sample.train, sample.test.X, fit_seed)
                not_conv[n] += any(issubclass(w.category, NotConverged) for w in caught)
                acc[n]["rps"][r] = rps(sample.true_probs_test, P).mean()
                acc[n]["mse"][r] = mse(sample.true_probs_test, P).mean()
            if progress is not None:
                progress(config, r)
        for n in names:
            scores[(config.name, n)] = acc[n]
            for metric in ("rps", "mse"):
                v = acc[n][metric]
                rows.append(ResultRow(config.dgp_id, config.name, n, metric, float(v.mean()),
                                      float(v.std(ddof=1)) if R > 1 else 0.0, R,
                                      not_conv[n], degenerate))
    return ExperimentResults(tuple(rows), scores)
