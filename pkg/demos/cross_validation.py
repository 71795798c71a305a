"""Repeated k-fold cross-validation on a CSV file, as one would on real data."""

import csv
import tempfile
from pathlib import Path

import numpy as np

import orderedforest as of
from orderedforest.estimators import make_estimators
from orderedforest.forest import ForestParams

# write a small CSV so the example is self-contained
rng = np.random.default_rng(3)
n = 300
X = rng.normal(size=(n, 4))
grade = 1 + np.searchsorted([-0.8, 0.8], np.sin(2 * X[:, 0]) + X[:, 1] + rng.logistic(size=n))
path = Path(tempfile.mkdtemp()) / "grades.csv"
with open(path, "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["x1", "x2", "x3", "x4", "grade"])
    w.writerows([[*map(float, x), int(g)] for x, g in zip(X, grade)])

data = of.load_csv(path, "grade")
print(data.N, "rows,", data.p, "covariates,", data.M, "classes")

estimators = make_estimators(["ologit", "ordered"], ForestParams(n_trees=300))
result = of.cross_validate(data, estimators, k=5, repeats=2, seed=0)
for name, stats in result.summary().items():
    (arps, arps_sd), (amse, amse_sd) = stats["arps"], stats["amse"]
    print(f"{name:8s} ARPS {arps:.4f} (sd {arps_sd:.4f})  AMSE {amse:.4f} (sd {amse_sd:.4f})")
print(result.to_csv("grades"))
