"""Fit an Ordered Forest on simulated survey-style data and read off effects."""

import numpy as np

import orderedforest as of

rng = np.random.default_rng(0)
n = 800

# income (continuous), a treatment dummy and a 1-5 rating that does nothing
income = rng.normal(size=n)
treated = rng.integers(0, 2, size=n).astype(float)
rating = rng.integers(1, 6, size=n).astype(float)
latent = 1.2 * income + 0.8 * treated + rng.logistic(size=n)
satisfaction = 1 + np.searchsorted([-1.0, 0.5, 2.0], latent)  # four ordered levels

X = np.column_stack([income, treated, rating])
data = of.Dataset(X, satisfaction, ("income", "treated", "rating"),
                  np.array([False, False, True]), M=4)
print("class shares:", np.bincount(data.y)[1:] / n)

# honest forest with inference support; 2000 trees keeps the standard errors stable
params = of.ForestParams(n_trees=2000, honest=True, seed=1)
model = of.fit(data, params, inference=True)

P = model.predict_proba(X[:5])
print("first five rows of class probabilities:")
print(np.round(P, 3))
print("rows sum to one:", np.allclose(P.sum(axis=1), 1.0))

# effects at the covariate means, with weight-based standard errors
table = of.marginal_effects(model, data, "at_mean", with_inference=True)
print(table.format())

# the same quantities from the parametric baseline
logit = of.fit_ologit(data)
print("ordered logit beta:", np.round(logit.beta, 3), "thresholds:", np.round(logit.alpha, 3))
print(of.ologit_marginal_effects(logit, data, "at_mean").format())
