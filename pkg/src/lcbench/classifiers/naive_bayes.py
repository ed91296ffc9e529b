"""Gaussian naive Bayes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Classifier, check_dataset, floats


@dataclass(frozen=True)
class NaiveBayesConfig:
    var_floor: float = 1e-9
    threshold: float = 0.5


class NaiveBayesModel(Classifier):
    kind = "NB"

    def __init__(self, priors, means, variances, n_features, scaler=None, threshold=0.5):
        super().__init__(n_features, scaler, threshold)
        self.priors = np.asarray(priors, dtype=float)
        self.means = np.asarray(means, dtype=float).reshape(2, -1)
        self.variances = np.asarray(variances, dtype=float).reshape(2, -1)

    def log_joint(self, Z) -> np.ndarray:
        """log p(class) + sum_j log N(x_j; mu, sigma^2), shape (n, 2)."""
        out = np.empty((len(Z), 2))
        for k in (0, 1):
            var = self.variances[k]
            ll = -0.5 * (np.log(2.0 * np.pi * var) + (Z - self.means[k]) ** 2 / var)
            out[:, k] = np.log(self.priors[k]) + ll.sum(axis=1)
        return out

    def _score(self, Z):
        lj = self.log_joint(Z)
        # posterior of class 1 = 1 / (1 + exp(lj0 - lj1))
        d = lj[:, 0] - lj[:, 1]
        return np.exp(-np.logaddexp(0.0, d))

    def _params(self):
        return {"priors": floats(self.priors), "means": floats(self.means), "variances": floats(self.variances)}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["priors"], params["means"], params["variances"], n_features, scaler, threshold)


def train_nb(X, y, config: NaiveBayesConfig = NaiveBayesConfig()) -> NaiveBayesModel:
    X, y = check_dataset(X, y)
    priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    means = np.vstack([X[y == k].mean(axis=0) for k in (0, 1)])
    variances = np.vstack([np.maximum(X[y == k].var(axis=0), config.var_floor) for k in (0, 1)])
    return NaiveBayesModel(priors, means, variances, X.shape[1], None, config.threshold)
