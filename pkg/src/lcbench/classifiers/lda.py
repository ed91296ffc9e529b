"""Two-class linear discriminant analysis with a pooled covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Classifier, DatasetError, check_dataset, floats, sigmoid


@dataclass(frozen=True)
class LdaConfig:
    jitter: float = 1e-8
    threshold: float = 0.5


class LdaModel(Classifier):
    """D(x) = w.x + w0; lane change iff D > 0. The score is the Gaussian posterior sigmoid(D)."""

    kind = "LDA"

    def __init__(self, w, w0, n_features, scaler=None, threshold=0.5):
        super().__init__(n_features, scaler, threshold)
        self.w = np.asarray(w, dtype=float)
        self.w0 = float(w0)

    def discriminant(self, X) -> np.ndarray:
        Z = self._prepare(X)
        return Z @ self.w + self.w0

    def _score(self, Z):
        return sigmoid(Z @ self.w + self.w0)

    def _params(self):
        return {"w": floats(self.w), "w0": self.w0}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["w"], params["w0"], n_features, scaler, threshold)


def pooled_covariance(X, y) -> np.ndarray:
    n = len(y)
    S = np.zeros((X.shape[1], X.shape[1]))
    for k in (0, 1):
        D = X[y == k] - X[y == k].mean(axis=0)
        S += D.T @ D
    return S / max(n - 2, 1)


def train_lda(X, y, config: LdaConfig = LdaConfig()) -> LdaModel:
    X, y = check_dataset(X, y)
    p = X.shape[1]
    mu0, mu1 = X[y == 0].mean(axis=0), X[y == 1].mean(axis=0)
    S = pooled_covariance(X, y)
    # features without within-class spread carry no usable direction here
    # (constant stacking columns, for instance) and are left out
    scale = np.maximum(1.0, np.abs(X).max(axis=0))
    keep = np.diag(S) > 1e-12 * scale ** 2
    w = np.zeros(p)
    if keep.any():
        Sk = S[np.ix_(keep, keep)] + config.jitter * np.eye(int(keep.sum()))
        try:
            w[keep] = np.linalg.solve(Sk, (mu1 - mu0)[keep])
        except np.linalg.LinAlgError as exc:
            raise DatasetError(f"singular pooled covariance over features {np.flatnonzero(keep).tolist()}") from exc
        if not np.all(np.isfinite(w)):
            raise DatasetError(f"singular pooled covariance over features {np.flatnonzero(keep).tolist()}")
    pi1 = y.mean()
    w0 = -0.5 * w @ (mu0 + mu1) + np.log(pi1 / (1.0 - pi1))
    return LdaModel(w, w0, p, None, config.threshold)
