"""Logistic regression fitted by damped Newton steps (IRLS)."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .base import Classifier, Standardizer, check_dataset, floats, sigmoid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogisticConfig:
    ridge: float = 1e-6
    tol: float = 1e-8
    max_iter: int = 100
    standardize: bool = True
    threshold: float = 0.5


def log_likelihood(coef, Z, y) -> float:
    """Bernoulli log-likelihood; ``coef[0]`` is the intercept."""
    eta = coef[0] + Z @ coef[1:]
    # log(1 + e^eta) computed without overflow
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _penalized(coef, Z, y, ridge):
    return log_likelihood(coef, Z, y) - 0.5 * ridge * float(coef[1:] @ coef[1:])


def fit_coefficients(Z, y, ridge=1e-6, tol=1e-8, max_iter=100):
    """Maximize the ridge-penalized log-likelihood (intercept unpenalized).

    Returns (coef, covariance, converged, iterations); ``covariance`` is the
    inverse observed information at the solution.
    """
    n, p = Z.shape
    A = np.hstack((np.ones((n, 1)), Z))
    pen = np.full(p + 1, ridge)
    pen[0] = 0.0
    coef = np.zeros(p + 1)
    obj = _penalized(coef, Z, y, ridge)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = sigmoid(A @ coef)
        grad = A.T @ (y - mu) - pen * coef
        w = mu * (1.0 - mu)
        H = (A * w[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            # singular information: plain gradient ascent step instead
            step = grad / max(1.0, float(np.abs(grad).max()))
        t = 1.0
        while True:
            trial = coef + t * step
            new = _penalized(trial, Z, y, ridge)
            if new >= obj or t < 1e-10:
                break
            t *= 0.5
        change = float(np.max(np.abs(trial - coef)))
        coef, obj = trial, new
        if change < tol:
            converged = True
            break
    mu = sigmoid(A @ coef)
    H = (A * (mu * (1.0 - mu))[:, None]).T @ A + np.diag(pen)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov = np.full((p + 1, p + 1), np.nan)
    return coef, cov, converged, it


class LogisticModel(Classifier):
    kind = "LR"

    def __init__(self, coef, n_features, scaler=None, threshold=0.5, converged=True, covariance=None):
        super().__init__(n_features, scaler, threshold)
        self.coef = np.asarray(coef, dtype=float)
        self.converged = bool(converged)
        self.covariance = covariance

    def _score(self, Z):
        return sigmoid(self.coef[0] + Z @ self.coef[1:])

    def original_coefficients(self) -> np.ndarray:
        """Intercept and slopes on the unstandardized features."""
        slopes = self.coef[1:] / self.scaler.std
        return np.concatenate(([self.coef[0] - slopes @ self.scaler.mean], slopes))

    def _params(self):
        return {"coef": floats(self.coef), "converged": self.converged}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["coef"], n_features, scaler, threshold, params.get("converged", True))


def train_logistic(X, y, config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    X, y = check_dataset(X, y)
    scaler = Standardizer.fit(X) if config.standardize else Standardizer.identity(X.shape[1])
    coef, cov, converged, it = fit_coefficients(scaler.transform(X), y, config.ridge, config.tol, config.max_iter)
    if not converged:
        log.warning("logistic regression stopped after %d iterations without converging", it)
    return LogisticModel(coef, X.shape[1], scaler, config.threshold, converged, cov)
