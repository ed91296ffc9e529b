"""Shared contract of the binary classifiers: standardization, scoring, serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

FORMAT = "lcbench-model"
FORMAT_VERSION = 1


class DatasetError(ValueError):
    pass


class ArityError(ValueError):
    pass


def check_dataset(X, y, both_classes: bool = True) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DatasetError("feature matrix must be two-dimensional")
    if len(X) != len(y):
        raise DatasetError(f"{len(X)} feature rows but {len(y)} labels")
    if len(X) < 2:
        raise DatasetError("need at least two observations")
    if not np.all(np.isfinite(X)):
        raise DatasetError("non-finite feature values; impute absent neighbours first")
    if not np.all((y == 0) | (y == 1)):
        raise DatasetError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if both_classes and len(np.unique(y)) < 2:
        raise DatasetError("training needs both classes")
    return X, y


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> Standardizer:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        # constant columns pass through centred, unscaled
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
        return cls(mean, std)

    @classmethod
    def identity(cls, p: int) -> Standardizer:
        return cls(np.zeros(p), np.ones(p))

    def transform(self, X) -> np.ndarray:
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> Standardizer:
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Classifier:
    """Base of every trained model.

    Subclasses implement ``_score`` on standardized rows and the parameter
    (de)serialization hooks. ``predict`` is ``score > threshold`` unless a
    subclass decides by a different rule.
    """

    kind = "?"

    def __init__(self, n_features: int, scaler: Standardizer | None = None, threshold: float = 0.5):
        self.n_features = int(n_features)
        self.scaler = scaler or Standardizer.identity(self.n_features)
        self.threshold = float(threshold)

    def _prepare(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ArityError(f"{self.kind} expects {self.n_features} features, got {X.shape[1]}")
        return self.scaler.transform(X)

    def score(self, X) -> np.ndarray:
        return self._score(self._prepare(X))

    def predict(self, X) -> np.ndarray:
        return (self.score(X) > self.threshold).astype(np.int64)

    def _score(self, Z) -> np.ndarray:
        raise NotImplementedError

    def _params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, params: dict, n_features: int, scaler: Standardizer, threshold: float):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "kind": self.kind,
            "n_features": self.n_features,
            "threshold": self.threshold,
            "standardization": self.scaler.to_dict(),
            "params": self._params(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()
