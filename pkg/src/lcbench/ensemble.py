"""Bagging rules and stacking meta-learners over the six base classifiers."""

from __future__ import annotations

import json

import numpy as np

from .classifiers import BASE_KINDS, Classifier, default_config, model_from_dict, train_classifier

BAGGING_KINDS = ("max", "min", "mean", "mean*")
STACKING_KINDS = tuple(f"stack-{k}" for k in BASE_KINDS)
ENSEMBLE_KINDS = BAGGING_KINDS + STACKING_KINDS


def bag_predict(kind: str, votes, weights=None, rng=None) -> np.ndarray:
    """Aggregate 0/1 base predictions; ``votes`` is (n, 6) or a single row of 6.

    max is OR, min is AND, mean is a majority with a fair coin on ties and
    mean* is 1 iff the weighted vote exceeds one half (an exact half gives 0).
    """
    b = np.asarray(votes)
    single = b.ndim == 1
    b = np.atleast_2d(b).astype(np.int64)
    if kind == "max":
        out = b.max(axis=1)
    elif kind == "min":
        out = b.min(axis=1)
    elif kind == "mean":
        k = b.shape[1]
        s = b.sum(axis=1)
        out = (2 * s > k).astype(np.int64)
        tie = 2 * s == k
        if tie.any():
            if rng is None:
                raise ValueError("majority vote needs a random generator to break ties")
            out[tie] = rng.integers(0, 2, size=int(tie.sum()))
    elif kind == "mean*":
        w = np.asarray(weights, dtype=float)
        out = (b @ w > 0.5).astype(np.int64)
    else:
        raise ValueError(f"unknown bagging rule {kind!r}")
    return out[0] if single else out


def accuracy_weights(train_errors) -> np.ndarray:
    """w_i proportional to 1 - training error, normalized to sum to one."""
    acc = np.clip(1.0 - np.asarray(train_errors, dtype=float), 0.0, None)
    if acc.sum() <= 0:
        return np.full(len(acc), 1.0 / len(acc))
    return acc / acc.sum()


def train_bases(X, y, configs: dict | None = None) -> list[Classifier]:
    configs = configs or {}
    return [train_classifier(k, X, y, configs.get(k)) for k in BASE_KINDS]


def base_votes(bases, X) -> np.ndarray:
    return np.column_stack([m.predict(X) for m in bases])


class BaggingModel:
    def __init__(self, kind: str, bases, weights=None, seed: int = 0):
        if kind not in BAGGING_KINDS:
            raise ValueError(f"unknown bagging rule {kind!r}")
        if len(bases) != len(BASE_KINDS):
            raise ValueError("an ensemble holds exactly six base models")
        self.kind = kind
        self.bases = list(bases)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.seed = int(seed)

    @property
    def n_features(self) -> int:
        return self.bases[0].n_features

    def score(self, X) -> np.ndarray:
        b = base_votes(self.bases, X)
        if self.kind == "max":
            return b.max(axis=1).astype(float)
        if self.kind == "min":
            return b.min(axis=1).astype(float)
        if self.kind == "mean":
            return b.mean(axis=1)
        return b @ self.weights

    def predict(self, X, rng=None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(self.seed)
        return bag_predict(self.kind, base_votes(self.bases, X), self.weights, rng)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed,
                "weights": None if self.weights is None else self.weights.tolist(),
                "bases": [m.to_dict() for m in self.bases]}


class StackingModel:
    """Meta classifier over the features augmented with the six base predictions."""

    def __init__(self, meta_kind: str, bases, meta: Classifier):
        self.kind = f"stack-{meta_kind}"
        self.meta_kind = meta_kind
        self.bases = list(bases)
        self.meta = meta

    @property
    def n_features(self) -> int:
        return self.bases[0].n_features

    def augment(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.hstack((X, base_votes(self.bases, X)))

    def score(self, X) -> np.ndarray:
        return self.meta.score(self.augment(X))

    def predict(self, X, rng=None) -> np.ndarray:
        return self.meta.predict(self.augment(X))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "meta": self.meta.to_dict(), "bases": [m.to_dict() for m in self.bases]}


def train_bagging(kind: str, X, y, bases=None, seed: int = 0, configs: dict | None = None) -> BaggingModel:
    bases = bases if bases is not None else train_bases(X, y, configs)
    weights = None
    if kind == "mean*":
        y = np.asarray(y)
        weights = accuracy_weights([np.mean(m.predict(X) != y) for m in bases])
    return BaggingModel(kind, bases, weights, seed)


def train_stacking(meta_kind: str, X, y, bases=None, configs: dict | None = None, meta_config=None) -> StackingModel:
    """Two-step fit on one training split: the bases, then the meta model on [X | base predictions].

    The meta model sees base predictions on the very rows the bases were
    trained on, so an overfitting base looks better to it than it is.
    """
    if meta_kind.startswith("stack-"):
        meta_kind = meta_kind[len("stack-"):]
    bases = bases if bases is not None else train_bases(X, y, configs)
    aug = np.hstack((np.asarray(X, dtype=float), base_votes(bases, X)))
    cfg = meta_config if meta_config is not None else (configs or {}).get(meta_kind, default_config(meta_kind))
    return StackingModel(meta_kind, bases, train_classifier(meta_kind, aug, y, cfg))


def train_ensemble(kind: str, X, y, bases=None, seed: int = 0, configs: dict | None = None):
    if kind in BAGGING_KINDS:
        return train_bagging(kind, X, y, bases, seed, configs)
    if kind in STACKING_KINDS:
        return train_stacking(kind, X, y, bases, configs)
    raise ValueError(f"unknown ensemble {kind!r}")


def ensemble_from_dict(d: dict):
    bases = [model_from_dict(m) for m in d["bases"]]
    if d["kind"] in BAGGING_KINDS:
        return BaggingModel(d["kind"], bases, d.get("weights"), d.get("seed", 0))
    return StackingModel(d["kind"][len("stack-"):], bases, model_from_dict(d["meta"]))


def dumps_ensemble(model) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def error_correlation(predictions: dict, y) -> tuple[list[str], np.ndarray]:
    """Pearson correlation of per-sample error indicators [prediction != y].

    Entries involving a model whose errors do not vary are NaN.
    """
    y = np.asarray(y)
    if len(y) < 2:
        raise ValueError("need at least two test samples")
    names = list(predictions)
    E = np.column_stack([(np.asarray(predictions[k]) != y).astype(float) for k in names])
    k = len(names)
    C = np.full((k, k), np.nan)
    sd = E.std(axis=0)
    D = E - E.mean(axis=0)
    for i in range(k):
        for j in range(k):
            if sd[i] > 0 and sd[j] > 0:
                C[i, j] = float(D[:, i] @ D[:, j] / (len(y) * sd[i] * sd[j]))
        C[i, i] = 1.0
    return names, C


def mean_off_diagonal(C) -> float:
    k = len(C)
    off = C[~np.eye(k, dtype=bool)]
    off = off[np.isfinite(off)]
    return float(off.mean()) if len(off) else float("nan")
