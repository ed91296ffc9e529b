"""CART classification tree with Gini impurity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import Classifier, check_dataset, floats


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int = 8
    min_leaf: int = 5
    min_impurity_decrease: float = 1e-4
    threshold: float = 0.5


def gini(n0, n1):
    n = n0 + n1
    return 1.0 - (n0 * n0 + n1 * n1) / (n * n)


def best_split(X, y, min_leaf: int):
    """Lowest weighted Gini split ``x[:, j] <= t``; ties go to the lower feature, then lower t.

    Thresholds are midpoints between consecutive distinct sorted values and
    both sides keep at least ``min_leaf`` rows. Returns (feature, threshold,
    weighted impurity) or None.
    """
    n = len(y)
    best = None
    if n < 2:
        return None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        c1 = np.cumsum(y[order])[:-1].astype(float)
        nl = np.arange(1, n, dtype=float)
        nr = n - nl
        c0 = nl - c1
        r1 = float(y.sum()) - c1
        r0 = nr - r1
        valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            weighted = (nl - (c0 * c0 + c1 * c1) / nl + nr - (r0 * r0 + r1 * r1) / nr) / n
        weighted = np.where(valid, weighted, np.inf)
        i = int(np.argmin(weighted))
        if best is None or weighted[i] < best[2]:
            best = (j, 0.5 * (xs[i] + xs[i + 1]), float(weighted[i]))
    return best


class TreeModel(Classifier):
    """Nodes stored as flat arrays; ``feature == -1`` marks a leaf."""

    kind = "DT"

    def __init__(self, feature, threshold_at, left, right, value, n_features, scaler=None, threshold=0.5):
        super().__init__(n_features, scaler, threshold)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold_at = np.asarray(threshold_at, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def depth(self) -> int:
        def d(k):
            return 0 if self.feature[k] < 0 else 1 + max(d(self.left[k]), d(self.right[k]))
        return d(0)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, Z) -> np.ndarray:
        node = np.zeros(len(Z), dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = Z[rows, f[rows]] <= self.threshold_at[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def _score(self, Z):
        return self.value[self.apply(Z)]

    def _params(self):
        return {"feature": self.feature.tolist(), "threshold": floats(self.threshold_at),
                "left": self.left.tolist(), "right": self.right.tolist(), "value": floats(self.value)}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["feature"], params["threshold"], params["left"], params["right"], params["value"],
                   n_features, scaler, threshold)


def train_tree(X, y, config: TreeConfig = TreeConfig()) -> TreeModel:
    X, y = check_dataset(X, y, both_classes=False)
    N = len(y)
    feature, thr, left, right, value = [], [], [], [], []

    def grow(rows, depth):
        k = len(feature)
        n1 = int(y[rows].sum())
        n = len(rows)
        feature.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(n1 / n)
        if depth >= config.max_depth or n1 == 0 or n1 == n or n < 2 * config.min_leaf:
            return k
        split = best_split(X[rows], y[rows], config.min_leaf)
        if split is None:
            return k
        j, t, weighted = split
        decrease = n / N * (gini(n - n1, n1) - weighted)
        if decrease <= 0 or decrease < config.min_impurity_decrease:
            return k
        mask = X[rows, j] <= t
        feature[k], thr[k] = j, t
        left[k] = grow(rows[mask], depth + 1)
        right[k] = grow(rows[~mask], depth + 1)
        return k

    grow(np.arange(N), 0)
    return TreeModel(feature, thr, left, right, value, X.shape[1], None, config.threshold)
