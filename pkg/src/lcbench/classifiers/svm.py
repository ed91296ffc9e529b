"""Linear soft-margin SVM trained by epoch-ordered sub-gradient descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import Classifier, Standardizer, check_dataset, floats, sigmoid
from .logistic import fit_coefficients


@dataclass(frozen=True)
class SvmConfig:
    C: float = 1.0
    epochs: int = 200
    threshold: float = 0.5


@njit(cache=True)
def _epoch(Z, s, w, b, lam, t0):
    """One pass in row order of w <- (1 - eta*lam) w + eta*s_i*z_i (on margin violations), eta = 1/(lam*t)."""
    n, p = Z.shape
    t = t0
    radius = 1.0 / np.sqrt(lam)
    for i in range(n):
        t += 1
        eta = 1.0 / (lam * t)
        m = b
        for j in range(p):
            m += w[j] * Z[i, j]
        shrink = 1.0 - eta * lam
        for j in range(p):
            w[j] *= shrink
        if s[i] * m < 1.0:
            for j in range(p):
                w[j] += eta * s[i] * Z[i, j]
        norm = 0.0
        for j in range(p):
            norm += w[j] * w[j]
        norm = np.sqrt(norm)
        if norm > radius:
            for j in range(p):
                w[j] *= radius / norm
    return t


def hinge_sum(m, s, b) -> float:
    return float(np.maximum(0.0, 1.0 - s * (m + b)).sum())


def optimal_bias(m, s) -> float:
    """Exact minimizer over b of sum_i max(0, 1 - s_i (m_i + b)); the middle of a flat optimum."""
    # positives contribute max(0, k - b) with k = 1 - m, negatives max(0, b - q) with q = -1 - m
    k = np.sort(1.0 - m[s > 0])
    q = np.sort(-1.0 - m[s < 0])
    cands = np.unique(np.concatenate((k, q)))
    ck = np.concatenate(([0.0], np.cumsum(k)))
    cq = np.concatenate(([0.0], np.cumsum(q)))
    ik = np.searchsorted(k, cands, side="right")  # positives with k <= b contribute 0
    iq = np.searchsorted(q, cands, side="left")   # negatives with q < b contribute b - q
    pos = (ck[-1] - ck[ik]) - (len(k) - ik) * cands
    neg = iq * cands - cq[iq]
    total = pos + neg
    best = total.min()
    flat = cands[total <= best + 1e-12 * max(1.0, abs(best))]
    return float(0.5 * (flat[0] + flat[-1]))


class SvmModel(Classifier):
    """Decides by the sign of w.z + b; the score is a Platt sigmoid of that margin."""

    kind = "SVM"

    def __init__(self, w, b, platt, n_features, scaler=None, threshold=0.5, C=1.0):
        super().__init__(n_features, scaler, threshold)
        self.w = np.asarray(w, dtype=float)
        self.b = float(b)
        self.platt = np.asarray(platt, dtype=float)
        self.C = float(C)

    def margin(self, X) -> np.ndarray:
        return self._prepare(X) @ self.w + self.b

    def _score(self, Z):
        return sigmoid(self.platt[0] + self.platt[1] * (Z @ self.w + self.b))

    def predict(self, X) -> np.ndarray:
        return (self.margin(X) > 0).astype(np.int64)

    def objective(self, X, y) -> float:
        """0.5 |w|^2 + C * sum of hinge losses, in the standardized feature space."""
        s = 2.0 * np.asarray(y) - 1.0
        return 0.5 * float(self.w @ self.w) + self.C * hinge_sum(self._prepare(X) @ self.w, s, self.b)

    def _params(self):
        return {"w": floats(self.w), "b": self.b, "platt": floats(self.platt), "C": self.C}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["w"], params["b"], params["platt"], n_features, scaler, threshold, params["C"])


def _platt(m, y):
    """Logistic fit of the labels on the margin with Platt's smoothed targets."""
    n1 = float(y.sum())
    n0 = len(y) - n1
    target = np.where(y == 1, (n1 + 1.0) / (n1 + 2.0), 1.0 / (n0 + 2.0))
    coef, _, _, _ = fit_coefficients(m[:, None], target)
    return coef


def train_svm(X, y, config: SvmConfig = SvmConfig()) -> SvmModel:
    X, y = check_dataset(X, y, both_classes=False)
    n, p = X.shape
    scaler = Standardizer.fit(X)
    if len(np.unique(y)) < 2:
        c = 1.0 if y[0] == 1 else -1.0
        return SvmModel(np.zeros(p), c, [20.0 * c, 0.0], p, scaler, config.threshold, config.C)
    Z = np.ascontiguousarray(scaler.transform(X))
    s = 2.0 * y - 1.0
    lam = 1.0 / (config.C * n)
    w = np.zeros(p)
    b = 0.0
    t = 0
    avg = np.zeros(p)
    n_avg = 0
    half = config.epochs // 2
    for epoch in range(config.epochs):
        t = _epoch(Z, s, w, b, lam, t)
        b = optimal_bias(Z @ w, s)
        if epoch >= half:
            avg += w
            n_avg += 1

    def objective(wv, bv):
        return 0.5 * float(wv @ wv) + config.C * hinge_sum(Z @ wv, s, bv)

    best_w, best_b = w.copy(), b
    if n_avg:
        wa = avg / n_avg
        ba = optimal_bias(Z @ wa, s)
        if objective(wa, ba) < objective(best_w, best_b):
            best_w, best_b = wa, ba
    platt = _platt(Z @ best_w + best_b, y)
    return SvmModel(best_w, best_b, platt, p, scaler, config.threshold, config.C)
