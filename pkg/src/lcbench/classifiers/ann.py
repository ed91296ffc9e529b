"""Feed-forward network with one sigmoid hidden layer, trained by per-sample back-propagation."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import Classifier, Standardizer, check_dataset, floats, sigmoid

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnnConfig:
    hidden: int = 2
    epochs: int = 500
    lr: float = 0.05
    seed: int = 0
    init_scale: float = 0.5
    max_restarts: int = 3
    threshold: float = 0.5
    batch: str = "online"  # "online": per-sample steps in shuffled order; "full": one step per epoch


def unpack(theta, p: int, h: int):
    W1 = theta[: h * p].reshape(h, p)
    b1 = theta[h * p: h * p + h]
    W2 = theta[h * p + h: h * p + 2 * h]
    b2 = theta[h * p + 2 * h]
    return W1, b1, W2, b2


def n_weights(p: int, h: int) -> int:
    return h * p + 2 * h + 1


def forward(theta, Z, h: int):
    W1, b1, W2, b2 = unpack(theta, Z.shape[1], h)
    H = sigmoid(Z @ W1.T + b1)
    return H, sigmoid(H @ W2 + b2)


def loss_and_grad(theta, Z, y, h: int):
    """Mean cross-entropy and its gradient by backpropagation."""
    n, p = Z.shape
    W1, b1, W2, b2 = unpack(theta, p, h)
    A1 = Z @ W1.T + b1
    H = sigmoid(A1)
    a2 = H @ W2 + b2
    # cross-entropy from the logit: log(1 + e^a) - y a
    loss = float(np.mean(np.logaddexp(0.0, a2) - y * a2))
    d2 = (sigmoid(a2) - y) / n
    gW2 = H.T @ d2
    gb2 = d2.sum()
    d1 = np.outer(d2, W2) * H * (1.0 - H)
    gW1 = d1.T @ Z
    gb1 = d1.sum(axis=0)
    return loss, np.concatenate((gW1.ravel(), gb1, gW2, [gb2]))


class AnnModel(Classifier):
    kind = "ANN"

    def __init__(self, theta, hidden, n_features, scaler=None, threshold=0.5, loss=float("nan")):
        super().__init__(n_features, scaler, threshold)
        self.theta = np.asarray(theta, dtype=float)
        self.hidden = int(hidden)
        self.loss = float(loss)

    def _score(self, Z):
        return forward(self.theta, Z, self.hidden)[1]

    def _params(self):
        return {"theta": floats(self.theta), "hidden": self.hidden, "loss": self.loss}

    @classmethod
    def _from_params(cls, params, n_features, scaler, threshold):
        return cls(params["theta"], params["hidden"], n_features, scaler, threshold, params.get("loss", float("nan")))


@njit(cache=True)
def _sgd_epoch(theta, Z, y, order, h, lr):
    """One pass of per-sample cross-entropy gradient steps in the given row order."""
    n, p = Z.shape
    hid = np.empty(h)
    for r in range(n):
        i = order[r]
        a2 = theta[h * p + 2 * h]
        for k in range(h):
            a = theta[h * p + k]
            for j in range(p):
                a += theta[k * p + j] * Z[i, j]
            hid[k] = 1.0 / (1.0 + np.exp(-a))
            a2 += theta[h * p + h + k] * hid[k]
        d2 = 1.0 / (1.0 + np.exp(-a2)) - y[i]
        for k in range(h):
            d1 = d2 * theta[h * p + h + k] * hid[k] * (1.0 - hid[k])
            theta[h * p + h + k] -= lr * d2 * hid[k]
            theta[h * p + k] -= lr * d1
            for j in range(p):
                theta[k * p + j] -= lr * d1 * Z[i, j]
        theta[h * p + 2 * h] -= lr * d2


def _descend(theta, Z, y, h, lr, epochs, rng, batch):
    for _ in range(epochs):
        if batch == "full":
            loss, g = loss_and_grad(theta, Z, y, h)
            if not np.isfinite(loss) or not np.all(np.isfinite(g)):
                return theta, float("nan")
            theta = theta - lr * g
        else:
            _sgd_epoch(theta, Z, y, rng.permutation(len(y)), h, lr)
            if not np.all(np.isfinite(theta)):
                return theta, float("nan")
    loss = loss_and_grad(theta, Z, y, h)[0]
    return theta, loss if np.isfinite(loss) else float("nan")


def train_ann(X, y, config: AnnConfig = AnnConfig()) -> AnnModel:
    if config.batch not in ("online", "full"):
        raise ValueError(f"unknown batch mode {config.batch!r}")
    X, y = check_dataset(X, y, both_classes=False)
    p = X.shape[1]
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    yf = y.astype(float)
    rng = np.random.default_rng(config.seed)
    theta0 = rng.uniform(-config.init_scale, config.init_scale, size=n_weights(p, config.hidden))
    lr = config.lr
    for attempt in range(config.max_restarts + 1):
        order_rng = np.random.default_rng([config.seed, attempt])
        theta, loss = _descend(theta0.copy(), np.ascontiguousarray(Z), yf, config.hidden, lr, config.epochs, order_rng,
                               config.batch)
        if np.isfinite(loss):
            return AnnModel(theta, config.hidden, p, scaler, config.threshold, loss)
        log.warning("non-finite loss at learning rate %g, restarting at half the rate", lr)
        lr *= 0.5
    raise TrainingError(f"loss diverged after {config.max_restarts} restarts")
