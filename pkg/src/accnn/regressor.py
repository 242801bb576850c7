"""Linear patch -> density regressor trained by SGD with momentum.

The model maps a flattened ``p x p`` image patch (pixels scaled to [0, 1])
to a flattened ``p x p`` density patch: ``relu(W @ x + b)``. It stands in for
a convolutional backbone; anything exposing ``patch_size`` and ``predict``
can replace it inside a :class:`~accnn.pipeline.ModelBank`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .fuzzy import HPLevel

MODEL_MAGIC = "ADCM"
MODEL_VERSION = "v1"


@dataclass(frozen=True)
class HPConfig:
    level: HPLevel
    patch_size: int
    sigma: float
    stride: int

    def __post_init__(self):
        object.__setattr__(self, "level", HPLevel(self.level))
        if self.patch_size <= 0:
            raise ValueError(f"patch_size must be > 0, got {self.patch_size}")
        if not 0 < self.stride <= self.patch_size:
            raise ValueError(f"stride must be in (0, patch_size], got {self.stride}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


DEFAULT_HP_CONFIGS = (
    HPConfig(HPLevel.HIGH, 32, 3.0, 16),
    HPConfig(HPLevel.MID, 48, 5.0, 24),
    HPConfig(HPLevel.LOW, 64, 8.0, 32),
)


def check_hp_configs(hps):
    """Return ``{level: HPConfig}`` after checking the High < Mid < Low ordering."""
    by_level = {hp.level: hp for hp in hps}
    if len(by_level) != 3 or len(hps) != 3:
        raise ValueError("need exactly one HPConfig per level")
    hi, mid, lo = by_level[HPLevel.HIGH], by_level[HPLevel.MID], by_level[HPLevel.LOW]
    if not (hi.patch_size <= mid.patch_size <= lo.patch_size and hi.sigma <= mid.sigma <= lo.sigma):
        raise ValueError("High-Pred must have the smallest and Low-Pred the largest (patch_size, sigma)")
    if (hi.patch_size, hi.sigma) == (lo.patch_size, lo.sigma):
        raise ValueError("High-Pred and Low-Pred hyper-parameters must differ")
    return by_level


@dataclass(frozen=True)
class TrainParams:
    momentum: float = 0.9
    learning_rate: float = 1e-4
    weight_decay: float = 1e-3
    epochs: int = 25
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class Gradient(NamedTuple):
    weights: np.ndarray
    bias: np.ndarray


class TrainingDivergedError(FloatingPointError):
    pass


def _as_rows(X, n, what):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    elif X.ndim == 3:
        X = X.reshape(X.shape[0], -1)
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"{what}: expected vectors of length {n}, got shape {np.shape(X)}")
    return X


class PatchRegressor(RegressorMixin, BaseEstimator):
    """``relu(coef_ @ x + intercept_)`` fitted with momentum SGD.

    Defaults follow the reference training schedule: momentum 0.9, learning
    rate 1e-4, weight decay 1e-3, 25 epochs.
    """

    def __init__(self, patch_size=32, momentum=0.9, learning_rate=1e-4, weight_decay=1e-3,
                 epochs=25, batch_size=16, seed=0):
        self.patch_size = patch_size
        self.momentum = momentum
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed

    @property
    def n_pixels(self):
        return self.patch_size * self.patch_size

    @classmethod
    def from_weights(cls, weights, bias, **params):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        n = bias.shape[0]
        p = math.isqrt(n)
        if p * p != n or weights.shape != (n, n):
            raise ValueError(f"weights {weights.shape} and bias {bias.shape} do not describe a square patch model")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ValueError("model parameters must be finite")
        model = cls(patch_size=p, **params)
        model.coef_ = weights
        model.intercept_ = bias
        return model

    @classmethod
    def zeros(cls, patch_size, **params):
        n = patch_size * patch_size
        return cls.from_weights(np.zeros((n, n)), np.zeros(n), **params)

    def train_params(self):
        return TrainParams(self.momentum, self.learning_rate, self.weight_decay,
                           self.epochs, self.batch_size, self.seed)

    def _init_params(self):
        # a small positive bias keeps every output on the active side of the relu
        n = self.n_pixels
        self.coef_ = np.zeros((n, n))
        self.intercept_ = np.full(n, 1e-6)

    def fit(self, X, y):
        n = self.n_pixels
        X = _as_rows(X, n, "patches")
        Y = _as_rows(y, n, "targets")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(f"{X.shape[0]} patches but {Y.shape[0]} targets")
        if X.shape[0] == 0:
            raise ValueError("need at least one training pair")
        params = self.train_params()
        rng = np.random.default_rng(params.seed)
        self._init_params()

        vel_w = np.zeros_like(self.coef_)
        vel_b = np.zeros_like(self.intercept_)
        history = [batch_loss(self, X, Y, params.weight_decay)]
        with np.errstate(over="ignore", invalid="ignore"):
            self._run_epochs(X, Y, params, rng, vel_w, vel_b, history)
        self.loss_history_ = history
        return self

    def _run_epochs(self, X, Y, params, rng, vel_w, vel_b, history):
        for epoch in range(1, params.epochs + 1):
            order = rng.permutation(X.shape[0])
            for start in range(0, len(order), params.batch_size):
                idx = order[start:start + params.batch_size]
                g = batch_gradient(self, X[idx], Y[idx], params.weight_decay)
                vel_w *= params.momentum
                vel_w -= params.learning_rate * g.weights
                vel_b *= params.momentum
                vel_b -= params.learning_rate * g.bias
                self.coef_ += vel_w
                self.intercept_ += vel_b
            current = batch_loss(self, X, Y, params.weight_decay)
            if not math.isfinite(current):
                raise TrainingDivergedError(f"divergence: training loss became {current} at epoch {epoch}")
            history.append(current)

    def decision_function(self, X):
        X = _as_rows(X, self.n_pixels, "patches")
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return np.maximum(self.decision_function(X), 0.0)


def forward(model, patch):
    x = np.asarray(patch, dtype=np.float64).ravel()
    if x.size != model.n_pixels:
        raise ValueError(f"patch length {x.size} != {model.n_pixels}")
    return model.predict(x)[0]


def batch_loss(model, X, Y, weight_decay=1e-3):
    n = model.n_pixels
    X = _as_rows(X, n, "patches")
    Y = _as_rows(Y, n, "targets")
    resid = model.predict(X) - Y
    return float(np.mean(np.sum(resid * resid, axis=1)) / n + weight_decay * np.sum(model.coef_ * model.coef_))


def batch_gradient(model, X, Y, weight_decay=1e-3):
    """Gradient of :func:`batch_loss`; the relu is taken to pass gradient at 0."""
    n = model.n_pixels
    z = X @ model.coef_.T + model.intercept_
    r = (2.0 / n) * (np.maximum(z, 0.0) - Y) * (z >= 0)
    r /= X.shape[0]
    return Gradient(r.T @ X + 2.0 * weight_decay * model.coef_, r.sum(axis=0))


def loss(model, patch, target, weight_decay=1e-3):
    """Mean squared error over pixels plus ``weight_decay * sum(W**2)``."""
    x = np.asarray(patch, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if x.size != model.n_pixels or t.size != model.n_pixels:
        raise ValueError(f"patch/target lengths {x.size}/{t.size} != {model.n_pixels}")
    return batch_loss(model, x, t, weight_decay)


def gradient(model, patch, target, weight_decay=1e-3):
    x = np.asarray(patch, dtype=np.float64).ravel()
    t = np.asarray(target, dtype=np.float64).ravel()
    if x.size != model.n_pixels or t.size != model.n_pixels:
        raise ValueError(f"patch/target lengths {x.size}/{t.size} != {model.n_pixels}")
    return batch_gradient(model, x[None, :], t[None, :], weight_decay)


def train(pairs, params=None):
    """Fit a fresh :class:`PatchRegressor` on ``(patch, target)`` pairs."""
    params = params or TrainParams()
    if not pairs:
        raise ValueError("need at least one training pair")
    X = np.stack([np.asarray(p, dtype=np.float64).ravel() for p, _ in pairs])
    Y = np.stack([np.asarray(t, dtype=np.float64).ravel() for _, t in pairs])
    p = math.isqrt(X.shape[1])
    if p * p != X.shape[1]:
        raise ValueError(f"patch length {X.shape[1]} is not a square")
    return PatchRegressor(patch_size=p, **asdict(params)).fit(X, Y)


class ModelFormatError(ValueError):
    pass


def save_model(model, path):
    n = model.n_pixels
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{MODEL_MAGIC} {MODEL_VERSION} {model.patch_size}\n")
        np.savetxt(fh, model.intercept_[None, :], fmt="%.17g", delimiter=" ")
        np.savetxt(fh, model.coef_.reshape(n, n), fmt="%.17g", delimiter=" ")


def _parse_row(line, lineno, n):
    try:
        row = np.array(line.split(), dtype=np.float64)
    except ValueError as exc:
        raise ModelFormatError(f"line {lineno}: {exc}") from None
    if row.size != n:
        raise ModelFormatError(f"line {lineno}: dimension mismatch, expected {n} values, got {row.size}")
    return row


def load_model(path, **params):
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != MODEL_MAGIC or header[1] != MODEL_VERSION:
            raise ModelFormatError(f"line 1: bad header {' '.join(header)!r}")
        try:
            p = int(header[2])
        except ValueError:
            raise ModelFormatError(f"line 1: bad patch size {header[2]!r}") from None
        if p <= 0:
            raise ModelFormatError(f"line 1: bad patch size {p}")
        n = p * p
        bias_line = fh.readline()
        if not bias_line:
            raise ModelFormatError("line 2: file truncated before bias")
        bias = _parse_row(bias_line, 2, n)
        weights = np.empty((n, n))
        for i in range(n):
            line = fh.readline()
            if not line:
                raise ModelFormatError(f"line {i + 3}: file truncated, expected {n} weight rows, got {i}")
            weights[i] = _parse_row(line, i + 3, n)
        extra = fh.readline()
        if extra.strip():
            raise ModelFormatError(f"line {n + 3}: dimension mismatch, unexpected extra data")
    return PatchRegressor.from_weights(weights, bias, **params)
