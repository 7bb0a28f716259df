"""Dense ReLU regression network for the forward model, written in numpy.

Inputs are standardised with the training-set mean and std; outputs are the
raw normalised apex coordinates. The backward pass provides both parameter
gradients (for training) and input gradients (for inverse design).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.std) <= 0):
            raise ValueError("standardizer std must be positive")

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std


@dataclass
class SurrogateModel:
    weights: list[np.ndarray]  # (fan_in, fan_out) each
    biases: list[np.ndarray]
    standardizer: Standardizer

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def _forward(self, z: np.ndarray):
        """Pre-activations of every layer; the last entry is the output."""
        pre = []
        a = z
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            s = a @ W + b
            pre.append(s)
            a = np.maximum(s, 0.0) if k < len(self.weights) - 1 else s
        return pre

    def __call__(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        out = self._forward(self.standardizer.transform(np.atleast_2d(p)))[-1]
        return out[0] if p.ndim == 1 else out

    predict = __call__

    def input_gradient(self, p) -> np.ndarray:
        """d(output)/d(raw input): shape (2, 4), or (n, 2, 4) for a batch.

        The rectifier derivative at exactly zero is taken as 0.
        """
        p = np.asarray(p, dtype=float)
        pre = self._forward(self.standardizer.transform(np.atleast_2d(p)))
        # propagate the identity through the layers in reverse, batched
        n_out = self.weights[-1].shape[1]
        g = np.broadcast_to(np.eye(n_out), (pre[0].shape[0], n_out, n_out))
        for k in range(len(self.weights) - 1, -1, -1):
            g = g @ self.weights[k].T
            if k > 0:
                g = g * (pre[k - 1] > 0.0)[:, None, :]
        g = g / self.standardizer.std
        return g[0] if p.ndim == 1 else g

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "standardizer": {"mean": self.standardizer.mean.tolist(), "std": self.standardizer.std.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        weights = [np.array(w, dtype=float) for w in d["weights"]]
        biases = [np.array(b, dtype=float) for b in d["biases"]]
        sizes = (weights[0].shape[0],) + tuple(w.shape[1] for w in weights)
        if tuple(d["sizes"]) != sizes:
            raise ValueError(f"layer sizes {d['sizes']} do not match weights {sizes}")
        st = d["standardizer"]
        return cls(weights, biases, Standardizer(np.array(st["mean"], dtype=float), np.array(st["std"], dtype=float)))

    def save(self, path) -> None:
        # json writes floats with repr, which round-trips float64 exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def init_model(sizes, standardizer: Standardizer, rng: np.random.Generator) -> SurrogateModel:
    """Uniform fan-in initialisation (He scaling for the rectified layers)."""
    weights, biases = [], []
    for k, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = 6.0 if k < len(sizes) - 2 else 3.0
        lim = np.sqrt(gain / fi)
        weights.append(rng.uniform(-lim, lim, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return SurrogateModel(weights, biases, standardizer)


def mae_and_gradients(model: SurrogateModel, X: np.ndarray, Y: np.ndarray):
    """Mean absolute error over all outputs and its parameter gradients.

    The sign function's subgradient at a zero residual is 0.
    """
    z = model.standardizer.transform(X)
    pre = model._forward(z)
    err = pre[-1] - Y
    loss = float(np.abs(err).mean())
    delta = np.sign(err) / err.size
    gW, gb = [None] * len(model.weights), [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        a_prev = z if k == 0 else np.maximum(pre[k - 1], 0.0)
        gW[k] = a_prev.T @ delta
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (pre[k - 1] > 0.0)
    return loss, gW, gb


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (372, 372, 372)
    lr: float = 2e-3
    lr_final: float | None = 1e-5  # cosine decay of the step size to this value (None: constant)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 800
    batch_schedule: tuple[tuple[int, int], ...] = ((0, 64), (50, 256), (120, 1024))
    val_fraction: float = 0.2
    seed: int = 0

    def batch_size(self, epoch: int, n_train: int) -> int:
        size = self.batch_schedule[0][1]
        for start, b in self.batch_schedule:
            if epoch >= start:
                size = b
        return min(size, n_train)

    def step_size(self, epoch: int) -> float:
        if self.lr_final is None or self.epochs <= 1:
            return self.lr
        w = 0.5 * (1.0 + np.cos(np.pi * epoch / (self.epochs - 1)))
        return self.lr_final + (self.lr - self.lr_final) * w


@dataclass
class TrainResult:
    model: SurrogateModel
    train_mae: float
    val_mae: float
    history: list[tuple[float, float]] = field(default_factory=list)  # (train, val) per epoch
    seconds: float = 0.0


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(val_fraction * n))
    return perm[n_val:], perm[:n_val]


def evaluate_mae(model: SurrogateModel, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.abs(model(X) - Y).mean())


def train(X: np.ndarray, Y: np.ndarray, config: TrainConfig | None = None) -> TrainResult:
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError("X and Y must be 2-D with matching row counts")
    t0 = time.perf_counter()
    tr, va = split_indices(len(X), config.val_fraction, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    sizes = (X.shape[1], *config.hidden, Y.shape[1])
    model = init_model(sizes, Standardizer.fit(X[tr]), rng)
    # start the output bias at the target mean so the first epochs fit shape, not offset
    model.biases[-1] = Y[tr].mean(axis=0).copy()

    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    history = []
    for epoch in range(config.epochs):
        bs = config.batch_size(epoch, len(tr))
        lr = config.step_size(epoch)
        order = rng.permutation(tr)
        for start in range(0, len(order), bs):
            idx = order[start : start + bs]
            loss, gW, gb = mae_and_gradients(model, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
            step += 1
            c1 = 1.0 - config.beta1**step
            c2 = 1.0 - config.beta2**step
            for p, g, mk, vk in zip(params, gW + gb, m, v):
                mk *= config.beta1
                mk += (1.0 - config.beta1) * g
                vk *= config.beta2
                vk += (1.0 - config.beta2) * g * g
                p -= lr * (mk / c1) / (np.sqrt(vk / c2) + config.adam_eps)
        train_mae = evaluate_mae(model, X[tr], Y[tr])
        val_mae = evaluate_mae(model, X[va], Y[va]) if len(va) else float("nan")
        history.append((train_mae, val_mae))
        log.debug("epoch %d batch %d train %.4g val %.4g", epoch, bs, train_mae, val_mae)
    tm, vm = history[-1] if history else (float("nan"), float("nan"))
    return TrainResult(model, tm, vm, history, time.perf_counter() - t0)
