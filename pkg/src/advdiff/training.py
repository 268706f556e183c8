"""Losses, metrics, optimizers, and the full-batch training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Var
from .errors import ConfigError, DimensionError, NumericalError, TrainingAbort
from .synth import ShiftSuite

log = logging.getLogger(__name__)

__all__ = [
    "mse_loss",
    "cross_entropy_loss",
    "rmse",
    "accuracy",
    "Sgd",
    "Adam",
    "make_optimizer",
    "TrainConfig",
    "FitResult",
    "fit",
    "evaluate_rmse",
]


def mse_loss(pred: Var, target) -> Var:
    """Mean squared error over all entries, as a 1x1 Var."""
    t = pred.tape.const(target)
    if t.value.shape != pred.value.shape:
        raise DimensionError("mse_loss", pred.value.shape, t.value.shape)
    diff = ad.sub(pred, t)
    return ad.scale(ad.sum_all(ad.mul(diff, diff)), 1.0 / pred.value.size)


def cross_entropy_loss(pred: Var, target_idx) -> Var:
    """Mean negative log-likelihood of the target classes.

    `pred` holds per-row class probabilities (e.g. a softmax decode
    output); uniform two-class rows score ln 2.
    """
    idx = np.asarray(target_idx, dtype=np.int64).ravel()
    n, c = pred.value.shape
    if idx.shape[0] != n:
        raise DimensionError("cross_entropy_loss", pred.value.shape, idx.shape)
    if idx.size and (idx.min() < 0 or idx.max() >= c):
        raise ConfigError(f"cross_entropy_loss: class index out of range for {c} classes")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), idx] = 1.0
    picked = ad.mul(pred.tape.const(onehot), ad.log(pred))
    return ad.scale(ad.sum_all(picked), -1.0 / n)


def rmse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError("rmse", pred.shape, target.shape)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def accuracy(pred: np.ndarray, target_idx) -> float:
    """Fraction of rows whose argmax (ties -> lowest index) hits the target."""
    pred = np.asarray(pred, dtype=np.float64)
    idx = np.asarray(target_idx, dtype=np.int64).ravel()
    if pred.shape[0] != idx.shape[0]:
        raise DimensionError("accuracy", pred.shape, idx.shape)
    return float(np.mean(pred.argmax(axis=1) == idx))


class Sgd:
    """Plain gradient descent."""

    def __init__(self, lr: float):
        self.lr = float(lr)

    def step(self, named_params, grads: dict[str, np.ndarray]) -> None:
        for name, arr in named_params:
            arr -= self.lr * grads[name]


class Adam:
    """Adam with the standard moment estimates and bias correction."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, named_params, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, arr in named_params:
            g = grads[name]
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(arr)
                self._m[name] = m
                self._v[name] = np.zeros_like(arr)
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / (1.0 - b1**self.t)
            v_hat = v / (1.0 - b2**self.t)
            arr -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 500
    optimizer: str = "adam"
    seed: int = 0
    early_stop_patience: int = 100

    def __post_init__(self):
        if self.lr < 0 or not np.isfinite(self.lr):
            raise ConfigError(f"TrainConfig: bad learning rate {self.lr}")
        if self.epochs < 1:
            raise ConfigError("TrainConfig: epochs must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"TrainConfig: unknown optimizer {self.optimizer!r}")
        if self.early_stop_patience < 0:
            raise ConfigError("TrainConfig: patience must be nonnegative")


def make_optimizer(tc: TrainConfig):
    return Adam(tc.lr) if tc.optimizer == "adam" else Sgd(tc.lr)


@dataclass
class FitResult:
    params: object
    train_curve: list[float]
    valid_curve: list[float]
    test_metrics: list[float]
    best_epoch: int
    metric: str = "rmse"
    gaps: list[float] = field(default_factory=list)


def evaluate_rmse(family, cfg, params, graph, features, labels) -> float:
    """RMSE of a model's decoded prediction on one graph (no gradients)."""
    tape = Tape()
    lifted, _ = family.lift(tape, params)
    x = tape.const(features)
    pred = family.predict(tape, cfg, lifted, graph, x)
    return rmse(pred.value, labels)


def fit(family, cfg, suite: ShiftSuite, tc: TrainConfig) -> FitResult:
    """Full-batch training on graph #1, selection on graph #2.

    Every epoch rebuilds the tape, takes one optimizer step, and scores
    the validation graph; the best-validation snapshot is restored at the
    end and scored on each test graph. A non-finite training loss aborts
    with the loss history. Fixed seeds give identical results.
    """
    train_g, valid_g = suite.train_graph, suite.valid_graph
    x_arr = suite.features
    y_train = suite.labels[0]
    y_valid = suite.labels[1]
    params = family.init_params(cfg, x_arr.shape[1], y_train.shape[1], tc.seed)
    opt = make_optimizer(tc)
    train_curve: list[float] = []
    valid_curve: list[float] = []
    best_metric = np.inf
    best_epoch = -1
    best_params = family.copy_params(params)
    for epoch in range(tc.epochs):
        # a diverging run surfaces either as a non-finite loss value or as
        # an overflow inside some op; both become the same abort diagnostic
        try:
            tape = Tape()
            lifted, named_vars = family.lift(tape, params)
            pred = family.predict(tape, cfg, lifted, train_g, tape.const(x_arr))
            loss = mse_loss(pred, y_train)
            loss_value = float(loss.value[0, 0])
            if not np.isfinite(loss_value):
                raise TrainingAbort(epoch, train_curve)
            grads_by_id = tape.backward(loss)
            grads = {name: grads_by_id[var.id] for name, var in named_vars}
            opt.step(family.named_arrays(params), grads)
            train_curve.append(loss_value)
            valid_metric = evaluate_rmse(family, cfg, params, valid_g, x_arr, y_valid)
        except NumericalError as exc:
            raise TrainingAbort(epoch, train_curve) from exc
        valid_curve.append(valid_metric)
        if valid_metric < best_metric:
            best_metric = valid_metric
            best_epoch = epoch
            best_params = family.copy_params(params)
        elif tc.early_stop_patience and epoch - best_epoch >= tc.early_stop_patience:
            break
    test_metrics = [
        evaluate_rmse(family, cfg, best_params, suite.graphs[i], x_arr, suite.labels[i])
        for i in suite.test_indices()
    ]
    gaps = suite.gaps_to_train()
    return FitResult(
        params=best_params,
        train_curve=train_curve,
        valid_curve=valid_curve,
        test_metrics=test_metrics,
        best_epoch=best_epoch,
        gaps=[gaps[i] for i in suite.test_indices()],
    )
