"""ADAM updates and the epoch loop with validation-based early stopping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .network import ArchConfig, NetworkWeights, forward, forward_backward, init_weights
from .losses import loss as loss_value

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    max_epochs: int = 300
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss: str = "mix"
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


class Adam:
    """ADAM with bias-corrected first and second moment estimates."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    @classmethod
    def from_config(cls, config: TrainConfig) -> "Adam":
        return cls(config.lr, config.beta1, config.beta2, config.adam_eps)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p -= update.astype(p.dtype, copy=False)


def backward_and_step(weights: NetworkWeights, optimizer: Adam, inputs: np.ndarray,
                      targets: np.ndarray, kind: str = "mix") -> float:
    """One optimiser step on a batch; returns the batch loss before the update."""
    # non-finite values are reported below, not as numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        value, grads = forward_backward(weights, inputs, targets, kind, training=True)
    if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise TrainingError(f"non-finite loss or gradient (loss={value})")
    optimizer.step(weights.params, grads)
    return value


def evaluate_loss(weights: NetworkWeights, inputs: np.ndarray, targets: np.ndarray,
                  kind: str = "mix", batch_size: int = 128) -> float:
    """Mean loss over a patch set, predicting in inference mode."""
    if len(inputs) == 0:
        raise ValueError("empty patch set")
    preds = np.concatenate([forward(weights, inputs[i:i + batch_size])
                            for i in range(0, len(inputs), batch_size)])
    return loss_value(preds, targets, kind)


@dataclass
class TrainResult:
    weights: NetworkWeights
    history: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0

    def write_log(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for epoch, tr, va in self.history:
                fh.write(f"{epoch},{tr:.8g},{va:.8g}\n")


def train(data_generator: Callable[[int, np.random.Generator], tuple[np.ndarray, np.ndarray]],
          validation: tuple[np.ndarray, np.ndarray],
          config: TrainConfig = TrainConfig(),
          arch: ArchConfig = ArchConfig(),
          weights: NetworkWeights | None = None,
          callback: Callable[[int, float, float], None] | None = None) -> TrainResult:
    """Train until ``max_epochs`` or until validation loss stalls for ``patience`` epochs.

    ``data_generator(epoch, rng)`` returns that epoch's ``(inputs, targets)``
    patch arrays.  The weights with the lowest validation loss are returned.
    """
    rng = np.random.default_rng(config.seed)
    if weights is None:
        weights = init_weights(arch, seed=config.seed)
    else:
        weights = weights.copy()
    weights.check()
    val_x, val_t = validation
    if len(val_x) == 0:
        raise ValueError("validation set is empty")
    optimizer = Adam.from_config(config)

    result = TrainResult(weights.copy())
    best = np.inf
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        inputs, targets = data_generator(epoch, rng)
        if len(inputs) == 0:
            raise ValueError(f"data generator produced no patches for epoch {epoch}")
        order = rng.permutation(len(inputs))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            total += backward_and_step(weights, optimizer, inputs[idx], targets[idx], config.loss) * len(idx)
        train_loss = total / len(order)
        val_loss = evaluate_loss(weights, val_x, val_t, config.loss, config.batch_size)
        result.history.append((epoch, train_loss, val_loss))
        log.info("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if callback is not None:
            callback(epoch, train_loss, val_loss)
        if val_loss < best:
            best = val_loss
            stale = 0
            result.weights = weights.copy()
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    return result
