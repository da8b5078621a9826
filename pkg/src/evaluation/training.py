"""
Training Module

Mini-batch Adam training with a trial-level validation slice, early
stopping on validation loss and restoration of the best weights.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import ConfigError, DataError
from src.tensornet.graph import ModelGraph
from src.tensornet.kernels import softmax_cross_entropy
from src.tensornet.optim import adam_step

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 15
    validation_fraction: float = 0.1
    seed: int = 0
    max_steps: Optional[int] = None

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"validation fraction must lie in [0, 1), got {self.validation_fraction}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), "seed": seed})

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class TrainResult:
    epochs_run: int
    steps: int
    best_epoch: int
    best_val_loss: Optional[float]
    stopped_early: bool
    seconds: float
    history: List[Tuple[float, Optional[float]]] = field(default_factory=list)

    @property
    def final_train_loss(self) -> float:
        return self.history[-1][0] if self.history else float("nan")


def validation_split(groups: np.ndarray, fraction: float,
                     rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hold out round(fraction * n_groups) whole groups (at least one when
    fraction > 0 and there are 2+ groups).

    Returns:
        (train mask, validation mask) over windows
    """
    unique = np.array(sorted(set(groups)), dtype=object)
    n_val = int(round(fraction * len(unique)))
    if fraction > 0 and len(unique) >= 2:
        n_val = max(1, min(n_val, len(unique) - 1))
    else:
        n_val = 0
    held = unique[rng.permutation(len(unique))[:n_val]]
    val = np.isin(groups, held)
    return ~val, val


def evaluate_loss(graph: ModelGraph, X: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    total = 0.0
    for i in range(0, X.shape[0], batch_size):
        loss, _ = softmax_cross_entropy(graph.forward(X[i:i + batch_size]), y[i:i + batch_size])
        total += loss * min(batch_size, X.shape[0] - i)
    return total / X.shape[0]


def train_model(graph: ModelGraph, X: np.ndarray, y: np.ndarray, config: TrainConfig = TrainConfig(),
                groups: Optional[np.ndarray] = None) -> TrainResult:
    """
    Fit a graph to windows X [N, W, D] with integer labels y [N].

    Args:
        graph: Freshly built model (trained in place)
        X: Training windows
        y: Labels
        config: Hyperparameters and seed
        groups: Trial id per window; the validation slice takes whole trials.
            Defaults to one group per window.

    Returns:
        TrainResult; the graph holds the best-validation weights on return
    """
    config.validate()
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise DataError("cannot train on an empty training set")
    if groups is None:
        groups = np.arange(X.shape[0]).astype(str).astype(object)
    rng = np.random.default_rng(config.seed)
    train_mask, val_mask = validation_split(np.asarray(groups, dtype=object), config.validation_fraction, rng)
    X_train, y_train = X[train_mask], y[train_mask]
    X_val, y_val = X[val_mask], y[val_mask]
    has_val = X_val.shape[0] > 0

    start = time.perf_counter()
    best_loss, best_epoch, best_state = None, 0, None
    history: List[Tuple[float, Optional[float]]] = []
    wait, steps, stopped_early = 0, 0, False
    graph.zero_grad()
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(X_train.shape[0])
        epoch_loss, seen = 0.0, 0
        for i in range(0, len(order), config.batch_size):
            batch = order[i:i + config.batch_size]
            loss, dlogits = softmax_cross_entropy(graph.forward(X_train[batch]), y_train[batch])
            graph.backward(dlogits)
            adam_step(graph.parameters(), lr=config.lr)
            epoch_loss += loss * len(batch)
            seen += len(batch)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                break
        epoch_loss /= max(1, seen)

        val_loss = evaluate_loss(graph, X_val, y_val) if has_val else None
        history.append((epoch_loss, val_loss))
        _logger.debug("epoch %d: train loss %.5f, val loss %s", epoch, epoch_loss,
                      "n/a" if val_loss is None else f"{val_loss:.5f}")

        if has_val:
            if best_loss is None or val_loss < best_loss:
                best_loss, best_epoch, best_state = val_loss, epoch, graph.state_dict()
                wait = 0
            else:
                wait += 1
                if wait >= config.patience:
                    stopped_early = True
                    break
        else:
            best_epoch = epoch
        if config.max_steps is not None and steps >= config.max_steps:
            break

    if best_state is not None:
        graph.load_state_dict(best_state)
    seconds = time.perf_counter() - start
    _logger.info("trained %s: %d epochs (%d steps), best epoch %d, val loss %s, %.1f s%s",
                 graph.name, len(history), steps, best_epoch,
                 "n/a" if best_loss is None else f"{best_loss:.5f}", seconds,
                 ", early stop" if stopped_early else "")
    return TrainResult(len(history), steps, best_epoch, best_loss, stopped_early, seconds, history)
