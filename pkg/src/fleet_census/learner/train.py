"""Seeded mini-batch SGD over a feature store."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import ShapeError, TrainingDivergedError, TrainingError
from ..features import FeatureStore
from ..rng import SplitMix64, derive_seed
from .head import ClassifierHead, TrainConfig, loss_and_grad


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class TrainingLog:
    epochs: list[EpochStats] = field(default_factory=list)
    train_size: int = 0
    backbone_id: str = ""

    def to_dict(self) -> dict:
        return {
            "train_size": self.train_size,
            "backbone_id": self.backbone_id,
            "epochs": [
                {"epoch": e.epoch, "loss": e.loss, "accuracy": e.accuracy}
                for e in self.epochs
            ],
        }


def _select_rows(store: FeatureStore, train_hashes) -> tuple[np.ndarray, np.ndarray]:
    """Float64 features and labels for the train split, in canonical
    (hash-ascending) order regardless of the store's row order."""
    wanted = set(train_hashes)
    rows = [(h, i) for i, h in enumerate(store.hashes) if h.hex() in wanted]
    rows.sort(key=lambda pair: pair[0])
    found = {h.hex() for h, _ in rows}
    missing = sorted(wanted - found)
    if missing:
        raise TrainingError(
            f"{len(missing)} train hashes missing from the feature store "
            f"(first: {missing[0]})"
        )
    index = [i for _, i in rows]
    X = store.vectors[index].astype(np.float64)
    y = store.labels[index].astype(np.int64)
    return X, y


def dataset_loss_accuracy(head: ClassifierHead, X, y) -> tuple[float, float]:
    """Full-pass mean cross-entropy and accuracy at the current parameters."""
    logits = head.logits(X)
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    log_total = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(X.shape[0])
    loss = float(np.mean(log_total - shifted[rows, y]))
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, accuracy


def train_head(
    store: FeatureStore,
    train_hashes,
    config: TrainConfig,
) -> tuple[ClassifierHead, TrainingLog]:
    """Train the head on the given split; deterministic in (store, config).

    Runs config.epochs passes of mini-batch SGD over a seeded shuffle (one
    continuous SplitMix64 stream across epochs, reshuffled each epoch). The
    log records full-train loss and accuracy after every epoch.
    """
    X, y = _select_rows(store, train_hashes)
    if X.shape[0] == 0:
        raise TrainingError("train split is empty")

    if config.hidden_sizes:
        head = ClassifierHead.seeded_init(store.dim, config.hidden_sizes, config.seed)
    else:
        head = ClassifierHead.zero_init(store.dim)

    gen = SplitMix64(derive_seed(config.seed, "train-shuffle"))
    n = X.shape[0]
    log = TrainingLog(train_size=n, backbone_id=store.backbone_id)

    for epoch in range(1, config.epochs + 1):
        order = list(range(n))
        gen.shuffle(order)
        order = np.asarray(order, dtype=np.int64)
        if head.is_linear:
            W, b = head.layers[0]
            kernels.sgd_epoch(
                X, y, W, b, order,
                config.batch_size, config.learning_rate, config.weight_decay,
            )
        else:
            _sgd_epoch_general(head, X, y, order, config)
        loss, accuracy = dataset_loss_accuracy(head, X, y)
        if not math.isfinite(loss):
            raise TrainingDivergedError(epoch, batch=-1, loss=loss)
        log.epochs.append(EpochStats(epoch, loss, accuracy))
    return head, log


def _sgd_epoch_general(head, X, y, order, config: TrainConfig) -> None:
    n = order.shape[0]
    for start in range(0, n, config.batch_size):
        rows = order[start:start + config.batch_size]
        loss, grads = loss_and_grad(head, X[rows], y[rows])
        if not math.isfinite(loss):
            raise TrainingDivergedError(
                epoch=-1, batch=start // config.batch_size, loss=loss
            )
        for (W, b), (dW, db) in zip(head.layers, grads):
            if config.weight_decay:
                dW = dW + config.weight_decay * W
            W -= config.learning_rate * dW
            b -= config.learning_rate * db


def predict_store(head: ClassifierHead, store: FeatureStore, hashes=None):
    """Predicted labels and probabilities for store rows.

    Returns (hex hashes, true labels, predicted labels, probabilities),
    restricted to ``hashes`` when given, in canonical hash order.
    """
    if hashes is None:
        index = sorted(range(len(store)), key=lambda i: store.hashes[i])
    else:
        wanted = set(hashes)
        pairs = [(h, i) for i, h in enumerate(store.hashes) if h.hex() in wanted]
        pairs.sort(key=lambda pair: pair[0])
        found = {h.hex() for h, _ in pairs}
        missing = sorted(wanted - found)
        if missing:
            raise ShapeError(
                f"{len(missing)} hashes missing from the feature store "
                f"(first: {missing[0]})"
            )
        index = [i for _, i in pairs]
    X = store.vectors[index].astype(np.float64)
    probs = head.predict_proba(X)
    preds = np.argmax(probs, axis=1)
    hex_hashes = [store.hashes[i].hex() for i in index]
    true = store.labels[np.asarray(index, dtype=np.int64)].astype(np.int64)
    return hex_hashes, true, preds.astype(np.int64), probs
