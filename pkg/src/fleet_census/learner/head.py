"""Classifier head over stored backbone features.

Default architecture is a single linear layer with softmax output (convex
in its parameters); optional hidden rectifier layers are available through
TrainConfig.hidden_sizes. All training arithmetic is float64 even though
stores hold float32.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels
from ..errors import FormatError, ShapeError, TrainingError, ValidationError
from ..rng import SplitMix64, derive_seed
from ..taxonomy import NUM_CLASSES

HEAD_MAGIC = b"FCHD"
HEAD_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 1e-4
    hidden_sizes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        problems = []
        if self.epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.epochs}")
        # learning_rate 0 is allowed as an explicit no-op mode; negative is not.
        if not self.learning_rate >= 0:
            problems.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.weight_decay >= 0:
            problems.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if any(h < 1 for h in self.hidden_sizes):
            problems.append("hidden sizes must be positive")
        if problems:
            raise ValidationError("; ".join(problems))

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "weight_decay": self.weight_decay,
            "hidden_sizes": list(self.hidden_sizes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(
            epochs=data.get("epochs", 10),
            learning_rate=data.get("learning_rate", 0.01),
            batch_size=data.get("batch_size", 32),
            seed=data.get("seed", 0),
            weight_decay=data.get("weight_decay", 1e-4),
            hidden_sizes=tuple(data.get("hidden_sizes", ())),
        )


def softmax(logits, axis=-1):
    """Probabilities from logits with per-row max subtraction."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValidationError("softmax requires finite logits")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)


class ClassifierHead:
    """Stack of (W, b) layers: rectifier on hidden layers, softmax output."""

    def __init__(self, layers):
        self.layers = [
            (np.array(W, dtype=np.float64), np.array(b, dtype=np.float64))
            for W, b in layers
        ]
        if not self.layers:
            raise ShapeError("head needs at least one layer")
        for i, (W, b) in enumerate(self.layers):
            if W.ndim != 2 or b.ndim != 1 or W.shape[1] != b.shape[0]:
                raise ShapeError(f"layer {i}: W {W.shape} and b {b.shape} disagree")
            if i > 0 and self.layers[i - 1][0].shape[1] != W.shape[0]:
                raise ShapeError(
                    f"layer {i} input {W.shape[0]} != layer {i-1} output "
                    f"{self.layers[i - 1][0].shape[1]}"
                )
        if self.layers[-1][0].shape[1] != NUM_CLASSES:
            raise ShapeError(
                f"output width {self.layers[-1][0].shape[1]} != {NUM_CLASSES}"
            )
        for i, (W, b) in enumerate(self.layers):
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {i} has non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def is_linear(self) -> bool:
        return len(self.layers) == 1

    @classmethod
    def zero_init(cls, input_dim: int) -> "ClassifierHead":
        """Single softmax layer, all parameters zero (uniform output)."""
        return cls([(np.zeros((input_dim, NUM_CLASSES)), np.zeros(NUM_CLASSES))])

    @classmethod
    def seeded_init(cls, input_dim: int, hidden_sizes, seed: int) -> "ClassifierHead":
        """Hidden layers drawn uniform in +/- 1/sqrt(fan_in); output layer zero."""
        sizes = [input_dim, *hidden_sizes, NUM_CLASSES]
        layers = []
        for i in range(len(sizes) - 1):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            if i == len(sizes) - 2:
                layers.append((np.zeros((fan_in, fan_out)), np.zeros(fan_out)))
                continue
            gen = SplitMix64(derive_seed(seed, "init", i))
            bound = 1.0 / np.sqrt(fan_in)
            W = np.empty((fan_in, fan_out))
            for r in range(fan_in):
                for c in range(fan_out):
                    W[r, c] = (gen.uniform() * 2.0 - 1.0) * bound
            layers.append((W, np.zeros(fan_out)))
        return cls(layers)

    def _check_input(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(
                f"feature width {X.shape[-1] if X.ndim else '?'} != head input "
                f"{self.input_dim}"
            )
        return X

    def forward(self, X):
        """Returns (logits, activations per layer input) for backprop."""
        X = self._check_input(X)
        activations = [X]
        out = X
        for i, (W, b) in enumerate(self.layers):
            out = out @ W + b
            if i < len(self.layers) - 1:
                out = np.maximum(out, 0.0)
                activations.append(out)
        return out, activations

    def logits(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X), axis=-1)

    def predict(self, feature):
        """(probability vector, argmax class index); ties break low."""
        probs = self.predict_proba(np.asarray(feature, dtype=np.float64))
        if probs.ndim == 2 and probs.shape[0] == 1:
            probs = probs[0]
        return probs, int(np.argmax(probs))

    def predict_labels(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)

    def copy(self) -> "ClassifierHead":
        return ClassifierHead([(W.copy(), b.copy()) for W, b in self.layers])


def loss_and_grad(head: ClassifierHead, X, y):
    """Mean cross-entropy over a batch and gradients for every layer.

    Returns (loss, [(dW, db), ...]) with shapes matching head.layers.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("batch must be a non-empty (n, d) array")
    if X.shape[1] != head.input_dim:
        raise ShapeError(f"feature width {X.shape[1]} != head input {head.input_dim}")
    if y.shape != (X.shape[0],):
        raise ShapeError("labels must be one per batch row")
    if np.any((y < 0) | (y >= NUM_CLASSES)):
        raise ValidationError(f"labels must lie in [0, {NUM_CLASSES})")

    if head.is_linear:
        W, b = head.layers[0]
        loss, dW, db = kernels.linear_xent_grad(X, W, b, y)
        return loss, [(dW, db)]

    logits, activations = head.forward(X)
    n = X.shape[0]
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(total[:, 0]) - shifted[rows, y]))
    dz = exp / total
    dz[rows, y] -= 1.0
    dz /= n
    grads = [None] * len(head.layers)
    for i in range(len(head.layers) - 1, -1, -1):
        inputs = activations[i]
        grads[i] = (inputs.T @ dz, dz.sum(axis=0))
        if i > 0:
            W, _ = head.layers[i]
            dz = (dz @ W.T) * (activations[i] > 0)
    return loss, grads


def save_head(path, head: ClassifierHead, config: TrainConfig, backbone_id: str = "") -> None:
    """Checkpoint: magic, version, layer shapes + float64 parameters, then a
    JSON echo of the training config and backbone id."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    echo = json.dumps(
        {"config": config.to_dict(), "backbone_id": backbone_id,
         "input_dim": head.input_dim},
        sort_keys=True,
    ).encode("utf-8")
    with open(tmp, "wb") as fh:
        fh.write(HEAD_MAGIC)
        fh.write(struct.pack("<I", HEAD_VERSION))
        fh.write(struct.pack("<I", len(head.layers)))
        for W, b in head.layers:
            fh.write(struct.pack("<II", W.shape[0], W.shape[1]))
            fh.write(W.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())
        fh.write(struct.pack("<I", len(echo)))
        fh.write(echo)
    tmp.replace(path)


def load_head(path):
    """Returns (head, config, backbone_id)."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    offset = 0

    def take(n):
        nonlocal offset
        if offset + n > len(blob):
            raise FormatError(f"{path}: truncated checkpoint")
        piece = blob[offset:offset + n]
        offset += n
        return piece

    if take(4) != HEAD_MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", take(4))
    if version != HEAD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (n_layers,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(n_layers):
        rows, cols = struct.unpack("<II", take(8))
        W = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        b = np.frombuffer(take(8 * cols), dtype="<f8")
        layers.append((W, b))
    (echo_len,) = struct.unpack("<I", take(4))
    echo = json.loads(take(echo_len).decode("utf-8"))
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    head = ClassifierHead(layers)
    config = TrainConfig.from_dict(echo.get("config", {}))
    return head, config, echo.get("backbone_id", "")
