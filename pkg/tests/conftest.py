import hashlib

import numpy as np
import pytest

from fleet_census.features import FeatureStore


def fake_hash(tag) -> str:
    """Deterministic 32-byte content hash for synthetic rows."""
    return hashlib.sha256(str(tag).encode()).hexdigest()


def store_from_rows(rows, dim, backbone_id="test-backbone"):
    """Build an in-memory FeatureStore from (hex_hash, label, vector) rows,
    keeping the given row order (the on-disk writer would sort)."""
    hashes = [bytes.fromhex(h) for h, _, _ in rows]
    labels = np.array([label for _, label, _ in rows], dtype=np.uint8)
    vectors = np.array([vec for _, _, vec in rows], dtype=np.float32).reshape(
        len(rows), dim
    )
    return FeatureStore(backbone_id, dim, hashes, labels, vectors)


def gaussian_clusters(dim, per_class, seed, n_classes=4, center_scale=10.0, sigma=1.0):
    """Well-separated clusters: centers at center_scale on distinct axes, so
    inter-center distance is center_scale * sqrt(2) >= 10 sigma by default."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for cls in range(n_classes):
        center = np.zeros(dim)
        center[cls % dim] = center_scale
        X.append(center + sigma * rng.standard_normal((per_class, dim)))
        y.append(np.full(per_class, cls, dtype=np.int64))
    return np.concatenate(X), np.concatenate(y)


def nearest_centroid_accuracy(X_train, y_train, X_eval, y_eval) -> float:
    """Independent separability oracle: classify by closest class mean."""
    centroids = np.stack(
        [X_train[y_train == cls].mean(axis=0) for cls in range(4)]
    )
    d2 = ((X_eval[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == y_eval))


def flatten_grads(grads):
    return np.concatenate([np.concatenate([dW.ravel(), db.ravel()]) for dW, db in grads])


def finite_difference_grad(head, X, y, eps=1e-5):
    """Central finite differences over every parameter of the head."""
    from fleet_census.learner import loss_and_grad

    def loss_at():
        return loss_and_grad(head, X, y)[0]

    pieces = []
    for W, b in head.layers:
        for arr in (W, b):
            flat = arr.reshape(-1)
            g = np.empty_like(flat)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                up = loss_at()
                flat[i] = original - eps
                down = loss_at()
                flat[i] = original
                g[i] = (up - down) / (2 * eps)
            pieces.append(g)
    return np.concatenate(pieces)


def max_relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-8)))


@pytest.fixture
def tiny_store():
    rng = np.random.default_rng(7)
    rows = [
        (fake_hash(i), i % 4, rng.standard_normal(8).astype(np.float32))
        for i in range(40)
    ]
    return store_from_rows(rows, dim=8)
