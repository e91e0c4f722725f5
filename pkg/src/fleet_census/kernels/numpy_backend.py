"""Numpy implementations of the hot kernels.

Semantics are the contract; the compiled backend in ``fleet_census._native``
must match these functions (same shapes, same update formulas) to within
floating-point reassociation.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def linear_xent_grad(X, W, b, y):
    """Mean cross-entropy and gradients of a linear softmax layer.

    X: (n, d) float64, W: (d, k) float64, b: (k,) float64, y: (n,) int64.
    Returns (loss, dW, db). Log-sum-exp uses per-row max subtraction.
    """
    n = X.shape[0]
    logits = X @ W + b
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_total = np.log(total)
    rows = np.arange(n)
    loss = float(np.mean(log_total[:, 0] - shifted[rows, y]))
    probs = exp / total
    dz = probs
    dz[rows, y] -= 1.0
    dz /= n
    return loss, X.T @ dz, dz.sum(axis=0)


def sgd_epoch(X, y, W, b, order, batch_size, lr, weight_decay):
    """One epoch of mini-batch SGD, in place on W and b.

    Batches are consecutive slices of ``order``; the trailing short batch is
    included. Weight decay applies to W only, evaluated at the pre-update
    value: W -= lr * (dW + wd * W); b -= lr * db.
    """
    n = order.shape[0]
    for start in range(0, n, batch_size):
        rows = order[start:start + batch_size]
        _, dW, db = linear_xent_grad(X[rows], W, b, y[rows])
        if weight_decay != 0.0:
            dW = dW + weight_decay * W
        W -= lr * dW
        b -= lr * db


def confusion_counts(y_true, y_pred, k):
    """k x k int64 matrix; rows are true labels, columns predicted."""
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def hamming_first_within(candidate, kept, max_dist):
    """Index of the first hash in ``kept`` within Hamming distance, else -1.

    candidate: python int (64-bit); kept: uint64 array.
    """
    if kept.shape[0] == 0:
        return -1
    dist = np.bitwise_count(kept ^ np.uint64(candidate))
    hits = np.nonzero(dist <= max_dist)[0]
    return int(hits[0]) if hits.size else -1
