# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused softmax cross-entropy, SGD epochs, confusion
counting, Hamming scans. Mirrors fleet_census.kernels.numpy_backend."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

NAME = "native"


cdef double _xent_grad_inner(const double[:, ::1] X, const double[:, ::1] W,
                             const double[::1] b, const long[::1] y,
                             double[:, ::1] dW, double[::1] db) except? -1.0:
    """Accumulate gradients for one batch; returns mean loss."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t k = W.shape[1]
    cdef Py_ssize_t i, j, a
    cdef double m, total, lse, loss, p, g, xv
    cdef double[::1] z = np.empty(k, dtype=np.float64)

    dW[:, :] = 0.0
    db[:] = 0.0
    loss = 0.0
    for i in range(n):
        for j in range(k):
            z[j] = b[j]
        for a in range(d):
            xv = X[i, a]
            for j in range(k):
                z[j] += xv * W[a, j]
        m = z[0]
        for j in range(1, k):
            if z[j] > m:
                m = z[j]
        total = 0.0
        for j in range(k):
            total += exp(z[j] - m)
        lse = m + log(total)
        loss += lse - z[y[i]]
        for j in range(k):
            p = exp(z[j] - lse)
            if j == y[i]:
                p -= 1.0
            g = p / n
            db[j] += g
            for a in range(d):
                dW[a, j] += X[i, a] * g
    return loss / n


def linear_xent_grad(X, W, b, y):
    """Mean cross-entropy and gradients of a linear softmax layer."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    dW = np.empty_like(W)
    db = np.empty_like(b)
    loss = _xent_grad_inner(X, W, b, y, dW, db)
    return loss, dW, db


def sgd_epoch(X, y, W, b, order, batch_size, lr, weight_decay):
    """One epoch of mini-batch SGD, in place on W and b."""
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const long[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef double[:, ::1] Wv = W
    cdef double[::1] bv = b
    cdef const long[::1] orderv = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = orderv.shape[0]
    cdef Py_ssize_t d = Wv.shape[0]
    cdef Py_ssize_t k = Wv.shape[1]
    cdef Py_ssize_t bs = batch_size
    cdef double lrv = lr
    cdef double wd = weight_decay
    cdef Py_ssize_t start, size, i, j, a

    batch_X = np.empty((bs, d), dtype=np.float64)
    batch_y = np.empty(bs, dtype=np.int64)
    cdef double[:, ::1] bX = batch_X
    cdef long[::1] by = batch_y
    dW = np.empty((d, k), dtype=np.float64)
    db = np.empty(k, dtype=np.float64)
    cdef double[:, ::1] dWv = dW
    cdef double[::1] dbv = db

    start = 0
    while start < n:
        size = bs if start + bs <= n else n - start
        for i in range(size):
            by[i] = yv[orderv[start + i]]
            for a in range(d):
                bX[i, a] = Xv[orderv[start + i], a]
        _xent_grad_inner(bX[:size], Wv, bv, by[:size], dWv, dbv)
        if wd != 0.0:
            for a in range(d):
                for j in range(k):
                    dWv[a, j] += wd * Wv[a, j]
        for a in range(d):
            for j in range(k):
                Wv[a, j] -= lrv * dWv[a, j]
        for j in range(k):
            bv[j] -= lrv * dbv[j]
        start += bs


def confusion_counts(y_true, y_pred, k):
    """k x k int64 matrix; rows are true labels, columns predicted."""
    cdef const long[::1] t = np.ascontiguousarray(y_true, dtype=np.int64)
    cdef const long[::1] p = np.ascontiguousarray(y_pred, dtype=np.int64)
    counts = np.zeros((k, k), dtype=np.int64)
    cdef long[:, ::1] c = counts
    cdef Py_ssize_t i
    for i in range(t.shape[0]):
        c[t[i], p[i]] += 1
    return counts


cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


cdef inline int _popcount64(unsigned long long x) nogil:
    return __builtin_popcountll(x)


def hamming_first_within(candidate, kept, max_dist):
    """Index of the first hash in ``kept`` within Hamming distance, else -1."""
    cdef const unsigned long long[::1] ks = np.ascontiguousarray(kept, dtype=np.uint64)
    cdef unsigned long long c = candidate
    cdef int limit = max_dist
    cdef Py_ssize_t i
    for i in range(ks.shape[0]):
        if _popcount64(ks[i] ^ c) <= limit:
            return i
    return -1
