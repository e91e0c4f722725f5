#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Run after an editable install:

    python benchmarks/bench_kernels.py [--epochs 5] [--rows 20000] [--dim 1280]

Prints one row per kernel and backend with wall-clock timings and the
speedup of the compiled path.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fleet_census.kernels import numpy_backend

try:
    from fleet_census import _native as native
except ImportError:
    native = None


def time_call(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def bench_sgd(backend, X, y, batch_size, lr):
    W = np.zeros((X.shape[1], 4))
    b = np.zeros(4)
    order = np.arange(X.shape[0], dtype=np.int64)

    def run():
        backend.sgd_epoch(X, y, W, b, order, batch_size, lr, 1e-4)

    return time_call(run)


def bench_loss_grad(backend, X, y):
    W = np.zeros((X.shape[1], 4))
    b = np.zeros(4)
    return time_call(lambda: backend.linear_xent_grad(X, W, b, y))


def bench_confusion(backend, y_true, y_pred):
    return time_call(lambda: backend.confusion_counts(y_true, y_pred, 4))


def bench_hamming(backend, kept, candidates, threshold=4):
    def run():
        for candidate in candidates:
            backend.hamming_first_within(candidate, kept, threshold)

    return time_call(run)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=20_000)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((args.rows, args.dim))
    y = rng.integers(0, 4, size=args.rows)
    y_true = rng.integers(0, 4, size=1_000_000)
    y_pred = rng.integers(0, 4, size=1_000_000)
    kept = rng.integers(0, 2**63, size=50_000, dtype=np.int64).astype(np.uint64)
    candidates = [int(v) for v in rng.integers(0, 2**63, size=200)]

    cases = [
        ("sgd_epoch", lambda b: bench_sgd(b, X, y, args.batch_size, 0.01)),
        ("full_batch_loss_grad", lambda b: bench_loss_grad(b, X, y)),
        ("confusion_counts_1e6", lambda b: bench_confusion(b, y_true, y_pred)),
        ("hamming_scan_200x50k", lambda b: bench_hamming(b, kept, candidates)),
    ]

    print(f"rows={args.rows} dim={args.dim} batch_size={args.batch_size}")
    print(f"{'kernel':<24}{'numpy':>12}{'native':>12}{'speedup':>10}")
    for name, runner in cases:
        numpy_time = runner(numpy_backend)
        if native is None:
            print(f"{name:<24}{numpy_time:>11.4f}s{'n/a':>12}{'n/a':>10}")
            continue
        native_time = runner(native)
        speedup = numpy_time / native_time if native_time > 0 else float("inf")
        print(f"{name:<24}{numpy_time:>11.4f}s{native_time:>11.4f}s{speedup:>9.2f}x")


if __name__ == "__main__":
    main()
