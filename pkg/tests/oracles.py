"""Independent oracles used by the test suite.

``pairs_from_percent_matrix`` derives an integer-count prediction fixture
from a row-normalized percentage matrix: each row's percentages are scaled
to the class size and apportioned to integers by the largest-remainder
method (floors first, then one extra count per highest fractional part,
ties broken toward the lower column index). The realized cell differs from
the requested percentage by at most 1/class_size in proportion terms, and
rows whose published percentages do not sum to exactly 100 absorb the
excess in their highest-remainder cells.

Run ``python tests/oracles.py`` to print the derivation for the published
vehicle-classifier confusion grid used in the acceptance suite.
"""

from __future__ import annotations

import numpy as np

# Published normalized confusion grid (percent, two decimals) of a
# four-class vehicle classifier on a 7200-image balanced test sample,
# re-ordered to this package's class order:
# light_duty, medium_duty, heavy_duty, non_logistic.
REFERENCE_GRID_PCT = [
    [84.71, 7.97, 0.91, 6.42],   # true light_duty
    [6.93, 88.07, 3.01, 1.99],   # true medium_duty
    [1.19, 2.25, 95.94, 0.63],   # true heavy_duty
    [4.40, 0.86, 0.62, 94.11],   # true non_logistic
]
REFERENCE_CLASS_SIZE = 1800


def apportion_largest_remainder(targets, total):
    """Integers summing to ``total`` closest to the real-valued targets."""
    floors = [int(t) for t in targets]
    shortfall = total - sum(floors)
    if shortfall < 0:
        raise ValueError("targets exceed the requested total")
    remainders = sorted(
        range(len(targets)),
        key=lambda i: (-(targets[i] - floors[i]), i),
    )
    counts = list(floors)
    for i in remainders[:shortfall]:
        counts[i] += 1
    return counts


def counts_from_percent_matrix(grid_pct, class_size):
    """Per-row integer prediction counts for a percent grid."""
    return [
        apportion_largest_remainder(
            [p * class_size / 100.0 for p in row], class_size
        )
        for row in grid_pct
    ]


def pairs_from_percent_matrix(grid_pct, class_size):
    """(y_true, y_pred) arrays realizing the grid as integer counts."""
    y_true, y_pred = [], []
    for true_cls, row in enumerate(counts_from_percent_matrix(grid_pct, class_size)):
        for pred_cls, count in enumerate(row):
            y_true.extend([true_cls] * count)
            y_pred.extend([pred_cls] * count)
    return np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)


def brute_force_confusion(y_true, y_pred, k):
    """O(n * k^2) recount, deliberately independent of the library path."""
    counts = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        for j in range(k):
            for t, p in zip(y_true, y_pred):
                if t == i and p == j:
                    counts[i, j] += 1
    return counts


def main():
    counts = counts_from_percent_matrix(REFERENCE_GRID_PCT, REFERENCE_CLASS_SIZE)
    total = REFERENCE_CLASS_SIZE * len(REFERENCE_GRID_PCT)
    diag = sum(counts[i][i] for i in range(len(counts)))
    print(f"class size: {REFERENCE_CLASS_SIZE}, total: {total}")
    for row_pct, row_counts in zip(REFERENCE_GRID_PCT, counts):
        realized = [100.0 * c / REFERENCE_CLASS_SIZE for c in row_counts]
        drift = max(abs(r - p) for r, p in zip(realized, row_pct))
        print(f"  target {row_pct} -> counts {row_counts} "
              f"(max drift {drift:.4f} pct points)")
    print(f"overall accuracy: {100.0 * diag / total:.4f}%")


if __name__ == "__main__":
    main()
