"""Kernel backend selection.

Imports the compiled extension when it is available, otherwise the numpy
fallback. Set FLEET_CENSUS_PURE=1 to force the fallback (used by the
benchmark and by tests that compare the two backends).
"""

from __future__ import annotations

import os

from . import numpy_backend

if os.environ.get("FLEET_CENSUS_PURE"):
    _impl = numpy_backend
else:
    try:
        from fleet_census import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = numpy_backend

BACKEND = _impl.NAME

linear_xent_grad = _impl.linear_xent_grad
sgd_epoch = _impl.sgd_epoch
confusion_counts = _impl.confusion_counts
hamming_first_within = _impl.hamming_first_within


def available_backends():
    """Names of importable backends, compiled one first when present."""
    names = []
    try:
        from fleet_census import _native  # noqa: F401
        names.append(_native.NAME)
    except ImportError:
        pass
    names.append(numpy_backend.NAME)
    return names
