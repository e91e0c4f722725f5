"""Perceptual-hash deduplication of curated crops.

The fingerprint is a 64-bit difference hash: grayscale, bilinear resize to
9x8, one bit per horizontally adjacent pixel pair (1 when the right pixel
is brighter), row-major with the first pair in the most significant bit.

Deduplication is a greedy leader scan in canonical order: candidates are
visited sorted by content hash ascending, and a candidate is kept only if
no already-kept hash lies within the Hamming threshold. The canonical sort
makes the kept set independent of input order.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np
from PIL import Image

from .. import kernels

DEFAULT_HAMMING_THRESHOLD = 4


def dhash64(image: Image.Image) -> int:
    gray = image.convert("L").resize((9, 8), Image.Resampling.BILINEAR)
    pixels = gray.tobytes()  # row-major, 9 per row
    bits = 0
    for row in range(8):
        base = row * 9
        for col in range(8):
            bits = (bits << 1) | (1 if pixels[base + col + 1] > pixels[base + col] else 0)
    return bits


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def dedup(
    records: Sequence,
    threshold: int = DEFAULT_HAMMING_THRESHOLD,
    existing_phashes: Optional[Iterable[int]] = None,
) -> tuple[list, dict]:
    """Split records into (kept, duplicates keyed by content_hash).

    Records need ``content_hash`` and ``phash`` attributes. Hashes in
    ``existing_phashes`` act as pre-established leaders (earlier runs):
    anything within the threshold of one is a duplicate.
    """
    ordered = sorted(records, key=lambda r: r.content_hash)
    leaders = list(existing_phashes or ())
    phashes = np.empty(len(leaders) + len(ordered), dtype=np.uint64)
    for i, value in enumerate(leaders):
        phashes[i] = value
    count = len(leaders)

    kept = []
    duplicates = {}
    for record in ordered:
        hit = kernels.hamming_first_within(record.phash, phashes[:count], threshold)
        if hit >= 0:
            of = kept[hit - len(leaders)].content_hash if hit >= len(leaders) else None
            duplicates[record.content_hash] = of
        else:
            phashes[count] = record.phash
            count += 1
            kept.append(record)
    return kept, duplicates
