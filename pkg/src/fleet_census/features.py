"""Binary feature store: fixed-dimension float32 vectors keyed by image hash.

Layout (all integers little-endian):

    magic   4 bytes  b"FCFS"
    version u32      currently 1
    dim     u32      vector width D, > 0
    count   u64      number of rows
    id_len  u32      length of the backbone identifier in bytes
    id      id_len bytes, UTF-8
    rows    count * (32-byte content hash + u8 label + D * f32)

Rows are stored sorted ascending by hash bytes; the writer enforces the
order so stores are byte-comparable across runs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError
from .taxonomy import NUM_CLASSES

MAGIC = b"FCFS"
VERSION = 1
HASH_BYTES = 32


def _hash_to_bytes(content_hash) -> bytes:
    if isinstance(content_hash, bytes):
        raw = content_hash
    else:
        raw = bytes.fromhex(content_hash)
    if len(raw) != HASH_BYTES:
        raise FormatError(f"content hash must be {HASH_BYTES} bytes, got {len(raw)}")
    return raw


@dataclass
class FeatureStore:
    """In-memory view of a store file: parallel hash/label/vector arrays."""

    backbone_id: str
    dim: int
    hashes: list[bytes]          # 32-byte digests, ascending
    labels: np.ndarray           # (n,) uint8
    vectors: np.ndarray          # (n, dim) float32

    def __len__(self) -> int:
        return len(self.hashes)

    @property
    def hex_hashes(self) -> list[str]:
        return [h.hex() for h in self.hashes]

    def index_by_hash(self) -> dict[str, int]:
        return {h.hex(): i for i, h in enumerate(self.hashes)}


def write_feature_store(path, backbone_id: str, rows: Iterable[tuple], dim: int) -> int:
    """Write rows of (content_hash, label, vector); returns the row count.

    Rows are sorted by hash bytes before writing. Labels must be in
    [0, NUM_CLASSES); vectors must be finite and of width ``dim``.
    """
    prepared = []
    for content_hash, label, vector in rows:
        raw = _hash_to_bytes(content_hash)
        label = int(label)
        if not 0 <= label < NUM_CLASSES:
            raise FormatError(f"label {label} outside [0, {NUM_CLASSES})")
        vec = np.asarray(vector, dtype=np.float32).reshape(-1)
        if vec.shape[0] != dim:
            raise FormatError(f"vector width {vec.shape[0]} != dim {dim}")
        if not np.all(np.isfinite(vec)):
            raise FormatError(f"non-finite feature values for {raw.hex()}")
        prepared.append((raw, label, vec))
    prepared.sort(key=lambda row: row[0])

    id_bytes = backbone_id.encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", dim))
        fh.write(struct.pack("<Q", len(prepared)))
        fh.write(struct.pack("<I", len(id_bytes)))
        fh.write(id_bytes)
        for raw, label, vec in prepared:
            fh.write(raw)
            fh.write(struct.pack("<B", label))
            fh.write(vec.astype("<f4").tobytes())
    tmp.replace(path)
    return len(prepared)


def _read_header(fh, path):
    head = fh.read(4 + 4 + 4 + 8 + 4)
    if len(head) < 24:
        raise FormatError(f"{path}: truncated header")
    magic, version, dim, count, id_len = struct.unpack("<4sIIQI", head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise FormatError(f"{path}: dim must be positive")
    id_bytes = fh.read(id_len)
    if len(id_bytes) != id_len:
        raise FormatError(f"{path}: truncated backbone id")
    try:
        backbone_id = id_bytes.decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError(f"{path}: backbone id is not valid UTF-8") from None
    return backbone_id, dim, count


def read_feature_store(path) -> FeatureStore:
    path = Path(path)
    with open(path, "rb") as fh:
        backbone_id, dim, count = _read_header(fh, path)
        row_size = HASH_BYTES + 1 + 4 * dim
        payload = fh.read()
    if len(payload) != count * row_size:
        raise FormatError(
            f"{path}: expected {count * row_size} row bytes, found {len(payload)}"
        )
    hashes = []
    labels = np.empty(count, dtype=np.uint8)
    vectors = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        base = i * row_size
        hashes.append(payload[base:base + HASH_BYTES])
        labels[i] = payload[base + HASH_BYTES]
        vectors[i] = np.frombuffer(
            payload, dtype="<f4", count=dim, offset=base + HASH_BYTES + 1
        )
    return FeatureStore(backbone_id, dim, hashes, labels, vectors)


@dataclass
class FormatReport:
    errors: list[str]
    warnings: list[str]

    @property
    def ok(self) -> bool:
        return not self.errors


def check_feature_store(path, expected_dim=None, manifest_hashes=None) -> FormatReport:
    """Validate a store file; structural problems are errors, hygiene
    problems (unsorted rows, duplicates, hashes missing from the manifest)
    are warnings."""
    errors: list[str] = []
    warnings: list[str] = []
    try:
        store = read_feature_store(path)
    except FormatError as exc:
        return FormatReport([str(exc)], [])
    except OSError as exc:
        return FormatReport([f"cannot read {path}: {exc}"], [])

    if expected_dim is not None and store.dim != expected_dim:
        errors.append(f"dim {store.dim} != expected {expected_dim}")
    if not store.backbone_id:
        warnings.append("empty backbone id")
    bad_labels = np.nonzero(store.labels >= NUM_CLASSES)[0]
    if bad_labels.size:
        errors.append(
            f"{bad_labels.size} rows with label outside [0, {NUM_CLASSES}) "
            f"(first at row {int(bad_labels[0])})"
        )
    if not np.all(np.isfinite(store.vectors)):
        errors.append("non-finite feature values")
    for i in range(1, len(store.hashes)):
        if store.hashes[i - 1] > store.hashes[i]:
            warnings.append(f"rows not sorted by hash at row {i}")
            break
    if len(set(store.hashes)) != len(store.hashes):
        warnings.append("duplicate content hashes")
    if manifest_hashes is not None:
        known = set(manifest_hashes)
        missing = [h for h in store.hex_hashes if h not in known]
        if missing:
            warnings.append(
                f"{len(missing)} rows not present in the manifest "
                f"(first: {missing[0]})"
            )
    return FormatReport(errors, warnings)
