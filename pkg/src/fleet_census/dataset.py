"""Persistent dataset manifest with balancing and stratified splitting.

The manifest is an append-only UTF-8 JSON-lines log. Three record kinds:

    {"record": "entry", "schema_version": 1, ...}      one curated image
    {"record": "quarantine", "content_hash": ..., "value": true|false}
    {"record": "split", "content_hash": ..., "split": "train"|"test"}

Later records override earlier state for the same hash; ``compact``
rewrites the log to one folded entry per image. All writers take a file
lock; readers never need one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

from filelock import FileLock

from .errors import BalanceError, ManifestError, SplitError
from .ingest.plan import SourceKind
from .rng import SplitMix64, derive_seed
from .taxonomy import CLASS_ORDER, VehicleClass

SCHEMA_VERSION = 1

SPLIT_UNASSIGNED = "unassigned"
SPLIT_TRAIN = "train"
SPLIT_TEST = "test"


@dataclass(frozen=True)
class ManifestEntry:
    content_hash: str
    stored_path: str
    vehicle_class: VehicleClass
    source: SourceKind
    make: str
    model: str
    split: str = SPLIT_UNASSIGNED
    quarantined: bool = False
    # crop provenance, optional
    parent_hash: Optional[str] = None
    phash: Optional[int] = None
    label: Optional[str] = None
    confidence: Optional[float] = None

    def to_json(self) -> dict:
        data = {
            "record": "entry",
            "schema_version": SCHEMA_VERSION,
            "content_hash": self.content_hash,
            "stored_path": self.stored_path,
            "class": self.vehicle_class.value,
            "source": self.source.value,
            "make": self.make,
            "model": self.model,
            "split": self.split,
            "quarantined": self.quarantined,
        }
        if self.parent_hash is not None:
            data["parent_hash"] = self.parent_hash
        if self.phash is not None:
            data["phash"] = format(self.phash, "016x")
        if self.label is not None:
            data["label"] = self.label
        if self.confidence is not None:
            data["confidence"] = self.confidence
        return data

    @classmethod
    def from_json(cls, data: dict) -> "ManifestEntry":
        phash = data.get("phash")
        return cls(
            content_hash=data["content_hash"],
            stored_path=data["stored_path"],
            vehicle_class=VehicleClass.parse(data["class"]),
            source=SourceKind.parse(data["source"]),
            make=data["make"],
            model=data["model"],
            split=data.get("split", SPLIT_UNASSIGNED),
            quarantined=bool(data.get("quarantined", False)),
            parent_hash=data.get("parent_hash"),
            phash=int(phash, 16) if phash is not None else None,
            label=data.get("label"),
            confidence=data.get("confidence"),
        )


class DatasetManifest:
    """Folded view of a manifest log, ordered by first appearance."""

    def __init__(self, entries: Iterable[ManifestEntry]):
        self.entries: list[ManifestEntry] = []
        self._by_hash: dict[str, int] = {}
        for entry in entries:
            if entry.content_hash in self._by_hash:
                raise ManifestError(f"duplicate content hash {entry.content_hash}")
            self._by_hash[entry.content_hash] = len(self.entries)
            self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, content_hash: str) -> Optional[ManifestEntry]:
        index = self._by_hash.get(content_hash)
        return self.entries[index] if index is not None else None

    def active_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if not e.quarantined]

    def entries_for_class(self, vehicle_class: VehicleClass) -> list[ManifestEntry]:
        return [e for e in self.active_entries() if e.vehicle_class == vehicle_class]


def _lock_for(path: Path) -> FileLock:
    return FileLock(str(path) + ".lock")


def load_manifest(path) -> DatasetManifest:
    """Fold the log: later quarantine/split records override entry state."""
    path = Path(path)
    if not path.exists():
        return DatasetManifest([])
    ordered: list[str] = []
    state: dict[str, ManifestEntry] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: not valid JSON ({exc})") from None
            kind = data.get("record")
            try:
                if kind == "entry":
                    entry = ManifestEntry.from_json(data)
                    if entry.content_hash not in state:
                        ordered.append(entry.content_hash)
                    state[entry.content_hash] = entry
                elif kind == "quarantine":
                    entry = state[data["content_hash"]]
                    state[entry.content_hash] = replace(
                        entry, quarantined=bool(data.get("value", True))
                    )
                elif kind == "split":
                    split = data["split"]
                    if split not in (SPLIT_TRAIN, SPLIT_TEST, SPLIT_UNASSIGNED):
                        raise ManifestError(
                            f"{path}:{lineno}: unknown split {split!r}"
                        )
                    entry = state[data["content_hash"]]
                    state[entry.content_hash] = replace(entry, split=split)
                else:
                    raise ManifestError(f"{path}:{lineno}: unknown record {kind!r}")
            except KeyError as exc:
                raise ManifestError(
                    f"{path}:{lineno}: record references unknown field or hash ({exc})"
                ) from None
    return DatasetManifest(state[h] for h in ordered)


def append_entries(path, entries: Iterable[ManifestEntry]) -> int:
    path = Path(path)
    entries = list(entries)
    with _lock_for(path):
        with open(path, "a", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
    return len(entries)


def mark_quarantined(path, content_hash: str, value: bool = True) -> None:
    path = Path(path)
    with _lock_for(path):
        manifest = load_manifest(path)
        if manifest.get(content_hash) is None:
            raise ManifestError(f"no manifest entry with hash {content_hash}")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(
                {"record": "quarantine", "content_hash": content_hash, "value": value},
                sort_keys=True,
            ) + "\n")


def assign_splits(path, assignments: dict[str, str]) -> None:
    path = Path(path)
    with _lock_for(path):
        manifest = load_manifest(path)
        missing = [h for h in assignments if manifest.get(h) is None]
        if missing:
            raise ManifestError(
                f"{len(missing)} split hashes not in the manifest (first: {missing[0]})"
            )
        with open(path, "a", encoding="utf-8") as fh:
            for content_hash in sorted(assignments):
                fh.write(json.dumps(
                    {"record": "split", "content_hash": content_hash,
                     "split": assignments[content_hash]},
                    sort_keys=True,
                ) + "\n")


def compact(path) -> int:
    """Rewrite the log as one folded entry line per image."""
    path = Path(path)
    with _lock_for(path):
        manifest = load_manifest(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for entry in manifest:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
        tmp.replace(path)
    return len(manifest)


@dataclass
class BalanceResult:
    """Seeded per-class selection; strict mode equalizes to the smallest
    class. selected maps class value -> content hashes."""

    selected: dict[str, list[str]]
    per_class_requested: int
    shortfalls: dict[str, int] = field(default_factory=dict)  # class -> available
    common_size: int = 0

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.selected.values())

    def all_hashes(self) -> list[str]:
        out: list[str] = []
        for vehicle_class in CLASS_ORDER:
            out.extend(self.selected[vehicle_class.value])
        return out

    def to_dict(self) -> dict:
        return {
            "per_class_requested": self.per_class_requested,
            "common_size": self.common_size,
            "shortfalls": dict(sorted(self.shortfalls.items())),
            "counts": {k: len(v) for k, v in sorted(self.selected.items())},
            "selected": {k: v for k, v in sorted(self.selected.items())},
        }


def balance(
    manifest: DatasetManifest,
    per_class: int,
    seed: int,
    equalize: bool = False,
) -> BalanceResult:
    """Sample min(per_class, available) entries per class, uniformly
    without replacement. Quarantined entries never participate. With
    ``equalize`` every class is cut to the common achievable size.
    """
    if per_class < 1:
        raise BalanceError(f"per-class size must be >= 1, got {per_class}")
    pools: dict[VehicleClass, list[str]] = {}
    for vehicle_class in CLASS_ORDER:
        hashes = sorted(
            e.content_hash for e in manifest.entries_for_class(vehicle_class)
        )
        if not hashes:
            raise BalanceError(f"class {vehicle_class.value} has no entries")
        pools[vehicle_class] = hashes

    shortfalls = {
        c.value: len(pool) for c, pool in pools.items() if len(pool) < per_class
    }
    common = min(min(len(pool) for pool in pools.values()), per_class)

    selected: dict[str, list[str]] = {}
    for index, vehicle_class in enumerate(CLASS_ORDER):
        pool = pools[vehicle_class]
        k = common if equalize else min(per_class, len(pool))
        gen = SplitMix64(derive_seed(seed, "balance", index))
        selected[vehicle_class.value] = sorted(gen.sample(pool, k))
    return BalanceResult(
        selected=selected,
        per_class_requested=per_class,
        shortfalls=shortfalls,
        common_size=common,
    )


def split(
    balanced: BalanceResult,
    test_fraction: float,
    seed: int,
) -> dict[str, str]:
    """Stratified assignment over a balanced selection.

    Per class, round(test_fraction * class_size) entries (half-up) become
    test after a seeded shuffle of the hash-sorted pool; the rest are
    train. Pure function of (selection, fraction, seed).
    """
    if not 0.0 < test_fraction < 1.0:
        raise SplitError(f"test fraction must be in (0, 1), got {test_fraction}")
    if balanced.total == 0:
        raise SplitError("balanced selection is empty")
    assignments: dict[str, str] = {}
    for index, vehicle_class in enumerate(CLASS_ORDER):
        pool = sorted(balanced.selected[vehicle_class.value])
        n = len(pool)
        n_test = int(test_fraction * n + 0.5)
        if n > 0 and n_test == 0:
            raise SplitError(
                f"fraction {test_fraction} yields zero test entries for class "
                f"{vehicle_class.value} (size {n})"
            )
        gen = SplitMix64(derive_seed(seed, "split", index))
        shuffled = list(pool)
        gen.shuffle(shuffled)
        for content_hash in shuffled[:n_test]:
            assignments[content_hash] = SPLIT_TEST
        for content_hash in shuffled[n_test:]:
            assignments[content_hash] = SPLIT_TRAIN
    return assignments


@dataclass
class ManifestStats:
    total: int
    quarantined: int
    per_class: dict[str, int]
    per_source: dict[str, int]
    per_split: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "quarantined": self.quarantined,
            "per_class": dict(sorted(self.per_class.items())),
            "per_source": dict(sorted(self.per_source.items())),
            "per_split": dict(sorted(self.per_split.items())),
        }


def stats(manifest: DatasetManifest) -> ManifestStats:
    """Counts over non-quarantined entries; they sum to size - quarantined."""
    active = manifest.active_entries()
    per_class: dict[str, int] = {}
    per_source: dict[str, int] = {}
    per_split: dict[str, int] = {}
    for entry in active:
        per_class[entry.vehicle_class.value] = per_class.get(entry.vehicle_class.value, 0) + 1
        per_source[entry.source.value] = per_source.get(entry.source.value, 0) + 1
        per_split[entry.split] = per_split.get(entry.split, 0) + 1
    return ManifestStats(
        total=len(manifest),
        quarantined=len(manifest) - len(active),
        per_class=per_class,
        per_source=per_source,
        per_split=per_split,
    )
