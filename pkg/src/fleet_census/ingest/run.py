"""Fetch orchestration: politeness, retries, hash-idempotent persistence."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from ..errors import ConfigError, FetchError, ManifestError, SourceRefusedError
from ..taxonomy import VehicleClass
from .adapters import SourceAdapter
from .plan import PlanEntry, QueryPlan, SourceKind

RAW_MANIFEST_NAME = "raw_manifest.jsonl"
RAW_DIR_NAME = "raw"

# extensions preserved from the origin; anything else is stored as .bin
_KNOWN_SUFFIXES = {".jpg", ".jpeg", ".png", ".gif", ".bmp", ".webp"}


@dataclass
class PolitenessConfig:
    max_attempts: int = 3
    backoff_initial_s: float = 0.5
    backoff_factor: float = 2.0


@dataclass(frozen=True)
class RawImageRecord:
    content_hash: str
    origin: str
    source: SourceKind
    make: str
    model: str
    vehicle_class: VehicleClass
    fetched_at: float
    byte_size: int
    stored_path: str  # relative to the ingest output root

    def to_json(self) -> dict:
        return {
            "record": "raw_image",
            "content_hash": self.content_hash,
            "origin": self.origin,
            "source": self.source.value,
            "make": self.make,
            "model": self.model,
            "class": self.vehicle_class.value,
            "fetched_at": self.fetched_at,
            "byte_size": self.byte_size,
            "stored_path": self.stored_path,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RawImageRecord":
        return cls(
            content_hash=data["content_hash"],
            origin=data["origin"],
            source=SourceKind.parse(data["source"]),
            make=data["make"],
            model=data["model"],
            vehicle_class=VehicleClass.parse(data["class"]),
            fetched_at=float(data["fetched_at"]),
            byte_size=int(data["byte_size"]),
            stored_path=data["stored_path"],
        )


def load_raw_manifest(path) -> list[RawImageRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RawImageRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: bad record ({exc})") from None
    return records


@dataclass
class EntryEvent:
    entry: PlanEntry
    kind: str  # "shortfall" | "failure" | "refused"
    detail: str
    got: int = 0

    def to_json(self) -> dict:
        return {
            "make": self.entry.make,
            "model": self.entry.model,
            "source": self.entry.source.value,
            "kind": self.kind,
            "detail": self.detail,
            "got": self.got,
            "target": self.entry.target,
        }


@dataclass
class IngestReport:
    per_class: dict[str, int] = field(default_factory=dict)
    per_source: dict[str, int] = field(default_factory=dict)
    new_records: int = 0
    skipped_existing: int = 0
    events: list[EntryEvent] = field(default_factory=list)

    @property
    def all_skipped(self) -> bool:
        return self.new_records == 0 and self.skipped_existing > 0

    def to_dict(self) -> dict:
        return {
            "per_class": dict(sorted(self.per_class.items())),
            "per_source": dict(sorted(self.per_source.items())),
            "new_records": self.new_records,
            "skipped_existing": self.skipped_existing,
            "all_skipped": self.all_skipped,
            "events": [e.to_json() for e in self.events],
        }


def _suffix_for(origin: str) -> str:
    suffix = Path(origin.split("?", 1)[0]).suffix.lower()
    return suffix if suffix in _KNOWN_SUFFIXES else ".bin"


class _Writer:
    """Single writer for record persistence: bytes first, then the manifest
    line, both under one lock shared by all fetch workers."""

    def __init__(self, out_root: Path, known_hashes: set[str]):
        self.out_root = out_root
        self.raw_dir = out_root / RAW_DIR_NAME
        self.manifest_path = out_root / RAW_MANIFEST_NAME
        self.known = set(known_hashes)
        self.lock = threading.Lock()
        self.new_records = 0
        self.skipped_existing = 0
        self.per_class: dict[str, int] = {}
        self.per_source: dict[str, int] = {}

    def persist(self, entry: PlanEntry, origin: str, payload: bytes, fetched_at: float) -> bool:
        """Returns True when a record was persisted.

        Hashes already in the manifest before this run are skipped (rerun
        idempotence); duplicates fetched within one run are all recorded,
        since deduplication is curation's job.
        """
        content_hash = hashlib.sha256(payload).hexdigest()
        with self.lock:
            if content_hash in self.known:
                self.skipped_existing += 1
                return False
            relative = f"{RAW_DIR_NAME}/{content_hash}{_suffix_for(origin)}"
            target = self.out_root / relative
            if not target.exists():
                tmp = target.with_suffix(target.suffix + ".tmp")
                tmp.write_bytes(payload)
                tmp.replace(target)
            record = RawImageRecord(
                content_hash=content_hash,
                origin=origin,
                source=entry.source,
                make=entry.make,
                model=entry.model,
                vehicle_class=entry.vehicle_class,
                fetched_at=fetched_at,
                byte_size=len(payload),
                stored_path=relative,
            )
            with open(self.manifest_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
            self.new_records += 1
            key = entry.vehicle_class.value
            self.per_class[key] = self.per_class.get(key, 0) + 1
            skey = entry.source.value
            self.per_source[skey] = self.per_source.get(skey, 0) + 1
            return True


def fetch_entry(
    entry: PlanEntry,
    adapter: SourceAdapter,
    writer: _Writer,
    politeness: PolitenessConfig,
    clock=time.time,
    sleep=time.sleep,
) -> list[EntryEvent]:
    """Fetch one plan entry with retry/backoff; returns entry-level events.

    Transient FetchErrors restart the entry up to max_attempts with
    exponential backoff; refusals skip the entry with a reason. Partial
    results always stay persisted; a shortfall event notes the gap.
    """
    events: list[EntryEvent] = []
    got = 0
    attempt = 0
    exhausted_reason = None
    while True:
        attempt += 1
        try:
            for item in adapter.results(entry, entry.target - got):
                writer.persist(entry, item.origin, item.payload, clock())
                got += 1
                if got >= entry.target:
                    break
            break
        except SourceRefusedError as exc:
            events.append(EntryEvent(entry, "refused", str(exc), got=got))
            return events
        except FetchError as exc:
            if attempt >= politeness.max_attempts:
                exhausted_reason = str(exc)
                break
            sleep(
                politeness.backoff_initial_s
                * politeness.backoff_factor ** (attempt - 1)
            )
    if exhausted_reason is not None:
        events.append(
            EntryEvent(
                entry, "failure",
                f"gave up after {attempt} attempts: {exhausted_reason}", got=got,
            )
        )
    elif got < entry.target:
        events.append(
            EntryEvent(entry, "shortfall", "source exhausted", got=got)
        )
    return events


def ingest_run(
    plan: QueryPlan,
    adapters: Mapping[SourceKind, SourceAdapter],
    out_root,
    politeness: Optional[PolitenessConfig] = None,
    max_workers: int = 4,
    clock=time.time,
    sleep=time.sleep,
) -> IngestReport:
    """Run every plan entry; idempotent by content hash across runs."""
    politeness = politeness or PolitenessConfig()
    missing = {e.source for e in plan.entries} - set(adapters)
    if missing:
        raise ConfigError(
            [f"no adapter for source {s.value}" for s in sorted(missing, key=lambda s: s.value)]
        )
    out_root = Path(out_root)
    try:
        (out_root / RAW_DIR_NAME).mkdir(parents=True, exist_ok=True)
        probe = out_root / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigError([f"output root {out_root} is not writable: {exc}"]) from exc

    existing = {r.content_hash for r in load_raw_manifest(out_root / RAW_MANIFEST_NAME)}
    writer = _Writer(out_root, existing)

    semaphores = {
        kind: threading.Semaphore(max(1, adapter.max_parallel))
        for kind, adapter in adapters.items()
    }

    def work(entry: PlanEntry) -> list[EntryEvent]:
        with semaphores[entry.source]:
            return fetch_entry(
                entry, adapters[entry.source], writer, politeness, clock, sleep
            )

    report = IngestReport()
    if plan.entries:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            for events in pool.map(work, plan.entries):
                report.events.extend(events)
    report.per_class = writer.per_class
    report.per_source = writer.per_source
    report.new_records = writer.new_records
    report.skipped_existing = writer.skipped_existing
    return report
