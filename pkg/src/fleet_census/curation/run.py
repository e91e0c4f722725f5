"""Curation orchestration: raw bytes in, clean vehicle crops + outcomes out.

Every raw image ends in exactly one recorded outcome; outcomes persist in
``curation_outcomes.jsonl`` so reruns skip finished work and reproduce the
same report. Accepted crops are written as PNG under ``images/`` and
appended to the dataset manifest with full provenance.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from PIL import Image

from ..dataset import ManifestEntry, append_entries, load_manifest
from ..errors import CurationError, ManifestError
from ..ingest.run import RAW_MANIFEST_NAME, RawImageRecord, load_raw_manifest
from .dedup import DEFAULT_HAMMING_THRESHOLD, dedup, dhash64
from .detect import (
    DEFAULT_CONFIDENCE_FLOOR,
    DEFAULT_VEHICLE_LABELS,
    Detection,
    DetectorAdapter,
    detect,
)
from .images import BoundingBox, crop_region, validate_bytes

OUTCOMES_NAME = "curation_outcomes.jsonl"
CURATED_DIR_NAME = "images"
CURATED_MANIFEST_NAME = "manifest.jsonl"

DEFAULT_MIN_CROP_SIDE = 64


class OutcomeKind(Enum):
    ACCEPTED = "accepted"
    REJECTED_CORRUPT = "rejected_corrupt"
    REJECTED_TYPE_MISMATCH = "rejected_type_mismatch"
    REJECTED_NO_VEHICLE = "rejected_no_vehicle"
    REJECTED_DUPLICATE = "rejected_duplicate"
    REJECTED_TOO_SMALL = "rejected_too_small"


@dataclass
class CurationConfig:
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR
    min_crop_side: int = DEFAULT_MIN_CROP_SIDE
    hamming_threshold: int = DEFAULT_HAMMING_THRESHOLD
    vehicle_labels: frozenset[str] = DEFAULT_VEHICLE_LABELS


@dataclass
class KeptCrop:
    box: BoundingBox
    image: Image.Image
    label: str
    confidence: float


@dataclass
class CropFilterResult:
    """Outcome of box selection for one image, before deduplication."""

    kind: OutcomeKind
    crops: list[KeptCrop] = field(default_factory=list)
    detail: str = ""


def crop_and_filter(
    image: Image.Image,
    detections: list[Detection],
    vehicle_labels=DEFAULT_VEHICLE_LABELS,
    min_crop_side: int = DEFAULT_MIN_CROP_SIDE,
) -> CropFilterResult:
    """Crop every vehicle-labelled detection; drop undersized crops.

    No vehicle labels -> rejected_no_vehicle. Vehicle boxes present but all
    below the minimum side -> rejected_too_small. Out-of-bounds boxes raise
    (detector bug, not a data condition).
    """
    vehicle_boxes = [d for d in detections if d.label in vehicle_labels]
    if not vehicle_boxes:
        return CropFilterResult(
            OutcomeKind.REJECTED_NO_VEHICLE,
            detail=f"labels present: {sorted({d.label for d in detections})}",
        )
    kept: list[KeptCrop] = []
    dropped = 0
    for detection in vehicle_boxes:
        if min(detection.box.width, detection.box.height) < min_crop_side:
            dropped += 1
            continue
        kept.append(
            KeptCrop(
                detection.box,
                crop_region(image, detection.box),
                detection.label,
                detection.confidence,
            )
        )
    if not kept:
        return CropFilterResult(
            OutcomeKind.REJECTED_TOO_SMALL,
            detail=f"{dropped} vehicle boxes under {min_crop_side}px",
        )
    return CropFilterResult(OutcomeKind.ACCEPTED, crops=kept)


@dataclass
class OutcomeRecord:
    content_hash: str
    kind: OutcomeKind
    vehicle_class: str
    detail: str = ""
    crop_hashes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "record": "outcome",
            "content_hash": self.content_hash,
            "kind": self.kind.value,
            "class": self.vehicle_class,
            "detail": self.detail,
            "crop_hashes": self.crop_hashes,
        }

    @classmethod
    def from_json(cls, data: dict) -> "OutcomeRecord":
        return cls(
            content_hash=data["content_hash"],
            kind=OutcomeKind(data["kind"]),
            vehicle_class=data["class"],
            detail=data.get("detail", ""),
            crop_hashes=list(data.get("crop_hashes", [])),
        )


def load_outcomes(path) -> dict[str, OutcomeRecord]:
    path = Path(path)
    if not path.exists():
        return {}
    outcomes: dict[str, OutcomeRecord] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = OutcomeRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: bad outcome ({exc})") from None
            outcomes[record.content_hash] = record
    return outcomes


@dataclass
class _CropCandidate:
    content_hash: str
    parent: RawImageRecord
    png_bytes: bytes
    label: str
    confidence: float
    box: BoundingBox
    phash: int


@dataclass
class CurationReport:
    inputs: int = 0
    per_outcome: dict[str, int] = field(default_factory=dict)
    per_class: dict[str, dict[str, int]] = field(default_factory=dict)
    accepted_crops: int = 0
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs,
            "per_outcome": dict(sorted(self.per_outcome.items())),
            "per_class": {
                k: dict(sorted(v.items())) for k, v in sorted(self.per_class.items())
            },
            "accepted_crops": self.accepted_crops,
            "failures": self.failures,
        }


def _encode_png(image: Image.Image) -> bytes:
    if image.mode not in ("1", "L", "LA", "P", "RGB", "RGBA"):
        image = image.convert("RGB")  # e.g. CMYK JPEGs, which PNG cannot hold
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def curate_run(
    ingest_root,
    detector: DetectorAdapter,
    out_root,
    config: CurationConfig | None = None,
) -> CurationReport:
    """Curate every raw record; idempotent by content hash across reruns."""
    config = config or CurationConfig()
    if detector is None:
        raise CurationError("a detector adapter is required")
    ingest_root = Path(ingest_root)
    raw_manifest_path = ingest_root / RAW_MANIFEST_NAME
    if not raw_manifest_path.exists():
        raise ManifestError(f"raw manifest not found: {raw_manifest_path}")
    raw_records = load_raw_manifest(raw_manifest_path)

    out_root = Path(out_root)
    curated_dir = out_root / CURATED_DIR_NAME
    curated_dir.mkdir(parents=True, exist_ok=True)
    outcomes_path = out_root / OUTCOMES_NAME
    manifest_path = out_root / CURATED_MANIFEST_NAME

    outcomes = load_outcomes(outcomes_path)
    curated = load_manifest(manifest_path)
    existing_phashes = [e.phash for e in curated if e.phash is not None]

    # one record per content hash, first manifest line wins
    unique: dict[str, RawImageRecord] = {}
    for record in raw_records:
        unique.setdefault(record.content_hash, record)
    ordered = [unique[h] for h in sorted(unique)]

    candidates: list[_CropCandidate] = []
    image_outcomes: dict[str, OutcomeRecord] = {}
    accepted_images: dict[str, list[_CropCandidate]] = {}
    failures: list[dict] = []

    for record in ordered:
        if record.content_hash in outcomes:
            continue
        path = ingest_root / record.stored_path
        try:
            validation = validate_bytes(path)
        except OSError:
            try:
                validation = validate_bytes(path)  # single retry on I/O failure
            except OSError as exc:
                failures.append(
                    {"content_hash": record.content_hash, "error": f"I/O: {exc}"}
                )
                continue
        cls = record.vehicle_class.value
        if not validation.ok:
            kind = (
                OutcomeKind.REJECTED_CORRUPT
                if validation.reason == "corrupt"
                else OutcomeKind.REJECTED_TYPE_MISMATCH
            )
            image_outcomes[record.content_hash] = OutcomeRecord(
                record.content_hash, kind, cls, validation.detail
            )
            continue
        try:
            detections = detect(
                validation.image, record.content_hash, detector,
                config.confidence_floor,
            )
        except CurationError as exc:
            failures.append({"content_hash": record.content_hash, "error": str(exc)})
            continue
        result = crop_and_filter(
            validation.image, detections, config.vehicle_labels, config.min_crop_side
        )
        if result.kind is not OutcomeKind.ACCEPTED:
            image_outcomes[record.content_hash] = OutcomeRecord(
                record.content_hash, result.kind, cls, result.detail
            )
            continue
        image_candidates = []
        for crop in result.crops:
            png = _encode_png(crop.image)
            candidate = _CropCandidate(
                content_hash=hashlib.sha256(png).hexdigest(),
                parent=record,
                png_bytes=png,
                label=crop.label,
                confidence=crop.confidence,
                box=crop.box,
                phash=dhash64(crop.image),
            )
            candidates.append(candidate)
            image_candidates.append(candidate)
        accepted_images[record.content_hash] = image_candidates

    kept, duplicates = dedup(
        candidates, config.hamming_threshold, existing_phashes
    )
    # identity, not hash: pixel-identical crops from two parents share a
    # content hash but only one candidate object was kept
    kept_ids = {id(c) for c in kept}

    new_entries: list[ManifestEntry] = []
    for parent_hash, image_candidates in accepted_images.items():
        surviving = [c for c in image_candidates if id(c) in kept_ids]
        cls = image_candidates[0].parent.vehicle_class.value
        if not surviving:
            dup_of = next(
                (duplicates.get(c.content_hash) for c in image_candidates), None
            )
            image_outcomes[parent_hash] = OutcomeRecord(
                parent_hash,
                OutcomeKind.REJECTED_DUPLICATE,
                cls,
                detail=f"duplicate of {dup_of}" if dup_of else "duplicate",
            )
            continue
        crop_hashes = []
        for candidate in surviving:
            relative = f"{CURATED_DIR_NAME}/{candidate.content_hash}.png"
            target = out_root / relative
            if not target.exists():
                tmp = target.with_suffix(".png.tmp")
                tmp.write_bytes(candidate.png_bytes)
                tmp.replace(target)
            parent = candidate.parent
            new_entries.append(
                ManifestEntry(
                    content_hash=candidate.content_hash,
                    stored_path=relative,
                    vehicle_class=parent.vehicle_class,
                    source=parent.source,
                    make=parent.make,
                    model=parent.model,
                    parent_hash=parent.content_hash,
                    phash=candidate.phash,
                    label=candidate.label,
                    confidence=candidate.confidence,
                )
            )
            crop_hashes.append(candidate.content_hash)
        image_outcomes[parent_hash] = OutcomeRecord(
            parent_hash, OutcomeKind.ACCEPTED, cls, crop_hashes=sorted(crop_hashes)
        )

    if new_entries:
        append_entries(manifest_path, new_entries)
    if image_outcomes:
        with open(outcomes_path, "a", encoding="utf-8") as fh:
            for content_hash in sorted(image_outcomes):
                fh.write(
                    json.dumps(image_outcomes[content_hash].to_json(), sort_keys=True)
                    + "\n"
                )
    outcomes.update(image_outcomes)

    report = CurationReport(inputs=len(ordered), failures=failures)
    for record in ordered:
        outcome = outcomes.get(record.content_hash)
        if outcome is None:
            continue
        report.per_outcome[outcome.kind.value] = (
            report.per_outcome.get(outcome.kind.value, 0) + 1
        )
        by_class = report.per_class.setdefault(outcome.vehicle_class, {})
        by_class[outcome.kind.value] = by_class.get(outcome.kind.value, 0) + 1
        report.accepted_crops += len(outcome.crop_hashes)
    return report
