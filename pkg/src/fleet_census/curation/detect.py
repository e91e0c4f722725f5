"""Detections and the sidecar file format shared with the extraction tool.

A sidecar is UTF-8 JSON lines. The first line is a meta record
``{"detections_schema": 1, "detector_id": "..."}``; every following line is
one detection:

    {"content_hash": ..., "label": ..., "confidence": ...,
     "x": ..., "y": ..., "width": ..., "height": ...}

keyed by the content hash of the raw image the box belongs to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol

from PIL import Image

from ..errors import CurationError, ValidationError
from ..features import FormatReport
from .images import BoundingBox

DETECTIONS_SCHEMA = 1

# default detector vocabulary counted as vehicles; configurable per run
DEFAULT_VEHICLE_LABELS = frozenset({"car", "truck", "bus", "van"})

DEFAULT_CONFIDENCE_FLOOR = 0.5


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    box: BoundingBox

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence must be in [0, 1]: {self.confidence}")


class DetectorAdapter(Protocol):
    """Per-image detector; max_parallel declares its own concurrency cap."""

    max_parallel: int

    def detect(self, content_hash: str, image: Image.Image) -> list[Detection]:
        ...


def filter_by_confidence(detections, floor: float) -> list[Detection]:
    return [d for d in detections if d.confidence >= floor]


def detect(image: Image.Image, content_hash: str, adapter: DetectorAdapter,
           confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR) -> list[Detection]:
    """Adapter detections with the confidence floor applied."""
    try:
        found = adapter.detect(content_hash, image)
    except Exception as exc:
        raise CurationError(f"detector failed on {content_hash}: {exc}") from exc
    return filter_by_confidence(found, confidence_floor)


def write_detections(path, items: Iterable[tuple[str, Detection]],
                     detector_id: str = "unknown") -> int:
    """Write a sidecar file; returns the number of detection lines."""
    path = Path(path)
    count = 0
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(
            {"detections_schema": DETECTIONS_SCHEMA, "detector_id": detector_id},
            sort_keys=True,
        ) + "\n")
        for content_hash, detection in items:
            fh.write(json.dumps({
                "content_hash": content_hash,
                "label": detection.label,
                "confidence": detection.confidence,
                "x": detection.box.x,
                "y": detection.box.y,
                "width": detection.box.width,
                "height": detection.box.height,
            }, sort_keys=True) + "\n")
            count += 1
    tmp.replace(path)
    return count


def _parse_detection_line(data: dict) -> tuple[str, Detection]:
    box = BoundingBox(
        int(data["x"]), int(data["y"]), int(data["width"]), int(data["height"])
    )
    return str(data["content_hash"]), Detection(
        str(data["label"]), float(data["confidence"]), box
    )


def read_detections(path) -> tuple[dict, dict[str, list[Detection]]]:
    """Returns (meta record, detections grouped by content hash)."""
    path = Path(path)
    meta: dict = {}
    grouped: dict[str, list[Detection]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CurationError(f"{path}:{lineno}: not valid JSON ({exc})") from None
            if "detections_schema" in data:
                meta = data
                continue
            try:
                content_hash, detection = _parse_detection_line(data)
            except (KeyError, TypeError, ValueError, ValidationError) as exc:
                raise CurationError(f"{path}:{lineno}: bad detection ({exc})") from None
            grouped.setdefault(content_hash, []).append(detection)
    return meta, grouped


def check_detections(path, image_sizes: Optional[dict[str, tuple[int, int]]] = None) -> FormatReport:
    """Validate a sidecar file. Structural problems are errors; a missing
    meta line or hashes outside the given corpus are warnings."""
    errors: list[str] = []
    warnings: list[str] = []
    path = Path(path)
    meta_seen = False
    line_count = 0
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                line_count += 1
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    errors.append(f"line {lineno}: not valid JSON ({exc})")
                    continue
                if "detections_schema" in data:
                    if meta_seen:
                        warnings.append(f"line {lineno}: duplicate meta record")
                    elif line_count != 1:
                        warnings.append(f"line {lineno}: meta record is not first")
                    if data.get("detections_schema") != DETECTIONS_SCHEMA:
                        errors.append(
                            f"line {lineno}: unsupported schema "
                            f"{data.get('detections_schema')!r}"
                        )
                    meta_seen = True
                    continue
                try:
                    content_hash, detection = _parse_detection_line(data)
                except (KeyError, TypeError, ValueError, ValidationError) as exc:
                    errors.append(f"line {lineno}: bad detection ({exc})")
                    continue
                if image_sizes is not None:
                    size = image_sizes.get(content_hash)
                    if size is None:
                        warnings.append(
                            f"line {lineno}: hash {content_hash} not in the corpus"
                        )
                    elif not detection.box.fits(*size):
                        errors.append(
                            f"line {lineno}: box exceeds image bounds {size}"
                        )
    except OSError as exc:
        return FormatReport([f"cannot read {path}: {exc}"], [])
    if not meta_seen:
        warnings.append("missing meta record (detections_schema)")
    return FormatReport(errors, warnings)


class SidecarDetector:
    """Detector adapter over a consolidated sidecar file: echoes whatever
    boxes were recorded for the image's content hash."""

    max_parallel = 8

    def __init__(self, path):
        self.path = Path(path)
        self.meta, self._by_hash = read_detections(self.path)

    @property
    def detector_id(self) -> str:
        return str(self.meta.get("detector_id", "unknown"))

    def detect(self, content_hash: str, image: Image.Image) -> list[Detection]:
        return list(self._by_hash.get(content_hash, []))
