from .dedup import DEFAULT_HAMMING_THRESHOLD, dedup, dhash64, hamming
from .detect import (
    DEFAULT_CONFIDENCE_FLOOR,
    DEFAULT_VEHICLE_LABELS,
    Detection,
    DetectorAdapter,
    SidecarDetector,
    check_detections,
    detect,
    filter_by_confidence,
    read_detections,
    write_detections,
)
from .images import (
    SUPPORTED_FORMATS,
    BoundingBox,
    ByteValidation,
    crop_region,
    validate_bytes,
)
from .run import (
    CURATED_DIR_NAME,
    CURATED_MANIFEST_NAME,
    DEFAULT_MIN_CROP_SIDE,
    OUTCOMES_NAME,
    CropFilterResult,
    CurationConfig,
    CurationReport,
    OutcomeKind,
    OutcomeRecord,
    crop_and_filter,
    curate_run,
    load_outcomes,
)

__all__ = [
    "DEFAULT_HAMMING_THRESHOLD",
    "dedup",
    "dhash64",
    "hamming",
    "DEFAULT_CONFIDENCE_FLOOR",
    "DEFAULT_VEHICLE_LABELS",
    "Detection",
    "DetectorAdapter",
    "SidecarDetector",
    "check_detections",
    "detect",
    "filter_by_confidence",
    "read_detections",
    "write_detections",
    "SUPPORTED_FORMATS",
    "BoundingBox",
    "ByteValidation",
    "crop_region",
    "validate_bytes",
    "CURATED_DIR_NAME",
    "CURATED_MANIFEST_NAME",
    "DEFAULT_MIN_CROP_SIDE",
    "OUTCOMES_NAME",
    "CropFilterResult",
    "CurationConfig",
    "CurationReport",
    "OutcomeKind",
    "OutcomeRecord",
    "crop_and_filter",
    "curate_run",
    "load_outcomes",
]
