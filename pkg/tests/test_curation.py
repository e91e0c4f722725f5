import io
from dataclasses import dataclass

import numpy as np
import pytest
from PIL import Image

from fleet_census.curation import (
    BoundingBox,
    Detection,
    OutcomeKind,
    SidecarDetector,
    check_detections,
    crop_and_filter,
    crop_region,
    curate_run,
    dedup,
    detect,
    dhash64,
    hamming,
    load_outcomes,
    read_detections,
    validate_bytes,
    write_detections,
)
from fleet_census.curation.run import CURATED_MANIFEST_NAME, OUTCOMES_NAME
from fleet_census.dataset import load_manifest
from fleet_census.errors import CurationError, ManifestError, ValidationError
from fleet_census.fixtures import build_offline_corpus, vehicle_image
from fleet_census.ingest import LocalFolderAdapter, SourceKind, build_query_plan, ingest_run
from fleet_census.taxonomy import (
    ModelRegistry,
    ModelRegistryEntry,
    VehicleClass,
)

SMALL_REGISTRY = ModelRegistry(
    [
        ModelRegistryEntry("Acme", "Sprint", VehicleClass.LIGHT_DUTY),
        ModelRegistryEntry("Acme", "Carrier", VehicleClass.MEDIUM_DUTY),
        ModelRegistryEntry("Acme", "Hauler", VehicleClass.HEAVY_DUTY),
        ModelRegistryEntry("Acme", "Hatch", VehicleClass.NON_LOGISTIC),
    ]
)


def save(image, path, fmt=None, **kwargs):
    image.save(path, format=fmt, **kwargs)
    return path


class TestValidateBytes:
    def test_valid_jpeg_is_ok(self, tmp_path):
        image, _ = vehicle_image(VehicleClass.LIGHT_DUTY, seed=1)
        path = save(image, tmp_path / "a.jpg")
        result = validate_bytes(path)
        assert result.ok
        assert result.image.size == image.size

    def test_png_bytes_named_jpg_is_type_mismatch(self, tmp_path):
        image, _ = vehicle_image(VehicleClass.LIGHT_DUTY, seed=2)
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        path = tmp_path / "b.jpg"
        path.write_bytes(buffer.getvalue())
        result = validate_bytes(path)
        assert not result.ok
        assert result.reason == "type_mismatch"

    def test_truncated_jpeg_is_corrupt(self, tmp_path):
        image, _ = vehicle_image(VehicleClass.LIGHT_DUTY, seed=3)
        buffer = io.BytesIO()
        image.save(buffer, format="JPEG")
        path = tmp_path / "c.jpg"
        path.write_bytes(buffer.getvalue()[:100])
        result = validate_bytes(path)
        assert not result.ok
        assert result.reason == "corrupt"

    def test_random_bytes_are_corrupt(self, tmp_path):
        path = tmp_path / "d.png"
        path.write_bytes(b"\x00\x01\x02definitely-not-an-image")
        assert validate_bytes(path).reason == "corrupt"

    def test_missing_file_raises_oserror(self, tmp_path):
        with pytest.raises(OSError):
            validate_bytes(tmp_path / "absent.jpg")


class TestBoundingBox:
    def test_rejects_negative_corner(self):
        with pytest.raises(ValidationError):
            BoundingBox(-1, 0, 10, 10)

    def test_rejects_zero_extent(self):
        with pytest.raises(ValidationError):
            BoundingBox(0, 0, 0, 10)

    def test_fits(self):
        assert BoundingBox(10, 10, 90, 90).fits(100, 100)
        assert not BoundingBox(10, 10, 91, 90).fits(100, 100)


class EchoDetector:
    max_parallel = 1

    def __init__(self, detections):
        self.detections = detections

    def detect(self, content_hash, image):
        return list(self.detections)


class TestDetect:
    def test_floor_filters_low_confidence(self):
        detections = [
            Detection("truck", 0.2, BoundingBox(0, 0, 80, 80)),
            Detection("truck", 0.9, BoundingBox(0, 0, 80, 80)),
        ]
        image = Image.new("RGB", (100, 100))
        kept = detect(image, "h", EchoDetector(detections), confidence_floor=0.5)
        assert len(kept) == 1
        assert kept[0].confidence == 0.9

    def test_adapter_failure_wrapped(self):
        class Broken:
            max_parallel = 1

            def detect(self, content_hash, image):
                raise RuntimeError("gpu on fire")

        with pytest.raises(CurationError):
            detect(Image.new("RGB", (10, 10)), "h", Broken())

    def test_confidence_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            Detection("car", 1.5, BoundingBox(0, 0, 10, 10))


class TestCropAndFilter:
    def _image(self):
        image, box = vehicle_image(VehicleClass.HEAVY_DUTY, seed=5)
        return image, box

    def test_single_vehicle_crop_matches_box_exactly(self):
        image, box = self._image()
        result = crop_and_filter(image, [Detection("truck", 0.9, box)])
        assert result.kind is OutcomeKind.ACCEPTED
        (crop,) = result.crops
        assert crop.image.size == (box.width, box.height)
        region = np.asarray(image)[box.y:box.y + box.height, box.x:box.x + box.width]
        np.testing.assert_array_equal(np.asarray(crop.image), region)

    def test_non_vehicle_labels_rejected(self):
        image, box = self._image()
        result = crop_and_filter(image, [Detection("person", 0.9, box)])
        assert result.kind is OutcomeKind.REJECTED_NO_VEHICLE

    def test_empty_detections_rejected(self):
        image, _ = self._image()
        assert crop_and_filter(image, []).kind is OutcomeKind.REJECTED_NO_VEHICLE

    def test_two_vehicle_boxes_give_two_crops(self):
        image, box = self._image()
        other = BoundingBox(0, 0, 100, 100)
        result = crop_and_filter(
            image,
            [Detection("truck", 0.9, box), Detection("car", 0.8, other)],
        )
        assert result.kind is OutcomeKind.ACCEPTED
        assert len(result.crops) == 2

    def test_all_small_boxes_rejected_too_small(self):
        image, _ = self._image()
        small = BoundingBox(0, 0, 30, 30)
        result = crop_and_filter(image, [Detection("car", 0.9, small)], min_crop_side=64)
        assert result.kind is OutcomeKind.REJECTED_TOO_SMALL

    def test_mixed_sizes_keep_only_large(self):
        image, box = self._image()
        small = BoundingBox(0, 0, 30, 30)
        result = crop_and_filter(
            image,
            [Detection("car", 0.9, small), Detection("truck", 0.9, box)],
        )
        assert result.kind is OutcomeKind.ACCEPTED
        assert len(result.crops) == 1

    def test_out_of_bounds_box_raises(self):
        image, _ = self._image()
        bad = BoundingBox(300, 200, 100, 100)
        with pytest.raises(CurationError):
            crop_and_filter(image, [Detection("truck", 0.9, bad)])

    def test_crop_region_bounds_check(self):
        image = Image.new("RGB", (50, 50))
        with pytest.raises(CurationError):
            crop_region(image, BoundingBox(0, 0, 51, 10))


@dataclass
class HashRecord:
    content_hash: str
    phash: int


class TestDedup:
    def test_identical_hashes_deduplicate(self):
        records = [HashRecord("aa", 0xDEAD), HashRecord("bb", 0xDEAD)]
        kept, duplicates = dedup(records)
        assert [r.content_hash for r in kept] == ["aa"]
        assert duplicates == {"bb": "aa"}

    def test_distant_hashes_both_kept(self):
        image_a, _ = vehicle_image(VehicleClass.LIGHT_DUTY, seed=10)
        image_b, _ = vehicle_image(VehicleClass.HEAVY_DUTY, seed=77)
        pa, pb = dhash64(image_a), dhash64(image_b)
        assert hamming(pa, pb) > 4  # oracle: fixtures really are distinct
        kept, duplicates = dedup([HashRecord("aa", pa), HashRecord("bb", pb)])
        assert len(kept) == 2
        assert duplicates == {}

    def test_empty_input(self):
        kept, duplicates = dedup([])
        assert kept == [] and duplicates == {}

    def test_within_threshold_deduplicates(self):
        base = 0b1111000
        near = base ^ 0b11  # distance 2
        kept, duplicates = dedup([HashRecord("bb", near), HashRecord("aa", base)])
        assert [r.content_hash for r in kept] == ["aa"]
        assert duplicates == {"bb": "aa"}

    def test_input_order_does_not_change_kept_set(self):
        records = [HashRecord(f"{i:02d}", (i * 37) % 251) for i in range(20)]
        kept_fwd, _ = dedup(records)
        kept_rev, _ = dedup(list(reversed(records)))
        assert [r.content_hash for r in kept_fwd] == [r.content_hash for r in kept_rev]

    def test_existing_leaders_suppress_new_records(self):
        kept, duplicates = dedup([HashRecord("new", 0b101)], existing_phashes=[0b101])
        assert kept == []
        assert duplicates == {"new": None}


class TestSidecar:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        items = [
            ("h1", Detection("truck", 0.8, BoundingBox(1, 2, 30, 40))),
            ("h1", Detection("car", 0.7, BoundingBox(5, 5, 20, 20))),
            ("h2", Detection("person", 0.9, BoundingBox(0, 0, 10, 50))),
        ]
        assert write_detections(path, items, detector_id="unit-test") == 3
        meta, grouped = read_detections(path)
        assert meta["detector_id"] == "unit-test"
        assert len(grouped["h1"]) == 2
        assert grouped["h2"][0].label == "person"

    def test_detector_echoes_sidecar(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        box = BoundingBox(1, 2, 30, 40)
        write_detections(path, [("h1", Detection("truck", 0.8, box))])
        detector = SidecarDetector(path)
        assert detector.detect("h1", None) == [Detection("truck", 0.8, box)]
        assert detector.detect("missing", None) == []

    def test_check_clean_file(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        write_detections(path, [("h1", Detection("car", 0.5, BoundingBox(0, 0, 5, 5)))])
        report = check_detections(path)
        assert report.ok and report.warnings == []

    def test_check_flags_missing_meta(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        path.write_text(
            '{"content_hash": "h", "label": "car", "confidence": 0.5,'
            ' "x": 0, "y": 0, "width": 5, "height": 5}\n'
        )
        report = check_detections(path)
        assert report.ok
        assert any("meta" in w for w in report.warnings)

    def test_check_rejects_bad_confidence(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        path.write_text(
            '{"detections_schema": 1, "detector_id": "x"}\n'
            '{"content_hash": "h", "label": "car", "confidence": 1.7,'
            ' "x": 0, "y": 0, "width": 5, "height": 5}\n'
        )
        assert not check_detections(path).ok

    def test_check_box_bounds_against_corpus(self, tmp_path):
        path = tmp_path / "detections.jsonl"
        write_detections(path, [("h1", Detection("car", 0.5, BoundingBox(90, 90, 20, 20)))])
        report = check_detections(path, image_sizes={"h1": (100, 100)})
        assert any("bounds" in e for e in report.errors)


def curated_workspace(tmp_path, per_class=5, defect_rate=0.0, seed=0):
    """End-to-end ingest of a fixture corpus, ready for curate_run."""
    corpus_root = tmp_path / "corpus"
    info = build_offline_corpus(
        SMALL_REGISTRY, per_class, corpus_root, seed=seed, defect_rate=defect_rate
    )
    plan = build_query_plan(SMALL_REGISTRY, per_class, {SourceKind.LOCAL_FOLDER: 1.0})
    ingest_root = tmp_path / "ingested"
    ingest_run(plan, {SourceKind.LOCAL_FOLDER: LocalFolderAdapter(info.source_root)}, ingest_root)
    return info, ingest_root


class TestCurateRun:
    def test_clean_corpus_fully_accepted(self, tmp_path):
        info, ingest_root = curated_workspace(tmp_path)
        out = tmp_path / "curated"
        report = curate_run(ingest_root, SidecarDetector(info.detections_path), out)
        assert report.inputs == 20
        assert report.per_outcome == {"accepted": 20}
        assert report.accepted_crops == 20
        manifest = load_manifest(out / CURATED_MANIFEST_NAME)
        assert len(manifest) == 20
        for entry in manifest:
            assert (out / entry.stored_path).exists()
            assert entry.parent_hash is not None

    def test_outcome_partition(self, tmp_path):
        info, ingest_root = curated_workspace(tmp_path, per_class=10, defect_rate=0.2)
        out = tmp_path / "curated"
        report = curate_run(ingest_root, SidecarDetector(info.detections_path), out)
        assert sum(report.per_outcome.values()) == report.inputs == 40
        outcomes = load_outcomes(out / OUTCOMES_NAME)
        assert len(outcomes) == 40

    def test_defects_land_in_their_outcome_buckets(self, tmp_path):
        info, ingest_root = curated_workspace(tmp_path, per_class=10, defect_rate=0.2)
        out = tmp_path / "curated"
        report = curate_run(ingest_root, SidecarDetector(info.detections_path), out)
        assert report.per_outcome.get("rejected_corrupt", 0) == info.defects["corrupt"]
        assert (
            report.per_outcome.get("rejected_type_mismatch", 0)
            == info.defects["type_mismatch"]
        )
        assert (
            report.per_outcome.get("rejected_no_vehicle", 0)
            == info.defects["non_vehicle"]
        )

    def test_rerun_is_idempotent(self, tmp_path):
        info, ingest_root = curated_workspace(tmp_path)
        out = tmp_path / "curated"
        detector = SidecarDetector(info.detections_path)
        first = curate_run(ingest_root, detector, out)
        manifest_bytes = (out / CURATED_MANIFEST_NAME).read_bytes()
        second = curate_run(ingest_root, detector, out)
        assert second.to_dict() == first.to_dict()
        assert (out / CURATED_MANIFEST_NAME).read_bytes() == manifest_bytes

    def test_all_corrupt_corpus(self, tmp_path):
        # hand-built corpus of truncated JPEGs only
        from fleet_census.ingest import PlanEntry
        from fleet_census.ingest.run import _Writer

        ingest_root = tmp_path / "ingested"
        (ingest_root / "raw").mkdir(parents=True)
        writer = _Writer(ingest_root, set())
        entry = PlanEntry(
            "Acme", "Sprint", VehicleClass.LIGHT_DUTY,
            SourceKind.LOCAL_FOLDER, "acme sprint", 3,
        )
        for i in range(3):
            image, _ = vehicle_image(VehicleClass.LIGHT_DUTY, seed=i)
            buffer = io.BytesIO()
            image.save(buffer, format="JPEG")
            # distinct truncation points so the three payloads hash apart
            writer.persist(entry, f"broken-{i}.jpg", buffer.getvalue()[: 600 + 13 * i], 0.0)
        detections = tmp_path / "detections.jsonl"
        write_detections(detections, [])
        report = curate_run(ingest_root, SidecarDetector(detections), tmp_path / "out")
        assert report.per_outcome == {"rejected_corrupt": 3}
        assert report.accepted_crops == 0

    def test_duplicate_raws_curate_once(self, tmp_path):
        info, ingest_root = curated_workspace(tmp_path)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        detector = SidecarDetector(info.detections_path)
        report_a = curate_run(ingest_root, detector, out_a)
        # a second pass over the same corpus into a fresh directory must
        # produce the same accepted set
        report_b = curate_run(ingest_root, detector, out_b)
        assert report_a.to_dict() == report_b.to_dict()

    def test_missing_raw_manifest_raises(self, tmp_path):
        detections = tmp_path / "detections.jsonl"
        write_detections(detections, [])
        with pytest.raises(ManifestError):
            curate_run(tmp_path / "nowhere", SidecarDetector(detections), tmp_path / "out")

    def test_missing_detector_is_fatal(self, tmp_path):
        _, ingest_root = curated_workspace(tmp_path, per_class=1)
        with pytest.raises(CurationError):
            curate_run(ingest_root, None, tmp_path / "out")

    def test_exact_duplicate_images_rejected_as_duplicates(self, tmp_path):
        # same payload served under two models: one curated copy survives
        from fleet_census.ingest import PlanEntry
        from fleet_census.ingest.run import _Writer

        image, box = vehicle_image(VehicleClass.LIGHT_DUTY, seed=42)
        buffer = io.BytesIO()
        image.save(buffer, format="PNG")
        payload = buffer.getvalue()
        # two different byte payloads with identical pixels: PNG vs BMP
        buffer_bmp = io.BytesIO()
        image.save(buffer_bmp, format="BMP")
        payload_bmp = buffer_bmp.getvalue()

        ingest_root = tmp_path / "ingested"
        (ingest_root / "raw").mkdir(parents=True)
        writer = _Writer(ingest_root, set())
        entry = PlanEntry(
            "Acme", "Sprint", VehicleClass.LIGHT_DUTY,
            SourceKind.LOCAL_FOLDER, "acme sprint", 2,
        )
        writer.persist(entry, "copy1.png", payload, 0.0)
        writer.persist(entry, "copy2.bmp", payload_bmp, 0.0)

        import hashlib

        detections = tmp_path / "detections.jsonl"
        write_detections(
            detections,
            [
                (hashlib.sha256(payload).hexdigest(), Detection("van", 0.9, box)),
                (hashlib.sha256(payload_bmp).hexdigest(), Detection("van", 0.9, box)),
            ],
        )
        report = curate_run(ingest_root, SidecarDetector(detections), tmp_path / "out")
        assert report.per_outcome == {"accepted": 1, "rejected_duplicate": 1}
