"""Deterministic offline demo corpus.

Generates synthetic "street photo" images (one boxy vehicle per image on a
noisy background), a matching detection sidecar keyed by content hash, and
synthetic feature vectors for curated manifests. Everything derives from
explicit seeds, so the full pipeline can run and re-run offline with stable
results. Also usable as a module CLI:

    python -m fleet_census.fixtures build-corpus --registry R --per-class N --out DIR
    python -m fleet_census.fixtures synth-features --manifest M --dim D --out F
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image, ImageDraw

from .curation.detect import Detection, write_detections
from .curation.images import BoundingBox
from .dataset import load_manifest
from .features import write_feature_store
from .ingest.adapters import folder_slug
from .ingest.plan import QueryPlan, SourceKind, build_query_plan
from .rng import SplitMix64, derive_seed
from .taxonomy import ModelRegistry, VehicleClass

IMAGE_SIZE = (320, 240)

# vehicle silhouette extents per class (body width, body height)
_BODY_SIZES = {
    VehicleClass.LIGHT_DUTY: (120, 64),
    VehicleClass.MEDIUM_DUTY: (130, 88),
    VehicleClass.HEAVY_DUTY: (170, 112),
    VehicleClass.NON_LOGISTIC: (104, 64),
}

_WHEEL_RADIUS = 9
_BOX_MARGIN = 4

FEATURE_CENTER_SCALE = 8.0


def _color(gen: SplitMix64, low=40, high=215) -> tuple[int, int, int]:
    return tuple(low + gen.below(high - low) for _ in range(3))


def _noisy_background(draw: ImageDraw.ImageDraw, gen: SplitMix64) -> None:
    width, height = IMAGE_SIZE
    # high-contrast vertical bands with a seeded phase/width keep the
    # difference-hash fingerprints of distinct fixtures far apart
    band = 14 + gen.below(26)
    phase = gen.below(band)
    dark = _color(gen, 30, 90)
    light = _color(gen, 160, 230)
    for i, x in enumerate(range(-phase, width, band)):
        draw.rectangle([x, 0, x + band - 1, height], fill=dark if i % 2 else light)
    for _ in range(12):
        x = gen.below(width)
        y = gen.below(height)
        w = 10 + gen.below(60)
        h = 10 + gen.below(60)
        draw.rectangle([x, y, x + w, y + h], fill=_color(gen, 90, 190))


def vehicle_image(vehicle_class: VehicleClass, seed: int) -> tuple[Image.Image, BoundingBox]:
    """One synthetic vehicle photo plus the ground-truth box around it."""
    gen = SplitMix64(seed)
    image = Image.new("RGB", IMAGE_SIZE, _color(gen, 120, 200))
    draw = ImageDraw.Draw(image)
    _noisy_background(draw, gen)

    body_w, body_h = _BODY_SIZES[vehicle_class]
    cab_extra = 0 if vehicle_class is VehicleClass.NON_LOGISTIC else body_w // 8
    roof_extra = body_h // 3 if vehicle_class is VehicleClass.NON_LOGISTIC else 0
    # keep the full silhouette (cab, roof, wheels) plus the box margin inside
    min_x = _BOX_MARGIN
    max_x = IMAGE_SIZE[0] - body_w - cab_extra - _BOX_MARGIN - 1
    min_y = roof_extra + _BOX_MARGIN
    max_y = IMAGE_SIZE[1] - body_h - _WHEEL_RADIUS - _BOX_MARGIN - 1
    x = min_x + gen.below(max_x - min_x)
    y = min_y + gen.below(max_y - min_y)

    body_color = _color(gen)
    draw.rectangle([x, y, x + body_w, y + body_h], fill=body_color)
    # cab for the duty classes, roofline for the passenger car
    if vehicle_class is VehicleClass.NON_LOGISTIC:
        draw.rectangle(
            [x + body_w // 4, y - roof_extra, x + 3 * body_w // 4, y],
            fill=body_color,
        )
    else:
        draw.rectangle(
            [x + body_w, y + body_h // 3, x + body_w + cab_extra, y + body_h],
            fill=_color(gen),
        )
    # seeded stripe livery keeps crop fingerprints far apart
    stripe = 8 + gen.below(14)
    stripe_phase = gen.below(stripe)
    stripe_color = _color(gen, 20, 100)
    for i, sx in enumerate(range(x - stripe_phase, x + body_w, stripe)):
        if i % 2 == 0:
            continue
        draw.rectangle(
            [max(x, sx), y + 4, min(x + body_w, sx + stripe - 1), y + body_h - 4],
            fill=stripe_color,
        )
    for _ in range(3):
        px = x + gen.below(max(1, body_w - 24))
        py = y + gen.below(max(1, body_h - 14))
        draw.rectangle([px, py, px + 20, py + 10], fill=_color(gen))
    wheel_y = y + body_h
    for wheel_x in (x + body_w // 5, x + 4 * body_w // 5):
        draw.ellipse(
            [wheel_x - _WHEEL_RADIUS, wheel_y - _WHEEL_RADIUS,
             wheel_x + _WHEEL_RADIUS, wheel_y + _WHEEL_RADIUS],
            fill=(20, 20, 25),
        )

    x0 = x - _BOX_MARGIN
    y0 = y - roof_extra - _BOX_MARGIN
    x1 = min(IMAGE_SIZE[0], x + body_w + cab_extra + _BOX_MARGIN)
    y1 = min(IMAGE_SIZE[1], wheel_y + _WHEEL_RADIUS + _BOX_MARGIN)
    box = BoundingBox(x=x0, y=y0, width=x1 - x0, height=y1 - y0)
    return image, box


def person_image(seed: int) -> Image.Image:
    """A non-vehicle scene: a vertical figure on a noisy background."""
    gen = SplitMix64(seed)
    image = Image.new("RGB", IMAGE_SIZE, _color(gen, 120, 200))
    draw = ImageDraw.Draw(image)
    _noisy_background(draw, gen)
    x = 60 + gen.below(180)
    draw.rectangle([x, 80, x + 26, 190], fill=_color(gen))
    draw.ellipse([x - 2, 52, x + 28, 82], fill=(224, 190, 160))
    return image


_DETECTOR_LABELS = {
    VehicleClass.LIGHT_DUTY: "van",
    VehicleClass.MEDIUM_DUTY: "van",
    VehicleClass.HEAVY_DUTY: "truck",
    VehicleClass.NON_LOGISTIC: "car",
}

DEFECT_KINDS = ("corrupt", "type_mismatch", "non_vehicle")


@dataclass
class CorpusInfo:
    source_root: Path
    detections_path: Path
    images: int = 0
    defects: dict[str, int] = field(default_factory=dict)

    @property
    def good_images(self) -> int:
        return self.images - sum(self.defects.values())


def _encode(image: Image.Image, fmt: str) -> bytes:
    buffer = io.BytesIO()
    if fmt == "JPEG":
        image.save(buffer, format="JPEG", quality=90)
    else:
        image.save(buffer, format=fmt)
    return buffer.getvalue()


# fixture crops keep at least this dhash distance from each other so the
# deduplication stage (threshold 4) never fires on distinct fixtures
_MIN_FIXTURE_DHASH_DISTANCE = 7


def _distinct_vehicle_payload(
    vehicle_class: VehicleClass,
    fmt: str,
    seed_tokens: tuple,
    master_seed: int,
    taken_phashes: list[int],
) -> tuple[bytes, BoundingBox]:
    """Encode a vehicle image whose decoded crop fingerprint stays clear of
    every earlier fixture; deterministic rejection sampling over a salt."""
    from .curation.dedup import dhash64, hamming
    from .curation.images import crop_region

    for salt in range(64):
        image_seed = derive_seed(master_seed, "image", *seed_tokens, salt)
        image, box = vehicle_image(vehicle_class, image_seed)
        payload = _encode(image, fmt)
        decoded = Image.open(io.BytesIO(payload))
        decoded.load()
        phash = dhash64(crop_region(decoded, box))
        if all(
            hamming(phash, other) >= _MIN_FIXTURE_DHASH_DISTANCE
            for other in taken_phashes
        ):
            taken_phashes.append(phash)
            return payload, box
    raise RuntimeError(
        "could not generate a perceptually distinct fixture in 64 attempts"
    )


def materialize_corpus(
    plan: QueryPlan,
    out_root,
    seed: int = 0,
    defect_rate: float = 0.0,
) -> CorpusInfo:
    """Write a LocalFolder source tree satisfying ``plan`` plus a matching
    detection sidecar.

    Defects are injected round-robin per class at the configured rate:
    truncated JPEG bytes, PNG bytes under a .jpg name, and vehicle-free
    scenes (their sidecar entry says "person").
    """
    import hashlib

    out_root = Path(out_root)
    source_root = out_root / "local"
    detections_path = out_root / "detections.jsonl"
    info = CorpusInfo(source_root, detections_path)

    detection_items: list[tuple[str, Detection]] = []
    class_counters: dict[VehicleClass, int] = {}
    class_totals = {c: plan.class_total(c) for c in VehicleClass}
    taken_phashes: list[int] = []

    for entry in plan.entries:
        directory = source_root / folder_slug(entry.make, entry.model)
        directory.mkdir(parents=True, exist_ok=True)
        for _ in range(entry.target):
            index = class_counters.get(entry.vehicle_class, 0)
            class_counters[entry.vehicle_class] = index + 1
            total = class_totals[entry.vehicle_class]
            n_defects = int(defect_rate * total + 0.5)
            image_seed = derive_seed(seed, "image", entry.vehicle_class.value, index)
            confidence_gen = SplitMix64(derive_seed(seed, "conf", entry.vehicle_class.value, index))
            confidence = 0.6 + 0.35 * confidence_gen.uniform()

            defect = None
            if index < n_defects:
                defect = DEFECT_KINDS[
                    (entry.vehicle_class.label_index + index) % len(DEFECT_KINDS)
                ]

            name = f"img{index:04d}"
            if defect == "corrupt":
                # distinct truncation lengths keep corrupt payloads from
                # hashing identically (JPEG headers are shared bytes)
                cut = 100 + 17 * index + entry.vehicle_class.label_index
                payload = _encode(person_image(image_seed), "JPEG")[:cut]
                path = directory / f"{name}.jpg"
            elif defect == "type_mismatch":
                payload = _encode(person_image(image_seed), "PNG")
                path = directory / f"{name}.jpg"  # PNG bytes, JPEG name
            elif defect == "non_vehicle":
                payload = _encode(person_image(image_seed), "JPEG")
                path = directory / f"{name}.jpg"
            else:
                fmt = "PNG" if index % 5 == 0 else "JPEG"
                payload, box = _distinct_vehicle_payload(
                    entry.vehicle_class, fmt,
                    (entry.vehicle_class.value, index), seed, taken_phashes,
                )
                path = directory / f"{name}{'.png' if fmt == 'PNG' else '.jpg'}"
            path.write_bytes(payload)
            info.images += 1
            content_hash = hashlib.sha256(payload).hexdigest()
            if defect in ("corrupt", "type_mismatch"):
                info.defects[defect] = info.defects.get(defect, 0) + 1
            elif defect == "non_vehicle":
                info.defects[defect] = info.defects.get(defect, 0) + 1
                detection_items.append(
                    (content_hash,
                     Detection("person", confidence, BoundingBox(60, 52, 80, 140)))
                )
            else:
                detection_items.append(
                    (content_hash,
                     Detection(_DETECTOR_LABELS[entry.vehicle_class], confidence, box))
                )
    write_detections(detections_path, detection_items, detector_id="fixture-sidecar")
    return info


def build_offline_corpus(
    registry: ModelRegistry,
    per_class: int,
    out_root,
    seed: int = 0,
    defect_rate: float = 0.0,
) -> CorpusInfo:
    plan = build_query_plan(registry, per_class, {SourceKind.LOCAL_FOLDER: 1.0})
    return materialize_corpus(plan, out_root, seed=seed, defect_rate=defect_rate)


def synth_feature_vector(content_hash: str, label: int, dim: int, seed: int) -> list[float]:
    """Cluster-structured vector: a class center plus hash-keyed noise.

    Depends only on (hash, label, dim, seed), so stores are reproducible
    regardless of manifest order.
    """
    gen = SplitMix64(derive_seed(seed, "feat", content_hash))
    center_axis = label % dim
    return [
        (FEATURE_CENTER_SCALE if j == center_axis else 0.0)
        + (gen.uniform() * 2.0 - 1.0)
        for j in range(dim)
    ]


def synth_feature_store(manifest_path, out_path, dim: int = 8, seed: int = 0,
                        backbone_id: str = "synthetic-clusters-v1") -> int:
    """Feature store covering every active entry of a curated manifest."""
    manifest = load_manifest(manifest_path)
    rows = []
    for entry in manifest.active_entries():
        label = entry.vehicle_class.label_index
        rows.append(
            (entry.content_hash, label,
             synth_feature_vector(entry.content_hash, label, dim, seed))
        )
    return write_feature_store(out_path, backbone_id, rows, dim=dim)


def _cli():
    import argparse

    from .taxonomy import load_registry

    parser = argparse.ArgumentParser(prog="fleet_census.fixtures", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("build-corpus", help="write a LocalFolder fixture tree")
    corpus.add_argument("--registry", required=True)
    corpus.add_argument("--per-class", type=int, required=True)
    corpus.add_argument("--out", required=True)
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--defect-rate", type=float, default=0.0)

    feats = sub.add_parser("synth-features", help="write a synthetic feature store")
    feats.add_argument("--manifest", required=True)
    feats.add_argument("--out", required=True)
    feats.add_argument("--dim", type=int, default=8)
    feats.add_argument("--seed", type=int, default=0)
    feats.add_argument("--backbone-id", default="synthetic-clusters-v1")

    args = parser.parse_args()
    if args.command == "build-corpus":
        info = build_offline_corpus(
            load_registry(args.registry), args.per_class, args.out,
            seed=args.seed, defect_rate=args.defect_rate,
        )
        print(f"wrote {info.images} images under {info.source_root} "
              f"({info.good_images} clean, defects: {info.defects})")
    else:
        count = synth_feature_store(
            args.manifest, args.out, dim=args.dim, seed=args.seed,
            backbone_id=args.backbone_id,
        )
        print(f"wrote {count} feature rows to {args.out}")


if __name__ == "__main__":
    _cli()
