"""Byte-level image validation and bounding-box cropping."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from ..errors import CurationError, ValidationError

# raster formats the pipeline accepts, keyed by Pillow's format names
SUPPORTED_FORMATS = {"JPEG", "PNG", "GIF", "BMP", "WEBP"}

_EXTENSION_FORMATS = {
    ".jpg": "JPEG",
    ".jpeg": "JPEG",
    ".png": "PNG",
    ".gif": "GIF",
    ".bmp": "BMP",
    ".webp": "WEBP",
}


@dataclass(frozen=True)
class BoundingBox:
    """Pixel box: top-left corner plus positive extent."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValidationError(f"box corner must be non-negative: {self}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"box extent must be positive: {self}")

    def fits(self, image_width: int, image_height: int) -> bool:
        return self.x + self.width <= image_width and self.y + self.height <= image_height


@dataclass
class ByteValidation:
    """Outcome of sniffing one file: ok (with the decoded image) or a
    rejection reason."""

    ok: bool
    reason: str = ""          # "corrupt" | "type_mismatch" when not ok
    detail: str = ""
    image: Image.Image | None = None


def validate_bytes(path) -> ByteValidation:
    """Decode and fully load a file, then check the sniffed format against
    its extension. I/O problems raise OSError (the caller retries once);
    undecodable or truncated payloads are rejections, not errors.
    """
    path = Path(path)
    payload = path.read_bytes()  # OSError propagates: not a rejection
    try:
        image = Image.open(io.BytesIO(payload))
        sniffed = image.format
        image.load()  # forces full decode; truncation surfaces here
    except Exception as exc:  # Pillow raises a zoo of types for bad bytes
        return ByteValidation(False, "corrupt", f"cannot decode: {exc}")
    if sniffed not in SUPPORTED_FORMATS:
        return ByteValidation(False, "type_mismatch", f"unsupported format {sniffed}")
    expected = _EXTENSION_FORMATS.get(path.suffix.lower())
    if expected != sniffed:
        return ByteValidation(
            False,
            "type_mismatch",
            f"extension {path.suffix!r} does not match sniffed format {sniffed}",
        )
    return ByteValidation(True, image=image)


def crop_region(image: Image.Image, box: BoundingBox) -> Image.Image:
    """Exact-box crop; a box outside the image signals a detector bug."""
    if not box.fits(*image.size):
        raise CurationError(
            f"box {box} exceeds image bounds {image.size}; detector adapter bug"
        )
    return image.crop((box.x, box.y, box.x + box.width, box.y + box.height))
