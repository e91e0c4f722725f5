"""Four-class vehicle taxonomy, physical classification rules, model registry.

Classes cover goods vehicles in three duty bands plus a catch-all for
everything else (SUVs, city cars...). Physical rules decide duty bands from
gross vehicle mass and total height; the catch-all class is only ever
assigned through the registry, never from physical measurements.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .errors import RegistryError, UnknownModelError, ValidationError

# Rule thresholds: mass is the regulatory criterion, height disambiguates
# the light band.
GVM_LIMIT_TONS = 3.5
LIGHT_HEIGHT_LIMIT_M = 2.0
MEDIUM_HEIGHT_LIMIT_M = 3.0


class VehicleClass(Enum):
    """The four target labels. label_index fixes the on-disk label byte."""

    LIGHT_DUTY = "light_duty"
    MEDIUM_DUTY = "medium_duty"
    HEAVY_DUTY = "heavy_duty"
    NON_LOGISTIC = "non_logistic"

    @property
    def label_index(self) -> int:
        return _LABEL_ORDER.index(self)

    @classmethod
    def from_label_index(cls, index: int) -> "VehicleClass":
        if not 0 <= index < len(_LABEL_ORDER):
            raise ValidationError(f"label index {index} outside [0, 4)")
        return _LABEL_ORDER[index]

    @classmethod
    def parse(cls, text: str) -> "VehicleClass":
        """Accepts canonical names plus hyphen/case variants."""
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(
                f"unknown vehicle class {text!r}; expected one of "
                + ", ".join(c.value for c in cls)
            ) from None


_LABEL_ORDER = (
    VehicleClass.LIGHT_DUTY,
    VehicleClass.MEDIUM_DUTY,
    VehicleClass.HEAVY_DUTY,
    VehicleClass.NON_LOGISTIC,
)

CLASS_ORDER = _LABEL_ORDER
NUM_CLASSES = len(_LABEL_ORDER)


@dataclass(frozen=True)
class PhysicalSpec:
    """Gross vehicle mass (metric tons) and total height (meters)."""

    gvm_tons: float
    height_m: float

    def __post_init__(self):
        if not (self.gvm_tons > 0 and self.gvm_tons < float("inf")):
            raise ValidationError(f"gvm_tons must be positive, got {self.gvm_tons}")
        if not (self.height_m > 0 and self.height_m < float("inf")):
            raise ValidationError(f"height_m must be positive, got {self.height_m}")


@dataclass(frozen=True)
class PhysicalClassification:
    vehicle_class: VehicleClass
    # True for the combination the band table leaves open: light mass with
    # an over-3m body. Classified medium-duty by the precedence rule.
    oversize_warning: bool = False


def classify_physical_detailed(spec: PhysicalSpec) -> PhysicalClassification:
    """Classify by physical rules; mass takes precedence over height.

    gvm > 3.5 t is always heavy-duty. At or under 3.5 t, height <= 2 m is
    light-duty and height <= 3 m is medium-duty. Taller light-mass vehicles
    fall back to medium-duty with a warning flag. Never returns the
    non-logistic class.
    """
    if spec.gvm_tons > GVM_LIMIT_TONS:
        return PhysicalClassification(VehicleClass.HEAVY_DUTY)
    if spec.height_m <= LIGHT_HEIGHT_LIMIT_M:
        return PhysicalClassification(VehicleClass.LIGHT_DUTY)
    if spec.height_m <= MEDIUM_HEIGHT_LIMIT_M:
        return PhysicalClassification(VehicleClass.MEDIUM_DUTY)
    return PhysicalClassification(VehicleClass.MEDIUM_DUTY, oversize_warning=True)


def classify_physical(spec: PhysicalSpec) -> VehicleClass:
    """classify_physical_detailed without the warning flag."""
    return classify_physical_detailed(spec).vehicle_class


_WS = re.compile(r"\s+")


def normalize_name(text: str) -> str:
    """Lowercased, trimmed, internal whitespace collapsed to single spaces."""
    return _WS.sub(" ", text.strip()).lower()


@dataclass(frozen=True)
class ModelRegistryEntry:
    make: str
    model: str
    vehicle_class: VehicleClass
    spec: Optional[PhysicalSpec] = None
    query_terms: tuple[str, ...] = field(default_factory=tuple)

    @property
    def key(self) -> tuple[str, str]:
        return (normalize_name(self.make), normalize_name(self.model))

    @property
    def display_name(self) -> str:
        return f"{self.make} {self.model}"


class ModelRegistry:
    """Immutable, validated collection of make/model entries.

    Safe for concurrent reads; construction rejects duplicate (make, model)
    pairs and entries whose physical spec contradicts their class.
    """

    def __init__(self, entries: Iterable[ModelRegistryEntry]):
        self._entries: tuple[ModelRegistryEntry, ...] = tuple(entries)
        self._index: dict[tuple[str, str], ModelRegistryEntry] = {}
        for entry in self._entries:
            if entry.key in self._index:
                raise RegistryError(
                    f"duplicate entry for {entry.display_name!r}"
                )
            _check_spec_consistency(entry)
            self._index[entry.key] = entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def entries(self) -> tuple[ModelRegistryEntry, ...]:
        return self._entries

    def get(self, make: str, model: str) -> Optional[ModelRegistryEntry]:
        return self._index.get((normalize_name(make), normalize_name(model)))

    def lookup_model(self, make: str, model: str) -> VehicleClass:
        """Registered class for a make/model; case and spacing insensitive."""
        entry = self.get(make, model)
        if entry is None:
            raise UnknownModelError(f"no registry entry for {make!r} {model!r}")
        return entry.vehicle_class

    def entries_for_class(self, vehicle_class: VehicleClass) -> list[ModelRegistryEntry]:
        return [e for e in self._entries if e.vehicle_class == vehicle_class]

    def classes(self) -> set[VehicleClass]:
        return {e.vehicle_class for e in self._entries}


def lookup_model(registry: ModelRegistry, make: str, model: str) -> VehicleClass:
    return registry.lookup_model(make, model)


def _check_spec_consistency(entry: ModelRegistryEntry) -> None:
    if entry.spec is None:
        return
    derived = classify_physical(entry.spec)
    if derived != entry.vehicle_class:
        raise RegistryError(
            f"{entry.display_name!r}: physical spec classifies as "
            f"{derived.value}, entry says {entry.vehicle_class.value}"
            + (
                " (non_logistic entries must not carry a physical spec)"
                if entry.vehicle_class is VehicleClass.NON_LOGISTIC
                else ""
            )
        )


# Registry file format: UTF-8 text, one record per line. Lines starting
# with '#' and blank lines are skipped. The first record line must be the
# header below. Fields are pipe-separated; gvm_tons/height_m may be empty
# (both or neither); query_terms is a semicolon-separated list, may be empty.
REGISTRY_HEADER = "make|model|class|gvm_tons|height_m|query_terms"


def parse_registry(text: str, source: str = "<string>") -> ModelRegistry:
    entries: list[ModelRegistryEntry] = []
    seen: dict[tuple[str, str], int] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != REGISTRY_HEADER:
                raise RegistryError(
                    f"expected header {REGISTRY_HEADER!r}, got {line!r}",
                    line=lineno,
                )
            header_seen = True
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 6:
            raise RegistryError(
                f"expected 6 pipe-separated fields, got {len(fields)}",
                line=lineno,
            )
        make, model, class_text, gvm_text, height_text, terms_text = fields
        if not make or not model:
            raise RegistryError("make and model must be non-empty", line=lineno)
        try:
            vehicle_class = VehicleClass.parse(class_text)
        except ValidationError as exc:
            raise RegistryError(str(exc), line=lineno) from None
        if bool(gvm_text) != bool(height_text):
            raise RegistryError(
                "gvm_tons and height_m must be given together", line=lineno
            )
        spec = None
        if gvm_text:
            try:
                spec = PhysicalSpec(float(gvm_text), float(height_text))
            except (ValueError, ValidationError) as exc:
                raise RegistryError(f"bad physical spec: {exc}", line=lineno) from None
        terms = tuple(t.strip() for t in terms_text.split(";") if t.strip())
        entry = ModelRegistryEntry(make, model, vehicle_class, spec, terms)
        if entry.key in seen:
            raise RegistryError(
                f"duplicate entry for {entry.display_name!r} "
                f"(first seen on line {seen[entry.key]})",
                line=lineno,
            )
        try:
            _check_spec_consistency(entry)
        except RegistryError as exc:
            raise RegistryError(str(exc), line=lineno) from None
        seen[entry.key] = lineno
        entries.append(entry)
    return ModelRegistry(entries)


def load_registry(path) -> ModelRegistry:
    """Parse and validate a registry file; errors carry 1-based line numbers."""
    path = Path(path)
    return parse_registry(path.read_text(encoding="utf-8"), source=str(path))


def format_registry(registry: ModelRegistry) -> str:
    lines = [REGISTRY_HEADER]
    for e in registry:
        gvm = f"{e.spec.gvm_tons:g}" if e.spec else ""
        height = f"{e.spec.height_m:g}" if e.spec else ""
        lines.append(
            "|".join([e.make, e.model, e.vehicle_class.value, gvm, height,
                      ";".join(e.query_terms)])
        )
    return "\n".join(lines) + "\n"


def bundled_registry_path() -> Path:
    """Path of the registry shipped with the package."""
    return Path(__file__).parent / "data" / "registry.txt"


def load_bundled_registry() -> ModelRegistry:
    return load_registry(bundled_registry_path())
