"""Per-model query planning with balanced per-class targets."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional

from ..errors import PlanError, ValidationError
from ..taxonomy import CLASS_ORDER, ModelRegistry, VehicleClass, normalize_name


class SourceKind(Enum):
    SEARCH_ENGINE = "search_engine"
    CAD_RENDER = "cad_render"
    # offline source over fixture directories; keeps the pipeline testable
    # without network access
    LOCAL_FOLDER = "local_folder"

    @classmethod
    def parse(cls, text: str) -> "SourceKind":
        key = text.strip().lower().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(
                f"unknown source kind {text!r}; expected one of "
                + ", ".join(s.value for s in cls)
            ) from None


# extra query words appended per source
SOURCE_QUALIFIERS: dict[SourceKind, tuple[str, ...]] = {
    SourceKind.SEARCH_ENGINE: (),
    SourceKind.CAD_RENDER: ("cad", "3d", "render"),
    SourceKind.LOCAL_FOLDER: (),
}


@dataclass(frozen=True)
class PlanEntry:
    make: str
    model: str
    vehicle_class: VehicleClass
    source: SourceKind
    query: str
    target: int

    def to_json(self) -> dict:
        return {
            "record": "plan_entry",
            "make": self.make,
            "model": self.model,
            "class": self.vehicle_class.value,
            "source": self.source.value,
            "query": self.query,
            "target": self.target,
        }


@dataclass
class QueryPlan:
    entries: tuple[PlanEntry, ...]
    per_class_target: int
    source_mix: dict[SourceKind, float]

    def class_total(self, vehicle_class: VehicleClass) -> int:
        return sum(e.target for e in self.entries if e.vehicle_class == vehicle_class)

    def sources(self) -> set[SourceKind]:
        return {e.source for e in self.entries}


def _query_string(entry_make, entry_model, query_terms, source: SourceKind) -> str:
    words = [entry_make, entry_model, *query_terms, *SOURCE_QUALIFIERS[source]]
    return " ".join(w for w in words if w)


def _largest_remainder(targets: list[float], total: int) -> list[int]:
    floors = [int(t) for t in targets]
    counts = list(floors)
    order = sorted(range(len(targets)), key=lambda i: (-(targets[i] - floors[i]), i))
    for i in order[: total - sum(floors)]:
        counts[i] += 1
    return counts


def build_query_plan(
    registry: ModelRegistry,
    per_class_target: int,
    source_mix: Optional[Mapping[SourceKind, float]] = None,
) -> QueryPlan:
    """Split each class target across its models and the source mix.

    Per class: the target is apportioned to sources by largest remainder
    (ties toward the source declared first), then split evenly across that
    class's models sorted by normalized name, remainder going to the first
    models. Zero-target entries are dropped.
    """
    if per_class_target < 0:
        raise PlanError(f"per-class target must be >= 0, got {per_class_target}")
    if source_mix is None:
        source_mix = {SourceKind.SEARCH_ENGINE: 1.0}
    mix = {k: float(v) for k, v in source_mix.items() if float(v) != 0.0}
    if any(v < 0 for v in mix.values()):
        raise PlanError("source mix fractions must be non-negative")
    if not mix or abs(sum(mix.values()) - 1.0) > 1e-9:
        raise PlanError(f"source mix fractions must sum to 1, got {sum(mix.values())}")

    entries: list[PlanEntry] = []
    if per_class_target > 0:
        missing = [c.value for c in CLASS_ORDER if not registry.entries_for_class(c)]
        if missing:
            raise PlanError(
                "no registered models for class(es): " + ", ".join(missing)
            )
        sources = [s for s in SourceKind if s in mix]
        for vehicle_class in CLASS_ORDER:
            models = sorted(
                registry.entries_for_class(vehicle_class),
                key=lambda e: normalize_name(f"{e.make} {e.model}"),
            )
            source_targets = _largest_remainder(
                [mix[s] * per_class_target for s in sources], per_class_target
            )
            for source, source_target in zip(sources, source_targets):
                base, extra = divmod(source_target, len(models))
                for i, model in enumerate(models):
                    target = base + (1 if i < extra else 0)
                    if target == 0:
                        continue
                    entries.append(
                        PlanEntry(
                            make=model.make,
                            model=model.model,
                            vehicle_class=vehicle_class,
                            source=source,
                            query=_query_string(
                                model.make, model.model, model.query_terms, source
                            ),
                            target=target,
                        )
                    )
    return QueryPlan(tuple(entries), per_class_target, dict(mix))


def write_plan(plan: QueryPlan, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "record": "plan_meta",
            "schema_version": 1,
            "per_class_target": plan.per_class_target,
            "source_mix": {k.value: v for k, v in plan.source_mix.items()},
        }
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for entry in plan.entries:
            fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")


def read_plan(path, registry: Optional[ModelRegistry] = None) -> QueryPlan:
    """Load a plan file; with a registry, verify every entry references it."""
    path = Path(path)
    meta = None
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PlanError(f"{path}:{lineno}: not valid JSON ({exc})") from None
            record = data.get("record")
            if record == "plan_meta":
                meta = data
            elif record == "plan_entry":
                try:
                    entries.append(
                        PlanEntry(
                            make=data["make"],
                            model=data["model"],
                            vehicle_class=VehicleClass.parse(data["class"]),
                            source=SourceKind.parse(data["source"]),
                            query=data["query"],
                            target=int(data["target"]),
                        )
                    )
                except (KeyError, ValidationError) as exc:
                    raise PlanError(f"{path}:{lineno}: bad entry ({exc})") from None
            else:
                raise PlanError(f"{path}:{lineno}: unknown record {record!r}")
    if meta is None:
        raise PlanError(f"{path}: missing plan_meta record")
    if registry is not None:
        for entry in entries:
            registered = registry.get(entry.make, entry.model)
            if registered is None:
                raise PlanError(
                    f"plan entry {entry.make!r} {entry.model!r} is not in the registry"
                )
            if registered.vehicle_class != entry.vehicle_class:
                raise PlanError(
                    f"plan entry {entry.make!r} {entry.model!r} claims "
                    f"{entry.vehicle_class.value}, registry says "
                    f"{registered.vehicle_class.value}"
                )
    mix = {
        SourceKind.parse(k): float(v)
        for k, v in meta.get("source_mix", {}).items()
    }
    return QueryPlan(tuple(entries), int(meta.get("per_class_target", 0)), mix)
