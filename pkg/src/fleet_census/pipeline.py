"""Multi-stage pipeline orchestrator.

Stages run in dependency order: taxonomy -> plan -> ingest -> curate ->
balance -> split -> extract (external feature extraction) -> train -> eval.
Stage freshness is decided by content fingerprints of inputs plus the
relevant config slice, never by timestamps; a finished pipeline reruns as
nine up-to-date stages. Reports are JSON lines under
``<workspace>/reports/``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .curation import CurationConfig, SidecarDetector, curate_run
from .dataset import (
    SPLIT_TEST,
    SPLIT_TRAIN,
    assign_splits,
    balance,
    load_manifest,
    split as split_balanced,
)
from .errors import ConfigError, DependencyError, FleetCensusError, StageError
from .evaluation import evaluate, render_report
from .features import check_feature_store, read_feature_store
from .ingest import (
    LocalFolderAdapter,
    SourceKind,
    build_query_plan,
    ingest_run,
    read_plan,
    write_plan,
)
from .ingest.run import RAW_MANIFEST_NAME
from .learner import TrainConfig, load_head, save_head, train_head
from .taxonomy import ModelRegistry, load_registry

STAGES = (
    "taxonomy",
    "plan",
    "ingest",
    "curate",
    "balance",
    "split",
    "extract",
    "train",
    "eval",
)

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def parse_source_mix(text: str) -> dict[SourceKind, float]:
    """Parse "search_engine=0.5,cad_render=0.5" style mixes."""
    mix: dict[SourceKind, float] = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ConfigError([f"bad source mix component {chunk!r}"])
        name, value = chunk.split("=", 1)
        mix[SourceKind.parse(name)] = float(value)
    if not mix:
        raise ConfigError([f"empty source mix {text!r}"])
    return mix


@dataclass
class PipelineConfig:
    workspace: Path
    registry: Path
    per_class_target: int
    source_mix: dict[SourceKind, float]
    local_root: Optional[Path]
    detections: Optional[Path]
    confidence_floor: float
    min_crop_side: int
    hamming_threshold: int
    balance_per_class: int
    balance_seed: int
    equalize: bool
    test_fraction: float
    split_seed: int
    extract_command: Optional[str]
    feature_dim: Optional[int]
    train: TrainConfig
    eval_format: str
    config_dir: Path = field(default_factory=Path)

    # derived locations, all inside the workspace
    @property
    def reports_dir(self) -> Path:
        return self.workspace / "reports"

    @property
    def plan_path(self) -> Path:
        return self.workspace / "plan.jsonl"

    @property
    def ingest_dir(self) -> Path:
        return self.workspace / "ingested"

    @property
    def curated_dir(self) -> Path:
        return self.workspace / "curated"

    @property
    def manifest_path(self) -> Path:
        return self.curated_dir / "manifest.jsonl"

    @property
    def balanced_path(self) -> Path:
        return self.workspace / "balanced.json"

    @property
    def features_path(self) -> Path:
        return self.workspace / "features.bin"

    @property
    def head_path(self) -> Path:
        return self.workspace / "head.bin"

    @property
    def eval_path(self) -> Path:
        return self.workspace / f"eval_report.{self.eval_format}"

    @property
    def state_path(self) -> Path:
        return self.reports_dir / "state.json"


def load_config(path, overrides: Optional[dict[str, str]] = None) -> PipelineConfig:
    """Parse and validate an INI config; every problem is reported at once.

    ``overrides`` maps "section.key" to replacement values and wins over
    the file (command line > config file).
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError([f"cannot parse {path}: {exc}"]) from None

    problems: list[str] = []
    for dotted, value in (overrides or {}).items():
        if "." not in dotted:
            problems.append(f"override {dotted!r} is not of the form section.key")
            continue
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    base = path.parent

    def resolve(text: str) -> Path:
        p = Path(text)
        return p if p.is_absolute() else (base / p)

    def require(section: str, key: str) -> Optional[str]:
        if not parser.has_option(section, key):
            problems.append(f"missing [{section}] {key}")
            return None
        return parser.get(section, key)

    def optional(section: str, key: str, default=None):
        return parser.get(section, key) if parser.has_option(section, key) else default

    workspace_text = require("paths", "workspace")
    registry_text = require("paths", "registry")

    per_class_target = 0
    text = require("ingest", "per_class_target")
    if text is not None:
        try:
            per_class_target = int(text)
            if per_class_target < 1:
                problems.append("[ingest] per_class_target must be >= 1")
        except ValueError:
            problems.append(f"[ingest] per_class_target is not an integer: {text!r}")

    source_mix: dict[SourceKind, float] = {SourceKind.LOCAL_FOLDER: 1.0}
    mix_text = optional("ingest", "source_mix", "local_folder=1.0")
    try:
        source_mix = parse_source_mix(mix_text)
    except (ConfigError, ValueError) as exc:
        problems.append(f"[ingest] source_mix: {exc}")

    local_root = None
    if SourceKind.LOCAL_FOLDER in source_mix:
        text = require("ingest", "local_root")
        if text is not None:
            local_root = resolve(text)
            if not local_root.is_dir():
                problems.append(f"[ingest] local_root does not exist: {local_root}")

    detections = None
    text = require("curate", "detections")
    if text is not None:
        detections = resolve(text)
        if not detections.exists():
            problems.append(f"[curate] detections file does not exist: {detections}")

    def number(section, key, default, cast, predicate, description):
        text_value = optional(section, key)
        if text_value is None:
            return default
        try:
            value = cast(text_value)
        except ValueError:
            problems.append(f"[{section}] {key} is not {description}: {text_value!r}")
            return default
        if not predicate(value):
            problems.append(f"[{section}] {key}={value} is out of range")
        return value

    confidence_floor = number(
        "curate", "confidence_floor", 0.5, float, lambda v: 0.0 <= v <= 1.0, "a float"
    )
    min_crop_side = number(
        "curate", "min_crop_side", 64, int, lambda v: v >= 1, "an integer"
    )
    hamming_threshold = number(
        "curate", "hamming_threshold", 4, int, lambda v: 0 <= v <= 64, "an integer"
    )

    # seeds are mandatory: reproducibility must never depend on wall clock
    balance_per_class = number(
        "dataset", "balance_per_class", None, int, lambda v: v >= 1, "an integer"
    )
    if balance_per_class is None:
        problems.append("missing [dataset] balance_per_class")
    balance_seed = number("dataset", "balance_seed", None, int, lambda v: True, "an integer")
    if balance_seed is None:
        problems.append("missing [dataset] balance_seed (seeds must be explicit)")
    test_fraction = number(
        "dataset", "test_fraction", None, float, lambda v: 0.0 < v < 1.0, "a float"
    )
    if test_fraction is None:
        problems.append("missing [dataset] test_fraction")
    split_seed = number("dataset", "split_seed", None, int, lambda v: True, "an integer")
    if split_seed is None:
        problems.append("missing [dataset] split_seed (seeds must be explicit)")
    equalize = optional("dataset", "equalize", "false").strip().lower() in ("1", "true", "yes")

    extract_command = optional("extract", "command")
    feature_dim = number("extract", "dim", None, int, lambda v: v >= 1, "an integer")

    epochs = number("train", "epochs", 10, int, lambda v: v >= 1, "an integer")
    learning_rate = number(
        "train", "learning_rate", 0.01, float, lambda v: v >= 0, "a float"
    )
    batch_size = number("train", "batch_size", 32, int, lambda v: v >= 1, "an integer")
    train_seed = number("train", "seed", None, int, lambda v: True, "an integer")
    if train_seed is None:
        problems.append("missing [train] seed (seeds must be explicit)")
    weight_decay = number(
        "train", "weight_decay", 1e-4, float, lambda v: v >= 0, "a float"
    )
    hidden_text = optional("train", "hidden_sizes", "")
    try:
        hidden_sizes = tuple(int(h) for h in hidden_text.split(",") if h.strip())
    except ValueError:
        problems.append(f"[train] hidden_sizes is not a comma list: {hidden_text!r}")
        hidden_sizes = ()

    eval_format = optional("eval", "format", "json").strip().lower()
    if eval_format not in ("text", "csv", "json"):
        problems.append(f"[eval] format must be text, csv or json, got {eval_format!r}")

    registry_path = None
    if registry_text is not None:
        registry_path = resolve(registry_text)
        if not registry_path.exists():
            problems.append(f"[paths] registry does not exist: {registry_path}")

    if problems:
        raise ConfigError(problems)

    return PipelineConfig(
        workspace=resolve(workspace_text),
        registry=registry_path,
        per_class_target=per_class_target,
        source_mix=source_mix,
        local_root=local_root,
        detections=detections,
        confidence_floor=confidence_floor,
        min_crop_side=min_crop_side,
        hamming_threshold=hamming_threshold,
        balance_per_class=balance_per_class,
        balance_seed=balance_seed,
        equalize=equalize,
        test_fraction=test_fraction,
        split_seed=split_seed,
        extract_command=extract_command,
        feature_dim=feature_dim,
        train=TrainConfig(
            epochs=epochs,
            learning_rate=learning_rate,
            batch_size=batch_size,
            seed=train_seed,
            weight_decay=weight_decay,
            hidden_sizes=hidden_sizes,
        ),
        eval_format=eval_format,
        config_dir=base,
    )


def _file_digest(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _tree_digest(root: Path) -> str:
    """Digest of a directory's file names and sizes (cheap change signal)."""
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(str(path.stat().st_size).encode())
    return digest.hexdigest()


def manifest_fingerprint(path: Path, include_split: bool) -> str:
    """Fingerprint of the folded manifest state.

    Split-blind for stages upstream of splitting, so appending split
    records does not dirty them; split-aware for train/eval.
    """
    manifest = load_manifest(path)
    digest = hashlib.sha256()
    for entry in manifest:
        digest.update(entry.content_hash.encode())
        digest.update(entry.vehicle_class.value.encode())
        digest.update(b"1" if entry.quarantined else b"0")
        if include_split:
            digest.update(entry.split.encode())
    return digest.hexdigest()


@dataclass
class StageResult:
    stage: str
    status: str  # "ran" | "up-to-date"
    report: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"stage": self.stage, "status": self.status, "report": self.report}


@dataclass
class PipelineResult:
    exit_code: int
    results: list[StageResult] = field(default_factory=list)
    error: Optional[dict] = None


class Pipeline:
    def __init__(self, config: PipelineConfig):
        self.config = config
        self._registry: Optional[ModelRegistry] = None

    # -- state ------------------------------------------------------------
    def _load_state(self) -> dict:
        path = self.config.state_path
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return {}

    def _save_state(self, state: dict) -> None:
        path = self.config.state_path
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(state, indent=2, sort_keys=True), encoding="utf-8")

    def _fingerprint(self, stage: str) -> str:
        config = self.config
        parts: dict = {"stage": stage}
        if stage == "taxonomy":
            parts["registry"] = _file_digest(config.registry)
        elif stage == "plan":
            parts["registry"] = _file_digest(config.registry)
            parts["per_class_target"] = config.per_class_target
            parts["source_mix"] = {k.value: v for k, v in config.source_mix.items()}
        elif stage == "ingest":
            self._require(config.plan_path, "plan")
            parts["plan"] = _file_digest(config.plan_path)
            if config.local_root is not None:
                parts["local_root"] = _tree_digest(config.local_root)
        elif stage == "curate":
            raw_manifest = config.ingest_dir / RAW_MANIFEST_NAME
            self._require(raw_manifest, "ingest")
            parts["raw_manifest"] = _file_digest(raw_manifest)
            parts["detections"] = _file_digest(config.detections)
            parts["thresholds"] = [
                config.confidence_floor, config.min_crop_side, config.hamming_threshold,
            ]
        elif stage == "balance":
            self._require(config.manifest_path, "curate")
            parts["manifest"] = manifest_fingerprint(config.manifest_path, include_split=False)
            parts["balance"] = [config.balance_per_class, config.balance_seed, config.equalize]
        elif stage == "split":
            self._require(config.balanced_path, "balance")
            parts["balanced"] = _file_digest(config.balanced_path)
            parts["split"] = [config.test_fraction, config.split_seed]
        elif stage == "extract":
            self._require(config.manifest_path, "curate")
            parts["manifest"] = manifest_fingerprint(config.manifest_path, include_split=False)
            parts["command"] = config.extract_command or ""
            parts["dim"] = config.feature_dim
        elif stage == "train":
            self._require(config.features_path, "extract")
            parts["features"] = _file_digest(config.features_path)
            parts["manifest"] = manifest_fingerprint(config.manifest_path, include_split=True)
            parts["train"] = self.config.train.to_dict()
        elif stage == "eval":
            self._require(config.head_path, "train")
            self._require(config.features_path, "extract")
            parts["head"] = _file_digest(config.head_path)
            parts["features"] = _file_digest(config.features_path)
            parts["manifest"] = manifest_fingerprint(config.manifest_path, include_split=True)
            parts["format"] = config.eval_format
        payload = json.dumps(parts, sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def _require(self, path: Path, producing_stage: str) -> None:
        if not path.exists():
            raise DependencyError(
                f"missing {path}; run the {producing_stage!r} stage first"
            )

    _OUTPUTS = {
        "taxonomy": (),
        "plan": ("plan_path",),
        "ingest": ("ingest_dir",),
        "curate": ("manifest_path",),
        "balance": ("balanced_path",),
        "split": (),
        "extract": ("features_path",),
        "train": ("head_path",),
        "eval": ("eval_path",),
    }

    def _outputs_present(self, stage: str) -> bool:
        return all(
            getattr(self.config, attr).exists() for attr in self._OUTPUTS[stage]
        )

    # -- stage bodies -------------------------------------------------------
    def _registry_loaded(self) -> ModelRegistry:
        if self._registry is None:
            self._registry = load_registry(self.config.registry)
        return self._registry

    def _stage_taxonomy(self) -> dict:
        registry = self._registry_loaded()
        per_class = {
            c.value: len(registry.entries_for_class(c))
            for c in sorted(registry.classes(), key=lambda c: c.value)
        }
        return {"models": len(registry), "per_class": per_class}

    def _stage_plan(self) -> dict:
        plan = build_query_plan(
            self._registry_loaded(), self.config.per_class_target, self.config.source_mix
        )
        write_plan(plan, self.config.plan_path)
        return {
            "entries": len(plan.entries),
            "per_class_target": plan.per_class_target,
        }

    def _adapters(self):
        adapters = {}
        if SourceKind.LOCAL_FOLDER in self.config.source_mix:
            adapters[SourceKind.LOCAL_FOLDER] = LocalFolderAdapter(self.config.local_root)
        return adapters

    def _stage_ingest(self) -> dict:
        plan = read_plan(self.config.plan_path, registry=self._registry_loaded())
        report = ingest_run(plan, self._adapters(), self.config.ingest_dir)
        return report.to_dict()

    def _stage_curate(self) -> dict:
        detector = SidecarDetector(self.config.detections)
        report = curate_run(
            self.config.ingest_dir,
            detector,
            self.config.curated_dir,
            CurationConfig(
                confidence_floor=self.config.confidence_floor,
                min_crop_side=self.config.min_crop_side,
                hamming_threshold=self.config.hamming_threshold,
            ),
        )
        return report.to_dict()

    def _stage_balance(self) -> dict:
        manifest = load_manifest(self.config.manifest_path)
        result = balance(
            manifest,
            per_class=self.config.balance_per_class,
            seed=self.config.balance_seed,
            equalize=self.config.equalize,
        )
        self.config.balanced_path.write_text(
            json.dumps(result.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
        report = result.to_dict()
        report.pop("selected")  # keep the stage report small
        return report

    def _stage_split(self) -> dict:
        balanced_data = json.loads(self.config.balanced_path.read_text(encoding="utf-8"))
        from .dataset import BalanceResult

        balanced = BalanceResult(
            selected=balanced_data["selected"],
            per_class_requested=balanced_data["per_class_requested"],
            shortfalls=balanced_data["shortfalls"],
            common_size=balanced_data["common_size"],
        )
        assignments = split_balanced(
            balanced, self.config.test_fraction, self.config.split_seed
        )
        assign_splits(self.config.manifest_path, assignments)
        counts = {SPLIT_TRAIN: 0, SPLIT_TEST: 0}
        for value in assignments.values():
            counts[value] += 1
        return {
            "assigned": len(assignments),
            "train": counts[SPLIT_TRAIN],
            "test": counts[SPLIT_TEST],
        }

    def _stage_extract(self) -> dict:
        config = self.config
        if config.extract_command:
            command = config.extract_command.format(
                python=shlex.quote(sys.executable),
                manifest=shlex.quote(str(config.manifest_path)),
                images=shlex.quote(str(config.curated_dir)),
                out=shlex.quote(str(config.features_path)),
            )
            completed = subprocess.run(
                shlex.split(command), capture_output=True, text=True
            )
            if completed.returncode != 0:
                raise StageError(
                    "extract",
                    f"command failed ({completed.returncode}): "
                    f"{completed.stderr.strip() or completed.stdout.strip()}",
                )
        elif not config.features_path.exists():
            raise DependencyError(
                f"missing feature store {config.features_path} and no "
                "[extract] command configured; run the external extraction tool"
            )
        manifest = load_manifest(config.manifest_path)
        active = {e.content_hash for e in manifest.active_entries()}
        report = check_feature_store(
            config.features_path, expected_dim=config.feature_dim, manifest_hashes=active
        )
        if report.errors:
            raise StageError("extract", "; ".join(report.errors))
        store = read_feature_store(config.features_path)
        return {
            "rows": len(store),
            "dim": store.dim,
            "backbone_id": store.backbone_id,
            "warnings": report.warnings,
        }

    def _stage_train(self) -> dict:
        manifest = load_manifest(self.config.manifest_path)
        train_hashes = [
            e.content_hash for e in manifest.active_entries() if e.split == SPLIT_TRAIN
        ]
        if not train_hashes:
            raise DependencyError("no train split assigned; run the split stage")
        store = read_feature_store(self.config.features_path)
        head, log = train_head(store, train_hashes, self.config.train)
        save_head(self.config.head_path, head, self.config.train, store.backbone_id)
        return log.to_dict()

    def _stage_eval(self) -> dict:
        manifest = load_manifest(self.config.manifest_path)
        test_hashes = [
            e.content_hash for e in manifest.active_entries() if e.split == SPLIT_TEST
        ]
        if not test_hashes:
            raise DependencyError("no test split assigned; run the split stage")
        store = read_feature_store(self.config.features_path)
        head, _, _ = load_head(self.config.head_path)
        report = evaluate(head, store, test_hashes)
        self.config.eval_path.write_text(
            render_report(report, self.config.eval_format), encoding="utf-8"
        )
        normalized, _ = report.matrix.normalized()
        return {
            "test_size": report.test_size,
            "accuracy": report.accuracy,
            "normalized_diagonal": [float(normalized[i, i]) for i in range(4)],
            "artifact": str(self.config.eval_path),
        }

    # -- driver -------------------------------------------------------------
    def run(self, stages: Optional[list[str]] = None) -> PipelineResult:
        config = self.config
        requested = list(stages) if stages else list(STAGES)
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise ConfigError([f"unknown stage {s!r}" for s in unknown])
        requested = [s for s in STAGES if s in requested]

        config.workspace.mkdir(parents=True, exist_ok=True)
        config.reports_dir.mkdir(parents=True, exist_ok=True)
        config.ingest_dir.mkdir(parents=True, exist_ok=True)
        config.curated_dir.mkdir(parents=True, exist_ok=True)

        state = self._load_state()
        result = PipelineResult(EXIT_OK)
        bodies = {
            "taxonomy": self._stage_taxonomy,
            "plan": self._stage_plan,
            "ingest": self._stage_ingest,
            "curate": self._stage_curate,
            "balance": self._stage_balance,
            "split": self._stage_split,
            "extract": self._stage_extract,
            "train": self._stage_train,
            "eval": self._stage_eval,
        }
        for stage in requested:
            started = time.perf_counter()
            try:
                fingerprint = self._fingerprint(stage)
                if state.get(stage) == fingerprint and self._outputs_present(stage):
                    stage_result = StageResult(stage, "up-to-date")
                else:
                    report = bodies[stage]()
                    report["seconds"] = round(time.perf_counter() - started, 4)
                    stage_result = StageResult(stage, "ran", report)
                    # recompute after running: the stage may consume its own
                    # outputs' state (e.g. split mutates the manifest)
                    state[stage] = self._fingerprint(stage)
                    self._save_state(state)
            except FleetCensusError as exc:
                error = {
                    "stage": stage,
                    "error": type(exc).__name__,
                    "message": str(exc),
                }
                (config.reports_dir / "errors.json").write_text(
                    json.dumps(error, indent=2, sort_keys=True), encoding="utf-8"
                )
                result.error = error
                result.exit_code = EXIT_STAGE_FAILURE
                return result
            self._write_report(stage_result)
            result.results.append(stage_result)
        return result

    def _write_report(self, stage_result: StageResult) -> None:
        path = self.config.reports_dir / f"{stage_result.stage}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(stage_result.to_json(), sort_keys=True) + "\n")


def run_pipeline(config: PipelineConfig, stages: Optional[list[str]] = None) -> PipelineResult:
    return Pipeline(config).run(stages)
