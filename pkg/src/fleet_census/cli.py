"""fleet-census command line interface.

One subcommand group per pipeline stage plus ``run`` for the orchestrated
pipeline. Exit codes: 0 success, 1 stage/operation failure, 2 configuration
error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .curation import (
    CurationConfig,
    SidecarDetector,
    check_detections,
    curate_run,
)
from .dataset import (
    BalanceResult,
    assign_splits,
    balance,
    compact,
    load_manifest,
    mark_quarantined,
    split as split_balanced,
    stats,
)
from .errors import ConfigError, FleetCensusError
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
from .learner import TrainConfig, load_head, predict_store, save_head, train_head
from .pipeline import (
    EXIT_CONFIG_ERROR,
    EXIT_STAGE_FAILURE,
    load_config,
    parse_source_mix,
    run_pipeline,
)
from .taxonomy import PhysicalSpec, classify_physical_detailed, load_registry


def _fail(message: str, code: int = EXIT_STAGE_FAILURE):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG_ERROR)
    except FleetCensusError as exc:
        _fail(str(exc))


def _print_version(ctx, param, value):
    if not value or ctx.resilient_parsing:
        return
    click.echo(f"fleet-census, version {__version__}")
    ctx.exit()


def _version_option() -> click.Option:
    return click.Option(
        ["--version"],
        is_flag=True,
        expose_value=False,
        is_eager=True,
        callback=_print_version,
        help="Show the version and exit.",
    )


def _add_version_everywhere(command: click.Command) -> None:
    """--version on every subcommand, not only the top-level group."""
    if not any(parameter.name == "version" for parameter in command.params):
        command.params.append(_version_option())
    if isinstance(command, click.Group):
        for sub in command.commands.values():
            _add_version_everywhere(sub)


@click.group()
@click.version_option(version=__version__, prog_name="fleet-census")
def main():
    """Build balanced logistic-vehicle image datasets and train/evaluate a
    classifier head over stored backbone features."""


# -- taxonomy ----------------------------------------------------------------
@main.group()
def taxonomy():
    """Vehicle classes and the make/model registry."""


@taxonomy.command("validate")
@click.argument("registry_file", type=click.Path(exists=True, dir_okay=False))
def taxonomy_validate(registry_file):
    """Parse and validate a registry file."""
    registry = _guard(load_registry, registry_file)
    per_class = {
        c.value: len(registry.entries_for_class(c))
        for c in sorted(registry.classes(), key=lambda c: c.value)
    }
    click.echo(json.dumps({"models": len(registry), "per_class": per_class}, indent=2))


@taxonomy.command("classify")
@click.option("--gvm", type=float, required=True, help="gross vehicle mass in tons")
@click.option("--height", type=float, required=True, help="total height in meters")
def taxonomy_classify(gvm, height):
    """Classify a vehicle from physical measurements."""
    result = _guard(lambda: classify_physical_detailed(PhysicalSpec(gvm, height)))
    payload = {"class": result.vehicle_class.value}
    if result.oversize_warning:
        payload["warning"] = "height above the medium band; classified by mass"
    click.echo(json.dumps(payload))


# -- ingest --------------------------------------------------------------
@main.group()
def ingest():
    """Query planning and image fetching."""


@ingest.command("plan")
@click.option("--registry", "registry_file", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--per-class", type=int, required=True)
@click.option("--source-mix", default="search_engine=1.0", show_default=True,
              help="comma list of source=fraction")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ingest_plan(registry_file, per_class, source_mix, out_path):
    """Write a balanced per-model query plan."""
    registry = _guard(load_registry, registry_file)
    mix = _guard(parse_source_mix, source_mix)
    plan = _guard(build_query_plan, registry, per_class, mix)
    write_plan(plan, out_path)
    click.echo(f"wrote {len(plan.entries)} entries to {out_path}")


@ingest.command("run")
@click.option("--plan", "plan_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--local-root", type=click.Path(exists=True, file_okay=False),
              help="fixture directory for the local_folder source")
@click.option("--max-workers", type=int, default=4, show_default=True)
def ingest_run_command(plan_path, out_dir, local_root, max_workers):
    """Fetch a plan's images into OUT (idempotent by content hash)."""
    plan = _guard(read_plan, plan_path)
    adapters = {}
    if local_root is not None:
        adapters[SourceKind.LOCAL_FOLDER] = LocalFolderAdapter(local_root)
    report = _guard(ingest_run, plan, adapters, out_dir, max_workers=max_workers)
    click.echo(json.dumps(report.to_dict(), indent=2))


# -- curate ------------------------------------------------------------------
@main.group()
def curate():
    """Validation, detection-driven cropping, deduplication."""


@curate.command("run")
@click.option("--in", "ingest_dir", required=True, type=click.Path(file_okay=False))
@click.option("--detections", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--confidence-floor", type=float, default=0.5, show_default=True)
@click.option("--min-crop-side", type=int, default=64, show_default=True)
@click.option("--hamming-threshold", type=int, default=4, show_default=True)
def curate_run_command(ingest_dir, detections, out_dir, confidence_floor,
                       min_crop_side, hamming_threshold):
    """Curate ingested raws into clean vehicle crops."""
    detector = _guard(SidecarDetector, detections)
    report = _guard(
        curate_run, ingest_dir, detector, out_dir,
        CurationConfig(
            confidence_floor=confidence_floor,
            min_crop_side=min_crop_side,
            hamming_threshold=hamming_threshold,
        ),
    )
    click.echo(json.dumps(report.to_dict(), indent=2))


@curate.command("quarantine")
@click.argument("content_hash")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--restore", is_flag=True, help="lift the quarantine instead")
def curate_quarantine(content_hash, manifest_path, restore):
    """Mark a curated image as quarantined (excluded from balancing)."""
    _guard(mark_quarantined, manifest_path, content_hash, not restore)
    click.echo(f"{'restored' if restore else 'quarantined'} {content_hash}")


@curate.command("check-detections")
@click.argument("detections_file", type=click.Path(exists=True, dir_okay=False))
def curate_check_detections(detections_file):
    """Validate a detection sidecar file."""
    report = check_detections(detections_file)
    click.echo(json.dumps({"errors": report.errors, "warnings": report.warnings}, indent=2))
    if not report.ok:
        sys.exit(EXIT_STAGE_FAILURE)


# -- dataset -----------------------------------------------------------------
@main.group()
def dataset():
    """Manifest balancing, splitting and statistics."""


@dataset.command("balance")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--per-class", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--equalize", is_flag=True,
              help="cut every class to the smallest achievable size")
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="write the selection as JSON")
def dataset_balance(manifest_path, per_class, seed, equalize, out_path):
    """Select a balanced per-class sample from the manifest."""
    manifest = _guard(load_manifest, manifest_path)
    result = _guard(balance, manifest, per_class, seed, equalize)
    if out_path:
        Path(out_path).write_text(
            json.dumps(result.to_dict(), indent=2, sort_keys=True), encoding="utf-8"
        )
    summary = result.to_dict()
    summary.pop("selected")
    click.echo(json.dumps(summary, indent=2))


@dataset.command("split")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--balanced", "balanced_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--test-fraction", type=float, required=True)
@click.option("--seed", type=int, required=True)
def dataset_split(manifest_path, balanced_path, test_fraction, seed):
    """Assign stratified train/test splits over a balanced selection."""
    data = json.loads(Path(balanced_path).read_text(encoding="utf-8"))
    balanced = BalanceResult(
        selected=data["selected"],
        per_class_requested=data["per_class_requested"],
        shortfalls=data["shortfalls"],
        common_size=data["common_size"],
    )
    assignments = _guard(split_balanced, balanced, test_fraction, seed)
    _guard(assign_splits, manifest_path, assignments)
    test = sum(1 for v in assignments.values() if v == "test")
    click.echo(json.dumps(
        {"assigned": len(assignments), "test": test, "train": len(assignments) - test}
    ))


@dataset.command("stats")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def dataset_stats(manifest_path):
    """Per-class, per-source and per-split counts."""
    manifest = _guard(load_manifest, manifest_path)
    click.echo(json.dumps(stats(manifest).to_dict(), indent=2))


@dataset.command("compact")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def dataset_compact(manifest_path):
    """Rewrite the manifest log as one folded line per image."""
    count = _guard(compact, manifest_path)
    click.echo(f"compacted to {count} entries")


# -- learn -------------------------------------------------------------------
@main.group()
def learn():
    """Classifier-head training and prediction over feature stores."""


@learn.command("train")
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--learning-rate", "--lr", type=float, default=0.01, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--weight-decay", type=float, default=1e-4, show_default=True)
@click.option("--hidden", default="", help="comma list of hidden layer sizes")
def learn_train(features_path, manifest_path, out_path, epochs, learning_rate,
                batch_size, seed, weight_decay, hidden):
    """Train the softmax head on the manifest's train split."""
    manifest = _guard(load_manifest, manifest_path)
    train_hashes = [
        e.content_hash for e in manifest.active_entries() if e.split == "train"
    ]
    store = _guard(read_feature_store, features_path)
    config = _guard(
        TrainConfig,
        epochs=epochs,
        learning_rate=learning_rate,
        batch_size=batch_size,
        seed=seed,
        weight_decay=weight_decay,
        hidden_sizes=tuple(int(h) for h in hidden.split(",") if h.strip()),
    )
    head, log = _guard(train_head, store, train_hashes, config)
    save_head(out_path, head, config, store.backbone_id)
    click.echo(json.dumps(log.to_dict(), indent=2))


@learn.command("predict")
@click.option("--head", "head_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="write JSONL predictions here instead of stdout")
def learn_predict(head_path, features_path, out_path):
    """Predict classes for every row of a feature store."""
    head, _, _ = _guard(load_head, head_path)
    store = _guard(read_feature_store, features_path)
    hashes, _, preds, probs = _guard(predict_store, head, store)
    lines = [
        json.dumps({
            "content_hash": h,
            "predicted": int(p),
            "probabilities": [float(x) for x in row],
        }, sort_keys=True)
        for h, p, row in zip(hashes, preds, probs)
    ]
    if out_path:
        Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"wrote {len(lines)} predictions to {out_path}")
    else:
        for line in lines:
            click.echo(line)


@learn.command("check-features")
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--dim", type=int, help="expected feature width")
def learn_check_features(features_path, manifest_path, dim):
    """Validate a feature store file."""
    manifest_hashes = None
    if manifest_path:
        manifest = _guard(load_manifest, manifest_path)
        manifest_hashes = {e.content_hash for e in manifest.active_entries()}
    report = check_feature_store(features_path, expected_dim=dim,
                                 manifest_hashes=manifest_hashes)
    click.echo(json.dumps({"errors": report.errors, "warnings": report.warnings}, indent=2))
    if not report.ok:
        sys.exit(EXIT_STAGE_FAILURE)


# -- eval --------------------------------------------------------------------
@main.group(name="eval")
def eval_group():
    """Accuracy and confusion-matrix evaluation."""


@eval_group.command("run")
@click.option("--head", "head_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "csv", "json"]),
              default="text", show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
def eval_run(head_path, features_path, manifest_path, fmt, out_path):
    """Evaluate a trained head on the manifest's test split."""
    manifest = _guard(load_manifest, manifest_path)
    test_hashes = [
        e.content_hash for e in manifest.active_entries() if e.split == "test"
    ]
    head, _, _ = _guard(load_head, head_path)
    store = _guard(read_feature_store, features_path)
    report = _guard(evaluate, head, store, test_hashes)
    rendered = render_report(report, fmt)
    if out_path:
        Path(out_path).write_text(rendered, encoding="utf-8")
        click.echo(f"wrote {fmt} report to {out_path}")
    else:
        click.echo(rendered, nl=False)


# -- run -----------------------------------------------------------------
@main.command("run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--stages", help="comma list of stages to run (dependency order kept)")
@click.option("--set", "overrides", multiple=True, metavar="SECTION.KEY=VALUE",
              help="override a config key (repeatable; wins over the file)")
def run_command(config_path, stages, overrides):
    """Run the configured pipeline end to end (or a stage subset)."""
    try:
        override_map = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError([f"--set {item!r} is not SECTION.KEY=VALUE"])
            dotted, value = item.split("=", 1)
            override_map[dotted.strip()] = value.strip()
        config = load_config(config_path, override_map)
        stage_list = [s.strip() for s in stages.split(",")] if stages else None
        result = run_pipeline(config, stage_list)
    except ConfigError as exc:
        for problem in exc.problems:
            click.echo(f"config error: {problem}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)
    except FleetCensusError as exc:
        _fail(str(exc))
    for stage_result in result.results:
        click.echo(f"{stage_result.stage}: {stage_result.status}")
    if result.error is not None:
        click.echo(
            f"error in stage {result.error['stage']}: {result.error['message']}",
            err=True,
        )
    sys.exit(result.exit_code)


_add_version_everywhere(main)


if __name__ == "__main__":
    main()
