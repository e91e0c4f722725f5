import itertools
import threading
import time

import pytest
from hypothesis import given, settings, strategies as st

from fleet_census.errors import (
    ConfigError,
    FetchError,
    PlanError,
    SourceRefusedError,
)
from fleet_census.ingest import (
    FetchItem,
    HttpImageAdapter,
    LocalFolderAdapter,
    PlanEntry,
    PolitenessConfig,
    RateLimiter,
    SourceKind,
    build_query_plan,
    folder_slug,
    ingest_run,
    load_raw_manifest,
    read_plan,
    write_plan,
)
from fleet_census.ingest.run import RAW_MANIFEST_NAME, _Writer, fetch_entry
from fleet_census.taxonomy import (
    ModelRegistry,
    ModelRegistryEntry,
    VehicleClass,
)


def registry_with(counts):
    """Registry with ``counts[cls]`` synthetic models per class."""
    entries = []
    for vehicle_class, n in counts.items():
        for i in range(n):
            entries.append(
                ModelRegistryEntry(f"Make{i}", f"{vehicle_class.value}-{i}", vehicle_class)
            )
    return ModelRegistry(entries)


FULL_REGISTRY = registry_with({c: 3 for c in VehicleClass})


class TestBuildQueryPlan:
    def test_zero_target_gives_empty_plan(self):
        plan = build_query_plan(FULL_REGISTRY, 0)
        assert plan.entries == ()

    def test_remainder_goes_to_first_models_by_name(self):
        plan = build_query_plan(FULL_REGISTRY, 10)
        light = [
            e for e in plan.entries if e.vehicle_class == VehicleClass.LIGHT_DUTY
        ]
        assert [e.target for e in light] == [4, 3, 3]
        names = [f"{e.make} {e.model}" for e in light]
        assert names == sorted(names, key=str.lower)

    def test_per_class_totals_are_exact(self):
        plan = build_query_plan(FULL_REGISTRY, 20_000)
        for vehicle_class in VehicleClass:
            assert plan.class_total(vehicle_class) == 20_000

    def test_empty_class_is_named_in_error(self):
        registry = registry_with(
            {c: 2 for c in VehicleClass if c != VehicleClass.HEAVY_DUTY}
        )
        with pytest.raises(PlanError) as err:
            build_query_plan(registry, 5)
        assert "heavy_duty" in str(err.value)

    def test_source_mix_must_sum_to_one(self):
        with pytest.raises(PlanError):
            build_query_plan(
                FULL_REGISTRY, 10,
                {SourceKind.SEARCH_ENGINE: 0.6, SourceKind.CAD_RENDER: 0.6},
            )

    def test_source_mix_split(self):
        plan = build_query_plan(
            FULL_REGISTRY, 10,
            {SourceKind.SEARCH_ENGINE: 0.5, SourceKind.CAD_RENDER: 0.5},
        )
        for vehicle_class in VehicleClass:
            per_source = {
                source: sum(
                    e.target for e in plan.entries
                    if e.vehicle_class == vehicle_class and e.source == source
                )
                for source in (SourceKind.SEARCH_ENGINE, SourceKind.CAD_RENDER)
            }
            assert per_source[SourceKind.SEARCH_ENGINE] == 5
            assert per_source[SourceKind.CAD_RENDER] == 5
        assert plan.class_total(VehicleClass.LIGHT_DUTY) == 10

    def test_cad_queries_carry_qualifiers(self):
        plan = build_query_plan(FULL_REGISTRY, 4, {SourceKind.CAD_RENDER: 1.0})
        assert all("cad" in e.query for e in plan.entries)

    @settings(max_examples=40)
    @given(
        per_class=st.integers(min_value=0, max_value=5000),
        models=st.integers(min_value=1, max_value=40),
        fraction=st.integers(min_value=0, max_value=10),
    )
    def test_conservation_property(self, per_class, models, fraction):
        registry = registry_with({c: models for c in VehicleClass})
        mix = {
            SourceKind.SEARCH_ENGINE: fraction / 10.0,
            SourceKind.CAD_RENDER: 1.0 - fraction / 10.0,
        }
        plan = build_query_plan(registry, per_class, mix)
        for vehicle_class in VehicleClass:
            assert plan.class_total(vehicle_class) == per_class
        assert all(e.target >= 1 for e in plan.entries)

    def test_plan_roundtrip(self, tmp_path):
        plan = build_query_plan(FULL_REGISTRY, 7)
        path = tmp_path / "plan.jsonl"
        write_plan(plan, path)
        loaded = read_plan(path, registry=FULL_REGISTRY)
        assert loaded.entries == plan.entries
        assert loaded.per_class_target == 7

    def test_read_plan_rejects_unknown_model(self, tmp_path):
        plan = build_query_plan(FULL_REGISTRY, 2)
        path = tmp_path / "plan.jsonl"
        write_plan(plan, path)
        with pytest.raises(PlanError):
            read_plan(path, registry=registry_with({c: 1 for c in VehicleClass}))


def make_entry(target=10, source=SourceKind.LOCAL_FOLDER, make="Make0", model="light_duty-0"):
    return PlanEntry(
        make=make,
        model=model,
        vehicle_class=VehicleClass.LIGHT_DUTY,
        source=source,
        query=f"{make} {model}",
        target=target,
    )


class ListAdapter:
    """Test adapter serving canned items, optionally failing first."""

    kind = SourceKind.LOCAL_FOLDER
    max_parallel = 4

    def __init__(self, items, fail_times=0, refuse=False):
        self.items = items
        self.fail_times = fail_times
        self.refuse = refuse
        self.calls = 0

    def results(self, entry, limit):
        self.calls += 1
        if self.refuse:
            raise SourceRefusedError("quota exceeded")
        if self.calls <= self.fail_times:
            raise FetchError("transient network failure")
        yield from itertools.islice(self.items, limit)


def run_single_entry(tmp_path, adapter, entry, politeness=None, sleeps=None):
    writer = _Writer(tmp_path, set())
    (tmp_path / "raw").mkdir(exist_ok=True)
    events = fetch_entry(
        entry,
        adapter,
        writer,
        politeness or PolitenessConfig(),
        clock=lambda: 1000.0,
        sleep=(sleeps.append if sleeps is not None else lambda s: None),
    )
    return writer, events


class TestFetchEntry:
    def test_truncates_to_target(self, tmp_path):
        adapter = ListAdapter([FetchItem(f"u{i}", bytes([i])) for i in range(12)])
        writer, events = run_single_entry(tmp_path, adapter, make_entry(target=10))
        assert writer.new_records == 10
        assert events == []

    def test_empty_source_reports_shortfall(self, tmp_path):
        writer, events = run_single_entry(tmp_path, ListAdapter([]), make_entry(target=5))
        assert writer.new_records == 0
        assert [e.kind for e in events] == ["shortfall"]

    def test_duplicate_bytes_single_run_yield_two_records(self, tmp_path):
        items = [FetchItem("url-a", b"same-bytes"), FetchItem("url-b", b"same-bytes")]
        writer, events = run_single_entry(tmp_path, ListAdapter(items), make_entry(target=2))
        records = load_raw_manifest(tmp_path / RAW_MANIFEST_NAME)
        assert len(records) == 2
        assert records[0].content_hash == records[1].content_hash
        assert {r.origin for r in records} == {"url-a", "url-b"}

    def test_retries_with_exponential_backoff_then_succeeds(self, tmp_path):
        adapter = ListAdapter([FetchItem("u", b"x")], fail_times=2)
        sleeps = []
        writer, events = run_single_entry(
            tmp_path, adapter, make_entry(target=1), sleeps=sleeps
        )
        assert writer.new_records == 1
        assert sleeps == [0.5, 1.0]
        assert events == []

    def test_gives_up_after_max_attempts(self, tmp_path):
        adapter = ListAdapter([FetchItem("u", b"x")], fail_times=99)
        sleeps = []
        writer, events = run_single_entry(
            tmp_path, adapter, make_entry(target=1), sleeps=sleeps
        )
        assert writer.new_records == 0
        assert [e.kind for e in events] == ["failure"]
        assert len(sleeps) == 2  # 3 attempts, 2 backoffs

    def test_refusal_skips_without_retry(self, tmp_path):
        adapter = ListAdapter([FetchItem("u", b"x")], refuse=True)
        writer, events = run_single_entry(tmp_path, adapter, make_entry(target=1))
        assert adapter.calls == 1
        assert [e.kind for e in events] == ["refused"]

    def test_bytes_written_before_manifest_line(self, tmp_path):
        adapter = ListAdapter([FetchItem("u.png", b"payload")])
        writer, _ = run_single_entry(tmp_path, adapter, make_entry(target=1))
        (record,) = load_raw_manifest(tmp_path / RAW_MANIFEST_NAME)
        stored = tmp_path / record.stored_path
        assert stored.read_bytes() == b"payload"
        assert record.stored_path.endswith(".png")
        assert record.byte_size == 7


class TestLocalFolderAdapter:
    def test_serves_sorted_files_up_to_limit(self, tmp_path):
        directory = tmp_path / folder_slug("Make0", "light_duty-0")
        directory.mkdir(parents=True)
        for i in range(12):
            (directory / f"img{i:02d}.png").write_bytes(bytes([i]))
        adapter = LocalFolderAdapter(tmp_path)
        items = list(adapter.results(make_entry(target=10), 10))
        assert len(items) == 10
        assert [i.origin for i in items] == sorted(i.origin for i in items)

    def test_missing_directory_yields_nothing(self, tmp_path):
        adapter = LocalFolderAdapter(tmp_path)
        assert list(adapter.results(make_entry(), 5)) == []


def two_class_plan_and_adapter(tmp_path, per_model=5):
    registry = registry_with(
        {VehicleClass.LIGHT_DUTY: 1, VehicleClass.MEDIUM_DUTY: 1,
         VehicleClass.HEAVY_DUTY: 1, VehicleClass.NON_LOGISTIC: 1}
    )
    root = tmp_path / "fixtures"
    for entry in registry:
        directory = root / folder_slug(entry.make, entry.model)
        directory.mkdir(parents=True)
        for i in range(per_model):
            (directory / f"{i}.png").write_bytes(
                f"{entry.model}-{i}".encode()
            )
    plan = build_query_plan(registry, per_model, {SourceKind.LOCAL_FOLDER: 1.0})
    return plan, LocalFolderAdapter(root)


class TestIngestRun:
    def test_counts_per_class(self, tmp_path):
        plan, adapter = two_class_plan_and_adapter(tmp_path)
        out = tmp_path / "out"
        report = ingest_run(plan, {SourceKind.LOCAL_FOLDER: adapter}, out)
        assert report.new_records == 20
        assert set(report.per_class.values()) == {5}
        assert load_raw_manifest(out / RAW_MANIFEST_NAME)

    def test_rerun_is_idempotent(self, tmp_path):
        plan, adapter = two_class_plan_and_adapter(tmp_path)
        out = tmp_path / "out"
        ingest_run(plan, {SourceKind.LOCAL_FOLDER: adapter}, out)
        manifest_before = (out / RAW_MANIFEST_NAME).read_bytes()
        report = ingest_run(plan, {SourceKind.LOCAL_FOLDER: adapter}, out)
        assert report.new_records == 0
        assert report.all_skipped
        assert (out / RAW_MANIFEST_NAME).read_bytes() == manifest_before

    def test_provenance_closure(self, tmp_path):
        plan, adapter = two_class_plan_and_adapter(tmp_path)
        registry = registry_with({c: 1 for c in VehicleClass})
        out = tmp_path / "out"
        ingest_run(plan, {SourceKind.LOCAL_FOLDER: adapter}, out)
        for record in load_raw_manifest(out / RAW_MANIFEST_NAME):
            assert registry.lookup_model(record.make, record.model) == record.vehicle_class

    def test_missing_adapter_is_config_error(self, tmp_path):
        plan, _ = two_class_plan_and_adapter(tmp_path)
        with pytest.raises(ConfigError):
            ingest_run(plan, {}, tmp_path / "out")

    def test_one_failing_source_does_not_block_others(self, tmp_path):
        registry = registry_with({c: 1 for c in VehicleClass})
        plan = build_query_plan(
            registry, 2,
            {SourceKind.LOCAL_FOLDER: 0.5, SourceKind.SEARCH_ENGINE: 0.5},
        )
        root = tmp_path / "fixtures"
        for entry in registry:
            directory = root / folder_slug(entry.make, entry.model)
            directory.mkdir(parents=True)
            (directory / "0.png").write_bytes(entry.model.encode())
        failing = ListAdapter([], fail_times=99)
        failing.kind = SourceKind.SEARCH_ENGINE
        report = ingest_run(
            plan,
            {SourceKind.LOCAL_FOLDER: LocalFolderAdapter(root),
             SourceKind.SEARCH_ENGINE: failing},
            tmp_path / "out",
            sleep=lambda s: None,
        )
        assert report.per_source.get("local_folder", 0) == 4
        assert any(e.kind == "failure" for e in report.events)

    def test_in_flight_never_exceeds_adapter_limit(self, tmp_path):
        registry = registry_with({c: 4 for c in VehicleClass})
        plan = build_query_plan(registry, 4, {SourceKind.LOCAL_FOLDER: 1.0})

        class InstrumentedAdapter:
            kind = SourceKind.LOCAL_FOLDER
            max_parallel = 2

            def __init__(self):
                self.active = 0
                self.peak = 0
                self.lock = threading.Lock()

            def results(self, entry, limit):
                with self.lock:
                    self.active += 1
                    self.peak = max(self.peak, self.active)
                time.sleep(0.002)
                try:
                    yield FetchItem(f"{entry.model}", entry.model.encode())
                finally:
                    with self.lock:
                        self.active -= 1

        adapter = InstrumentedAdapter()
        ingest_run(
            plan, {SourceKind.LOCAL_FOLDER: adapter}, tmp_path / "out", max_workers=8
        )
        assert adapter.peak <= 2


class TestHttpAdapter:
    def test_fetches_allowed_urls_under_rate_limit(self):
        waits = []
        clock_value = [0.0]

        def clock():
            return clock_value[0]

        def sleep(duration):
            waits.append(duration)
            clock_value[0] += duration

        adapter = HttpImageAdapter(
            search=lambda query, limit: [
                "http://ok.example/a.jpg",
                "http://blocked.example/b.jpg",
                "http://ok.example/c.jpg",
            ],
            fetch=lambda url: url.encode(),
            deny_hosts=["blocked.example"],
            rate_per_sec=2.0,
            clock=clock,
            sleep=sleep,
        )
        items = list(adapter.results(make_entry(source=SourceKind.SEARCH_ENGINE), 5))
        assert [i.origin for i in items] == [
            "http://ok.example/a.jpg",
            "http://ok.example/c.jpg",
        ]
        assert waits  # second fetch had to wait for the limiter

    def test_allow_list_drops_other_hosts(self):
        adapter = HttpImageAdapter(
            search=lambda query, limit: ["http://one.example/a", "http://two.example/b"],
            fetch=lambda url: b"x",
            allow_hosts=["one.example"],
            rate_per_sec=1000.0,
        )
        items = list(adapter.results(make_entry(source=SourceKind.SEARCH_ENGINE), 5))
        assert [i.origin for i in items] == ["http://one.example/a"]

    def test_rate_limiter_spacing(self):
        clock_value = [0.0]
        sleeps = []

        limiter = RateLimiter(
            4.0,
            clock=lambda: clock_value[0],
            sleep=lambda s: sleeps.append(s) or clock_value.__setitem__(0, clock_value[0] + s),
        )
        for _ in range(3):
            limiter.wait()
        assert sleeps == pytest.approx([0.25, 0.25])
