from .adapters import (
    FetchItem,
    HttpImageAdapter,
    LocalFolderAdapter,
    RateLimiter,
    SourceAdapter,
    folder_slug,
)
from .plan import (
    PlanEntry,
    QueryPlan,
    SourceKind,
    build_query_plan,
    read_plan,
    write_plan,
)
from .run import (
    RAW_DIR_NAME,
    RAW_MANIFEST_NAME,
    EntryEvent,
    IngestReport,
    PolitenessConfig,
    RawImageRecord,
    fetch_entry,
    ingest_run,
    load_raw_manifest,
)

__all__ = [
    "FetchItem",
    "HttpImageAdapter",
    "LocalFolderAdapter",
    "RateLimiter",
    "SourceAdapter",
    "folder_slug",
    "PlanEntry",
    "QueryPlan",
    "SourceKind",
    "build_query_plan",
    "read_plan",
    "write_plan",
    "RAW_DIR_NAME",
    "RAW_MANIFEST_NAME",
    "EntryEvent",
    "IngestReport",
    "PolitenessConfig",
    "RawImageRecord",
    "fetch_entry",
    "ingest_run",
    "load_raw_manifest",
]
