"""Image source adapters. Sources sit behind one small interface so the
whole pipeline runs offline against fixture folders, and a rate-limited
HTTP adapter covers live search-engine style sources."""

from __future__ import annotations

import threading
import time
import urllib.parse
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Protocol

from ..errors import FetchError, SourceRefusedError
from ..taxonomy import normalize_name
from .plan import PlanEntry, SourceKind


@dataclass(frozen=True)
class FetchItem:
    origin: str
    payload: bytes


class SourceAdapter(Protocol):
    """max_parallel declares how many entries a source tolerates in flight;
    the orchestrator never exceeds it."""

    kind: SourceKind
    max_parallel: int

    def results(self, entry: PlanEntry, limit: int) -> Iterable[FetchItem]:
        ...


def folder_slug(make: str, model: str) -> str:
    """Directory name a fixture corpus uses for one model's images."""
    return (
        normalize_name(make).replace(" ", "-")
        + "__"
        + normalize_name(model).replace(" ", "-")
    )


class LocalFolderAdapter:
    """Serves files from ``root/<make-slug>__<model-slug>/`` sorted by name."""

    kind = SourceKind.LOCAL_FOLDER
    max_parallel = 8

    def __init__(self, root):
        self.root = Path(root)

    def results(self, entry: PlanEntry, limit: int) -> Iterator[FetchItem]:
        directory = self.root / folder_slug(entry.make, entry.model)
        if not directory.is_dir():
            return
        count = 0
        for path in sorted(directory.iterdir()):
            if count >= limit:
                return
            if not path.is_file():
                continue
            try:
                payload = path.read_bytes()
            except OSError as exc:
                raise FetchError(f"cannot read {path}: {exc}") from exc
            yield FetchItem(str(path), payload)
            count += 1


class RateLimiter:
    """Serializes calls so at most rate_per_sec requests start per second."""

    def __init__(self, rate_per_sec: float, clock=time.monotonic, sleep=time.sleep):
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self.interval = 1.0 / rate_per_sec
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            delay = self._next_allowed - now
            self._next_allowed = max(self._next_allowed, now) + self.interval
        if delay > 0:
            self._sleep(delay)


def _default_fetch(url: str, timeout: float = 30.0) -> bytes:
    import requests

    try:
        response = requests.get(url, timeout=timeout)
    except requests.RequestException as exc:
        raise FetchError(f"GET {url} failed: {exc}") from exc
    if response.status_code in (403, 429):
        raise SourceRefusedError(f"GET {url} refused with {response.status_code}")
    if response.status_code != 200:
        raise FetchError(f"GET {url} returned {response.status_code}")
    return response.content


class HttpImageAdapter:
    """Search-engine style source: a query resolves to result URLs which are
    then fetched one by one under a rate limit.

    ``search`` maps (query, limit) to URLs; it raises SourceRefusedError for
    quota or robots refusals, which skips the plan entry with a reason.
    URLs on the deny list (or off a non-empty allow list) are dropped; the
    adapter never crawls beyond the returned result URLs.
    """

    max_parallel = 1  # politeness: one in-flight entry per live source

    def __init__(
        self,
        search: Callable[[str, int], list[str]],
        fetch: Callable[[str], bytes] = _default_fetch,
        kind: SourceKind = SourceKind.SEARCH_ENGINE,
        rate_per_sec: float = 1.0,
        allow_hosts: Optional[Iterable[str]] = None,
        deny_hosts: Iterable[str] = (),
        clock=time.monotonic,
        sleep=time.sleep,
    ):
        self.kind = kind
        self._search = search
        self._fetch = fetch
        self._limiter = RateLimiter(rate_per_sec, clock=clock, sleep=sleep)
        self._allow = {h.lower() for h in allow_hosts} if allow_hosts else None
        self._deny = {h.lower() for h in deny_hosts}

    def _host_allowed(self, url: str) -> bool:
        host = (urllib.parse.urlsplit(url).hostname or "").lower()
        if host in self._deny:
            return False
        if self._allow is not None and host not in self._allow:
            return False
        return True

    def results(self, entry: PlanEntry, limit: int) -> Iterator[FetchItem]:
        urls = self._search(entry.query, limit)
        count = 0
        for url in urls:
            if count >= limit:
                return
            if not self._host_allowed(url):
                continue
            self._limiter.wait()
            yield FetchItem(url, self._fetch(url))
            count += 1
