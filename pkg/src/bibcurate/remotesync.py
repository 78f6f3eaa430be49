"""Synchronization with a remote bibliographic search service.

The remote side exposes a small JSON-over-HTTP API (documented in
docs/remote-api.md): a paged search endpoint and per-library document
lists. This module keeps local catalog libraries in step with their remote
counterparts without ever exceeding the advertised request quota.

Network access is isolated behind the ``Transport`` protocol. Production
uses ``HttpTransport`` (requests); tests use ``FakeTransport`` wrapping
``FakeAdsServer``, an in-process re-implementation of the wire contract,
so client behavior (paging, retries, quota respect, error mapping) is
exercised against the same byte-level shapes the real service produces.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Protocol, Sequence
from urllib.parse import quote, unquote

import requests

from .librarystore import Catalog

log = logging.getLogger(__name__)

API_VERSION = "v1"
MAX_ROWS = 200  # server-side page cap
_RETRYABLE = frozenset({500, 502, 503, 504})


class RemoteError(Exception):
    pass


class AuthFailure(RemoteError):
    """The token was rejected. Never retried."""


class QuotaExhausted(RemoteError):
    def __init__(self, message: str, reset_at: float | None = None):
        super().__init__(message)
        self.reset_at = reset_at


class TransientFailure(RemoteError):
    """Upstream failure that persisted through every retry."""


class ProtocolError(RemoteError):
    """The remote answered with a shape this client does not understand."""


@dataclass
class RemoteConfig:
    base_url: str = "https://api.adsabs.harvard.edu"
    auth_token: str = ""
    rows_per_page: int = MAX_ROWS
    max_retries: int = 3
    backoff_base: float = 0.5
    cache_ttl: float = 300.0
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if not self.auth_token:
            self.auth_token = os.environ.get("ADS_API_TOKEN", "")
        self.base_url = self.base_url.rstrip("/")
        if not 1 <= self.rows_per_page <= MAX_ROWS:
            raise ValueError(f"rows_per_page must be in [1, {MAX_ROWS}]")

    def __repr__(self) -> str:  # token must never leak into logs
        shown = "***" if self.auth_token else "(unset)"
        return (
            f"RemoteConfig(base_url={self.base_url!r}, auth_token={shown}, "
            f"rows_per_page={self.rows_per_page})"
        )


@dataclass(frozen=True)
class TransportReply:
    status: int
    headers: Mapping[str, str]
    body: dict


class Transport(Protocol):
    def request(
        self,
        method: str,
        path: str,
        *,
        params: Mapping[str, str] | None = None,
        json_body: dict | None = None,
        headers: Mapping[str, str] | None = None,
    ) -> TransportReply: ...


class HttpTransport:
    def __init__(self, config: RemoteConfig, session: requests.Session | None = None):
        self._config = config
        self._session = session or requests.Session()

    def request(
        self,
        method: str,
        path: str,
        *,
        params: Mapping[str, str] | None = None,
        json_body: dict | None = None,
        headers: Mapping[str, str] | None = None,
    ) -> TransportReply:
        url = f"{self._config.base_url}{path}"
        try:
            resp = self._session.request(
                method,
                url,
                params=dict(params or {}),
                json=json_body,
                headers=dict(headers or {}),
                timeout=self._config.timeout,
            )
        except requests.RequestException as exc:
            raise TransientFailure(f"{method} {path}: {exc}") from exc
        try:
            body = resp.json() if resp.content else {}
        except ValueError:
            body = {}
        return TransportReply(status=resp.status_code, headers=dict(resp.headers), body=body)


@dataclass
class QuotaState:
    limit: int | None = None
    remaining: int | None = None
    reset_at: float | None = None

    def update(self, headers: Mapping[str, str]) -> None:
        lowered = {k.lower(): v for k, v in headers.items()}
        try:
            if "x-ratelimit-limit" in lowered:
                self.limit = int(lowered["x-ratelimit-limit"])
            if "x-ratelimit-remaining" in lowered:
                self.remaining = int(lowered["x-ratelimit-remaining"])
            if "x-ratelimit-reset" in lowered:
                self.reset_at = float(lowered["x-ratelimit-reset"])
        except ValueError:
            log.warning("unparseable rate-limit headers: %r", lowered)

    def blocked(self, now: float) -> bool:
        if self.remaining is None or self.remaining > 0:
            return False
        return self.reset_at is None or now < self.reset_at


@dataclass(frozen=True)
class SearchPage:
    bibcodes: tuple[str, ...]
    num_found: int
    start: int


@dataclass(frozen=True)
class SyncReport:
    library_key: str
    remote_name: str
    added: tuple[str, ...]
    removed: tuple[str, ...]
    in_sync: bool


class RemoteClient:
    """Quota-aware client for the remote search and library API."""

    def __init__(
        self,
        config: RemoteConfig,
        transport: Transport | None = None,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self.transport = transport or HttpTransport(config)
        self.quota = QuotaState()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._cache: dict[str, tuple[float, tuple[str, ...]]] = {}

    # -- request plumbing ----------------------------------------------------

    def _headers(self) -> dict[str, str]:
        if not self.config.auth_token:
            raise AuthFailure("no auth token configured (set ADS_API_TOKEN)")
        return {"Authorization": f"Bearer {self.config.auth_token}"}

    def _call(
        self,
        method: str,
        path: str,
        *,
        params: Mapping[str, str] | None = None,
        json_body: dict | None = None,
    ) -> dict:
        if self.quota.blocked(self._clock()):
            raise QuotaExhausted(
                "request quota exhausted; not contacting the server until reset",
                reset_at=self.quota.reset_at,
            )
        headers = self._headers()
        attempt = 0
        while True:
            reply = self.transport.request(
                method, path, params=params, json_body=json_body, headers=headers
            )
            self.quota.update(reply.headers)
            if reply.status == 401:
                raise AuthFailure("remote rejected the auth token")
            if reply.status == 429:
                raise QuotaExhausted(
                    "remote reports quota exhausted", reset_at=self.quota.reset_at
                )
            if reply.status in _RETRYABLE:
                attempt += 1
                if attempt > self.config.max_retries:
                    raise TransientFailure(
                        f"{method} {path} failed with {reply.status} "
                        f"after {self.config.max_retries} retries"
                    )
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                log.info("%s %s got %d, retry %d in %.2fs",
                         method, path, reply.status, attempt, delay)
                self._sleep(delay)
                continue
            if reply.status != 200:
                raise ProtocolError(f"{method} {path} returned {reply.status}")
            return reply.body

    # -- search --------------------------------------------------------------

    def search_page(self, query: str, start: int = 0, rows: int | None = None) -> SearchPage:
        rows = self.config.rows_per_page if rows is None else rows
        body = self._call(
            "GET",
            f"/{API_VERSION}/search/query",
            params={"q": query, "start": str(start), "rows": str(rows), "fl": "bibcode"},
        )
        try:
            response = body["response"]
            docs = response["docs"]
            num_found = int(response["numFound"])
            got_start = int(response["start"])
            bibcodes = tuple(doc["bibcode"] for doc in docs)
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed search response: {exc}") from exc
        return SearchPage(bibcodes=bibcodes, num_found=num_found, start=got_start)

    def search_all(self, query: str) -> tuple[str, ...]:
        """All bibcodes matching ``query``, fetched page by page. Results
        are cached for ``cache_ttl`` seconds keyed on the query text."""
        with self._lock:
            cached = self._cache.get(query)
            if cached is not None:
                fetched_at, bibcodes = cached
                if self._clock() - fetched_at < self.config.cache_ttl:
                    return bibcodes
        collected: list[str] = []
        start = 0
        while True:
            page = self.search_page(query, start=start)
            collected.extend(page.bibcodes)
            start += len(page.bibcodes)
            if start >= page.num_found or not page.bibcodes:
                break
        result = tuple(collected)
        with self._lock:
            self._cache[query] = (self._clock(), result)
        return result

    def invalidate_cache(self, query: str | None = None) -> None:
        with self._lock:
            if query is None:
                self._cache.clear()
            else:
                self._cache.pop(query, None)

    # -- libraries -------------------------------------------------------------

    def library_members(self, remote_name: str) -> tuple[str, ...]:
        collected: list[str] = []
        start = 0
        while True:
            body = self._call(
                "GET",
                f"/{API_VERSION}/libraries/{quote(remote_name, safe='')}",
                params={"start": str(start), "rows": str(self.config.rows_per_page)},
            )
            try:
                docs = list(body["documents"])
                total = int(body["metadata"]["num_documents"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(f"malformed library response: {exc}") from exc
            collected.extend(docs)
            start += len(docs)
            if start >= total or not docs:
                break
        return tuple(collected)

    def _edit_library(self, remote_name: str, bibcodes: Sequence[str], action: str) -> int:
        if not bibcodes:
            return 0
        body = self._call(
            "POST",
            f"/{API_VERSION}/libraries/documents/{quote(remote_name, safe='')}",
            json_body={"bibcode": list(bibcodes), "action": action},
        )
        key = "number_added" if action == "add" else "number_removed"
        try:
            return int(body[key])
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed edit response: {exc}") from exc

    def add_documents(self, remote_name: str, bibcodes: Sequence[str]) -> int:
        return self._edit_library(remote_name, bibcodes, "add")

    def remove_documents(self, remote_name: str, bibcodes: Sequence[str]) -> int:
        return self._edit_library(remote_name, bibcodes, "remove")

    # -- sync ------------------------------------------------------------------

    def pull(self, catalog: Catalog, library_key: str, remote_name: str) -> SyncReport:
        """Make the local library match the remote one."""
        remote = set(self.library_members(remote_name))
        local = set(catalog.members(library_key))
        to_add = sorted(remote - local)
        to_remove = sorted(local - remote)
        catalog.add_members(library_key, to_add, who="remotesync")
        catalog.remove_members(library_key, to_remove, who="remotesync")
        return SyncReport(
            library_key=library_key,
            remote_name=remote_name,
            added=tuple(to_add),
            removed=tuple(to_remove),
            in_sync=True,
        )

    def push(self, catalog: Catalog, library_key: str, remote_name: str) -> SyncReport:
        """Make the remote library match the local one."""
        remote = set(self.library_members(remote_name))
        local = set(catalog.members(library_key))
        to_add = sorted(local - remote)
        to_remove = sorted(remote - local)
        self.add_documents(remote_name, to_add)
        self.remove_documents(remote_name, to_remove)
        return SyncReport(
            library_key=library_key,
            remote_name=remote_name,
            added=tuple(to_add),
            removed=tuple(to_remove),
            in_sync=True,
        )

    def verify(self, catalog: Catalog, library_key: str, remote_name: str) -> SyncReport:
        """Compare without mutating either side."""
        remote = set(self.library_members(remote_name))
        local = set(catalog.members(library_key))
        missing_remote = tuple(sorted(local - remote))
        missing_local = tuple(sorted(remote - local))
        return SyncReport(
            library_key=library_key,
            remote_name=remote_name,
            added=missing_remote,
            removed=missing_local,
            in_sync=not missing_remote and not missing_local,
        )


# -- in-process fake server ----------------------------------------------------


@dataclass
class _FakeRequest:
    method: str
    path: str
    params: dict[str, str]


class FakeAdsServer:
    """In-process stand-in for the remote API, honoring the wire contract.

    Canned search results are registered per query string. Every authorized
    request decrements the quota; at zero the server answers 429 until the
    reset time passes. Status codes queued via ``inject_failures`` are
    served (once each) before normal handling, for retry tests.
    """

    def __init__(
        self,
        *,
        token: str = "fake-token",
        quota_limit: int = 5000,
        clock: Callable[[], float] = time.monotonic,
        reset_interval: float = 86400.0,
    ):
        self.token = token
        self.quota_limit = quota_limit
        self.quota_remaining = quota_limit
        self._clock = clock
        self.reset_interval = reset_interval
        self.reset_at = clock() + reset_interval
        self.searches: dict[str, list[str]] = {}
        self.libraries: dict[str, list[str]] = {}
        self.requests: list[_FakeRequest] = []
        self._failure_queue: list[int] = []

    def set_search(self, query: str, bibcodes: Iterable[str]) -> None:
        self.searches[query] = list(bibcodes)

    def set_library(self, remote_name: str, bibcodes: Iterable[str]) -> None:
        self.libraries[remote_name] = list(bibcodes)

    def inject_failures(self, *statuses: int) -> None:
        self._failure_queue.extend(statuses)

    @property
    def request_count(self) -> int:
        return len(self.requests)

    # -- dispatch ---------------------------------------------------------------

    def _quota_headers(self) -> dict[str, str]:
        return {
            "X-RateLimit-Limit": str(self.quota_limit),
            "X-RateLimit-Remaining": str(self.quota_remaining),
            "X-RateLimit-Reset": str(self.reset_at),
        }

    def handle(
        self,
        method: str,
        path: str,
        *,
        params: Mapping[str, str] | None = None,
        json_body: dict | None = None,
        headers: Mapping[str, str] | None = None,
    ) -> TransportReply:
        params = dict(params or {})
        headers = dict(headers or {})
        self.requests.append(_FakeRequest(method=method, path=path, params=params))

        if self._failure_queue:
            status = self._failure_queue.pop(0)
            return TransportReply(status=status, headers=self._quota_headers(), body={})

        auth = headers.get("Authorization", "")
        if auth != f"Bearer {self.token}":
            return TransportReply(
                status=401, headers={}, body={"error": "invalid token"}
            )

        now = self._clock()
        if now >= self.reset_at:
            self.quota_remaining = self.quota_limit
            self.reset_at = now + self.reset_interval
        if self.quota_remaining <= 0:
            return TransportReply(
                status=429,
                headers=self._quota_headers(),
                body={"error": "rate limit exceeded"},
            )
        self.quota_remaining -= 1

        if method == "GET" and path == f"/{API_VERSION}/search/query":
            return self._search(params)
        if method == "GET" and path.startswith(f"/{API_VERSION}/libraries/"):
            return self._library_get(path, params)
        if method == "POST" and path.startswith(f"/{API_VERSION}/libraries/documents/"):
            return self._library_edit(path, json_body or {})
        return TransportReply(status=404, headers=self._quota_headers(), body={})

    def _search(self, params: Mapping[str, str]) -> TransportReply:
        query = params.get("q", "")
        if query not in self.searches:
            return TransportReply(
                status=200,
                headers=self._quota_headers(),
                body={"response": {"numFound": 0, "start": 0, "docs": []}},
            )
        try:
            start = max(0, int(params.get("start", "0")))
            rows = int(params.get("rows", "10"))
        except ValueError:
            return TransportReply(
                status=400, headers=self._quota_headers(),
                body={"error": "bad paging params"},
            )
        rows = min(max(rows, 0), MAX_ROWS)
        hits = self.searches[query]
        docs = [{"bibcode": b} for b in hits[start : start + rows]]
        return TransportReply(
            status=200,
            headers=self._quota_headers(),
            body={"response": {"numFound": len(hits), "start": start, "docs": docs}},
        )

    def _library_get(self, path: str, params: Mapping[str, str]) -> TransportReply:
        name = unquote(path[len(f"/{API_VERSION}/libraries/") :])
        if name not in self.libraries:
            return TransportReply(
                status=404, headers=self._quota_headers(),
                body={"error": "library does not exist"},
            )
        try:
            start = max(0, int(params.get("start", "0")))
            rows = int(params.get("rows", str(MAX_ROWS)))
        except ValueError:
            return TransportReply(
                status=400, headers=self._quota_headers(),
                body={"error": "bad paging params"},
            )
        rows = min(max(rows, 0), MAX_ROWS)
        members = self.libraries[name]
        return TransportReply(
            status=200,
            headers=self._quota_headers(),
            body={
                "documents": members[start : start + rows],
                "metadata": {"num_documents": len(members), "name": name},
            },
        )

    def _library_edit(self, path: str, body: dict) -> TransportReply:
        name = unquote(path[len(f"/{API_VERSION}/libraries/documents/") :])
        if name not in self.libraries:
            return TransportReply(
                status=404, headers=self._quota_headers(),
                body={"error": "library does not exist"},
            )
        bibcodes = body.get("bibcode")
        action = body.get("action")
        if not isinstance(bibcodes, list) or action not in ("add", "remove"):
            return TransportReply(
                status=400, headers=self._quota_headers(),
                body={"error": "bad edit body"},
            )
        members = self.libraries[name]
        if action == "add":
            count = 0
            for b in bibcodes:
                if b not in members:
                    members.append(b)
                    count += 1
            payload = {"number_added": count}
        else:
            before = len(members)
            members[:] = [b for b in members if b not in set(bibcodes)]
            payload = {"number_removed": before - len(members)}
        return TransportReply(status=200, headers=self._quota_headers(), body=payload)


class FakeTransport:
    """Transport bound to a ``FakeAdsServer``."""

    def __init__(self, server: FakeAdsServer):
        self.server = server

    def request(
        self,
        method: str,
        path: str,
        *,
        params: Mapping[str, str] | None = None,
        json_body: dict | None = None,
        headers: Mapping[str, str] | None = None,
    ) -> TransportReply:
        return self.server.handle(
            method, path, params=params, json_body=json_body, headers=headers
        )
