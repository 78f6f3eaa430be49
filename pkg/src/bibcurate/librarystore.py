"""Persistent named sets of bibcodes with set algebra and an audit trail.

A Catalog holds libraries addressed by 22-character URL-safe keys generated
locally. Every mutation appends an audit entry recording who did what and
exactly which bibcodes changed, so replaying the log from an empty catalog
reproduces current membership. Catalogs serialize to a line-oriented text
snapshot (see docs/catalog-snapshot.md) written atomically.

Libraries may be declared mutually exclusive in pairs; adds that would
create an overlap are rejected.
"""

from __future__ import annotations

import json
import os
import re
import secrets
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable

KEY_RE = re.compile(r"^[A-Za-z0-9_-]{22}$")

_SNAPSHOT_HEADER = "bibcurate-catalog v1"


class LibraryError(Exception):
    pass


class UnknownLibraryKey(LibraryError):
    def __init__(self, key: str):
        super().__init__(f"no library with key {key!r}")
        self.key = key


class ExclusivePairViolation(LibraryError):
    def __init__(self, key: str, other: str, overlap: Iterable[str]):
        items = sorted(overlap)
        super().__init__(
            f"libraries {key} and {other} are mutually exclusive; "
            f"refusing overlap: {', '.join(items)}"
        )
        self.key = key
        self.other = other
        self.overlap = tuple(items)


class CorruptSnapshot(LibraryError):
    def __init__(self, reason: str):
        super().__init__(f"corrupt snapshot: {reason}")
        self.reason = reason


class IoFailure(LibraryError):
    pass


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def generate_key() -> str:
    key = secrets.token_urlsafe(16)
    assert KEY_RE.match(key)
    return key


@dataclass
class Library:
    key: str
    name: str
    description: str
    members: set[str]
    created_at: datetime
    updated_at: datetime


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    who: str
    when: datetime
    op: str  # create | add | remove | pair
    key: str
    payload: dict


def replay_memberships(entries: Iterable[AuditEntry]) -> dict[str, frozenset[str]]:
    """Reconstruct membership by replaying audit entries from empty."""
    members: dict[str, set[str]] = {}
    for entry in entries:
        if entry.op == "create":
            members.setdefault(entry.key, set())
        elif entry.op == "add":
            members.setdefault(entry.key, set()).update(entry.payload["bibcodes"])
        elif entry.op == "remove":
            members.setdefault(entry.key, set()).difference_update(
                entry.payload["bibcodes"]
            )
        elif entry.op == "pair":
            pass
        else:
            raise ValueError(f"unknown audit op {entry.op!r}")
    return {k: frozenset(v) for k, v in members.items()}


class Catalog:
    """All libraries plus their shared audit log."""

    def __init__(self, now: Callable[[], datetime] | None = None):
        self._libraries: dict[str, Library] = {}
        self._audit: list[AuditEntry] = []
        self._pairs: set[frozenset[str]] = set()
        self._now = now or _utcnow

    # -- queries ----------------------------------------------------------

    def __contains__(self, key: str) -> bool:
        return key in self._libraries

    def __len__(self) -> int:
        return len(self._libraries)

    def get(self, key: str) -> Library:
        try:
            return self._libraries[key]
        except KeyError:
            raise UnknownLibraryKey(key) from None

    def members(self, key: str) -> frozenset[str]:
        return frozenset(self.get(key).members)

    def libraries(self) -> tuple[Library, ...]:
        return tuple(self._libraries.values())

    def by_name(self, name: str) -> tuple[Library, ...]:
        return tuple(lib for lib in self._libraries.values() if lib.name == name)

    @property
    def audit_log(self) -> tuple[AuditEntry, ...]:
        return tuple(self._audit)

    @property
    def exclusive_pairs(self) -> tuple[tuple[str, str], ...]:
        return tuple(tuple(sorted(pair)) for pair in sorted(self._pairs, key=sorted))

    # -- mutations ---------------------------------------------------------

    def _record(self, who: str, op: str, key: str, payload: dict) -> None:
        self._audit.append(
            AuditEntry(
                seq=len(self._audit) + 1,
                who=who,
                when=self._now(),
                op=op,
                key=key,
                payload=payload,
            )
        )

    def create_library(
        self,
        name: str,
        description: str = "",
        *,
        key: str | None = None,
        who: str = "local",
    ) -> str:
        """Create a library and return its key. Keys are generated locally;
        pass ``key`` only to recreate a known library (e.g. from a snapshot)."""
        if key is None:
            key = generate_key()
            while key in self._libraries:  # pragma: no cover - 128-bit space
                key = generate_key()
        else:
            if not KEY_RE.match(key):
                raise LibraryError(f"invalid library key {key!r}")
            if key in self._libraries:
                raise LibraryError(f"library key {key!r} already exists")
        now = self._now()
        self._libraries[key] = Library(
            key=key,
            name=name,
            description=description,
            members=set(),
            created_at=now,
            updated_at=now,
        )
        self._record(who, "create", key, {"name": name, "description": description})
        return key

    def _check_pairs(self, key: str, incoming: set[str]) -> None:
        for pair in self._pairs:
            if key in pair:
                (other,) = pair - {key}
                overlap = incoming & self._libraries[other].members
                if overlap:
                    raise ExclusivePairViolation(key, other, overlap)

    def add_members(
        self, key: str, bibcodes: Iterable[str], *, who: str = "local"
    ) -> int:
        """Add bibcodes; returns how many were actually new."""
        library = self.get(key)
        seen: set[str] = set()
        added = [
            b
            for b in bibcodes
            if b not in library.members and not (b in seen or seen.add(b))
        ]
        if not added:
            return 0
        self._check_pairs(key, set(added))
        library.members.update(added)
        library.updated_at = self._now()
        self._record(who, "add", key, {"bibcodes": list(added)})
        return len(added)

    def remove_members(
        self, key: str, bibcodes: Iterable[str], *, who: str = "local"
    ) -> int:
        """Remove bibcodes; returns how many were actually present."""
        library = self.get(key)
        removed = sorted(set(bibcodes) & library.members)
        if not removed:
            return 0
        library.members.difference_update(removed)
        library.updated_at = self._now()
        self._record(who, "remove", key, {"bibcodes": removed})
        return len(removed)

    def set_exclusive_pair(self, key_a: str, key_b: str, *, who: str = "local") -> None:
        """Declare two libraries mutually exclusive (must be disjoint now)."""
        lib_a, lib_b = self.get(key_a), self.get(key_b)
        if key_a == key_b:
            raise LibraryError("an exclusive pair needs two distinct libraries")
        overlap = lib_a.members & lib_b.members
        if overlap:
            raise ExclusivePairViolation(key_a, key_b, overlap)
        pair = frozenset({key_a, key_b})
        if pair in self._pairs:
            return
        self._pairs.add(pair)
        self._record(who, "pair", key_a, {"other": key_b})

    def set_op(self, op: str, key_a: str, key_b: str) -> frozenset[str]:
        a, b = self.members(key_a), self.members(key_b)
        if op == "union":
            return a | b
        if op == "intersection":
            return a & b
        if op == "difference":
            return a - b
        raise LibraryError(f"unknown set operation {op!r}")

    # -- audit -------------------------------------------------------------

    def verify_replay(self) -> bool:
        """True if replaying the audit log reproduces current membership."""
        replayed = replay_memberships(self._audit)
        current = {k: frozenset(lib.members) for k, lib in self._libraries.items()}
        return replayed == current


class CatalogResolver:
    """Adapts a Catalog to the evaluator's resolver interface.

    ``aliases`` maps foreign keys appearing in query strings (e.g. keys
    embedded in shipped presets) onto local library keys."""

    def __init__(self, catalog: Catalog, aliases: dict[str, str] | None = None):
        self.catalog = catalog
        self.aliases = dict(aliases or {})

    def resolve_key(self, key: str) -> str:
        return self.aliases.get(key, key)

    def members(self, key: str) -> frozenset[str]:
        actual = self.resolve_key(key)
        if actual not in self.catalog:
            raise UnknownLibraryKey(key)
        return self.catalog.members(actual)

    def bibgroup(self, name: str) -> frozenset[str]:
        out: set[str] = set()
        for library in self.catalog.by_name(name):
            out |= library.members
        return frozenset(out)


# ---------------------------------------------------------------------------
# Snapshots


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def snapshot_text(catalog: Catalog) -> str:
    lines = [_SNAPSHOT_HEADER]
    libraries = catalog.libraries()
    for lib in libraries:
        lines.append(
            "\t".join(
                (
                    "library",
                    lib.key,
                    _iso(lib.created_at),
                    _iso(lib.updated_at),
                    json.dumps(lib.name, ensure_ascii=False),
                    json.dumps(lib.description, ensure_ascii=False),
                    json.dumps(sorted(lib.members)),
                )
            )
        )
    pairs = catalog.exclusive_pairs
    for a, b in pairs:
        lines.append("\t".join(("pair", a, b)))
    audit = catalog.audit_log
    for entry in audit:
        lines.append(
            "\t".join(
                (
                    "audit",
                    str(entry.seq),
                    _iso(entry.when),
                    json.dumps(entry.who, ensure_ascii=False),
                    entry.op,
                    entry.key,
                    json.dumps(entry.payload, ensure_ascii=False, sort_keys=True),
                )
            )
        )
    lines.append(f"end\t{len(libraries)}\t{len(pairs)}\t{len(audit)}")
    return "\n".join(lines) + "\n"


def snapshot(catalog: Catalog, path: str | Path) -> None:
    """Write a snapshot atomically: temp file in the same directory, fsync,
    then rename over the target."""
    path = Path(path)
    text = snapshot_text(catalog)
    try:
        fd, tmp_name = tempfile.mkstemp(
            dir=path.parent or Path("."), prefix=path.name, suffix=".tmp"
        )
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(text)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(tmp_name, path)
        except BaseException:
            os.unlink(tmp_name)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write snapshot {path}: {exc}") from exc


def restore_text(text: str, now: Callable[[], datetime] | None = None) -> Catalog:
    lines = text.splitlines()
    if not lines or lines[0] != _SNAPSHOT_HEADER:
        raise CorruptSnapshot("missing or unknown header")
    if not lines[-1].startswith("end\t"):
        raise CorruptSnapshot("missing end line; snapshot truncated?")
    catalog = Catalog(now=now)
    n_lib = n_pair = n_audit = 0
    for raw in lines[1:-1]:
        kind, _, rest = raw.partition("\t")
        cols = rest.split("\t")
        try:
            if kind == "library":
                key, created, updated, name, description, members = cols
                if not KEY_RE.match(key):
                    raise CorruptSnapshot(f"invalid library key {key!r}")
                catalog._libraries[key] = Library(
                    key=key,
                    name=json.loads(name),
                    description=json.loads(description),
                    members=set(json.loads(members)),
                    created_at=datetime.fromisoformat(created),
                    updated_at=datetime.fromisoformat(updated),
                )
                n_lib += 1
            elif kind == "pair":
                a, b = cols
                catalog._pairs.add(frozenset({a, b}))
                n_pair += 1
            elif kind == "audit":
                seq, when, who, op, key, payload = cols
                catalog._audit.append(
                    AuditEntry(
                        seq=int(seq),
                        who=json.loads(who),
                        when=datetime.fromisoformat(when),
                        op=op,
                        key=key,
                        payload=json.loads(payload),
                    )
                )
                n_audit += 1
            else:
                raise CorruptSnapshot(f"unknown line kind {kind!r}")
        except CorruptSnapshot:
            raise
        except (ValueError, json.JSONDecodeError) as exc:
            raise CorruptSnapshot(f"bad {kind} line: {exc}") from None
    trailer = lines[-1].split("\t")
    if trailer != ["end", str(n_lib), str(n_pair), str(n_audit)]:
        raise CorruptSnapshot("end line counts do not match content")
    return catalog


def restore(path: str | Path, now: Callable[[], datetime] | None = None) -> Catalog:
    """Load a snapshot. CorruptSnapshot on any structural damage."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read snapshot {path}: {exc}") from exc
    return restore_text(text, now=now)
