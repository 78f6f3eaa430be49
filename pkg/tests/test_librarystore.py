"""Library catalog, audit trail and snapshot format tests."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naive
from bibcurate.librarystore import (
    KEY_RE,
    Catalog,
    CatalogResolver,
    CorruptSnapshot,
    ExclusivePairViolation,
    IoFailure,
    LibraryError,
    UnknownLibraryKey,
    generate_key,
    replay_memberships,
    restore,
    restore_text,
    snapshot,
    snapshot_text,
)


def ticking_clock(start: datetime | None = None):
    state = {"now": start or datetime(2024, 1, 1, tzinfo=timezone.utc)}

    def now() -> datetime:
        state["now"] += timedelta(seconds=1)
        return state["now"]

    return now


@pytest.fixture()
def catalog():
    return Catalog(now=ticking_clock())


# ------------------------------------------------------------------- keys


class TestKeys:
    def test_generated_keys_are_22_url_safe_chars(self):
        for _ in range(50):
            key = generate_key()
            assert len(key) == 22
            assert KEY_RE.match(key)

    def test_generated_keys_do_not_repeat_in_practice(self):
        keys = {generate_key() for _ in range(200)}
        assert len(keys) == 200


# ---------------------------------------------------------------- catalog


class TestCatalog:
    def test_create_and_lookup(self, catalog):
        key = catalog.create_library("Main", "the good stuff")
        assert key in catalog
        assert len(catalog) == 1
        lib = catalog.get(key)
        assert lib.name == "Main"
        assert lib.description == "the good stuff"
        assert catalog.members(key) == frozenset()

    def test_unknown_key_raises(self, catalog):
        with pytest.raises(UnknownLibraryKey):
            catalog.get("nope")
        with pytest.raises(UnknownLibraryKey):
            catalog.members("nope")

    def test_names_are_not_unique(self, catalog):
        k1 = catalog.create_library("Twin")
        k2 = catalog.create_library("Twin")
        assert k1 != k2
        assert {lib.key for lib in catalog.by_name("Twin")} == {k1, k2}
        assert catalog.by_name("Absent") == ()

    def test_explicit_key_roundtrip(self, catalog):
        key = generate_key()
        assert catalog.create_library("Pinned", key=key) == key

    def test_explicit_key_must_be_well_formed(self, catalog):
        with pytest.raises(LibraryError):
            catalog.create_library("Bad", key="short")

    def test_explicit_key_must_be_free(self, catalog):
        key = catalog.create_library("One")
        with pytest.raises(LibraryError):
            catalog.create_library("Two", key=key)

    def test_add_members_reports_actual_delta(self, catalog):
        key = catalog.create_library("L")
        assert catalog.add_members(key, ["a", "b", "a"]) == 2
        assert catalog.add_members(key, ["b", "c"]) == 1
        assert catalog.add_members(key, ["a", "b", "c"]) == 0
        assert catalog.members(key) == frozenset({"a", "b", "c"})

    def test_remove_members_reports_actual_delta(self, catalog):
        key = catalog.create_library("L")
        catalog.add_members(key, ["a", "b"])
        assert catalog.remove_members(key, ["b", "zz"]) == 1
        assert catalog.remove_members(key, ["zz"]) == 0
        assert catalog.members(key) == frozenset({"a"})

    def test_noop_mutations_leave_no_audit_trace(self, catalog):
        key = catalog.create_library("L")
        catalog.add_members(key, ["a"])
        before = len(catalog.audit_log)
        catalog.add_members(key, ["a"])
        catalog.remove_members(key, ["zz"])
        assert len(catalog.audit_log) == before

    def test_updated_at_moves_on_mutation(self, catalog):
        key = catalog.create_library("L")
        created = catalog.get(key).updated_at
        catalog.add_members(key, ["a"])
        assert catalog.get(key).updated_at > created


class TestExclusivePairs:
    def test_pair_blocks_overlapping_add(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.add_members(a, ["x"])
        catalog.set_exclusive_pair(a, b)
        with pytest.raises(ExclusivePairViolation):
            catalog.add_members(b, ["x", "y"])
        # the violating add must not partially apply
        assert catalog.members(b) == frozenset()

    def test_pair_requires_current_disjointness(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.add_members(a, ["x"])
        catalog.add_members(b, ["x"])
        with pytest.raises(ExclusivePairViolation):
            catalog.set_exclusive_pair(a, b)

    def test_pair_is_idempotent(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.set_exclusive_pair(a, b)
        before = len(catalog.audit_log)
        catalog.set_exclusive_pair(a, b)
        catalog.set_exclusive_pair(b, a)
        assert len(catalog.audit_log) == before
        assert catalog.exclusive_pairs == (tuple(sorted((a, b))),)

    def test_pair_with_self_is_rejected(self, catalog):
        a = catalog.create_library("A")
        with pytest.raises(LibraryError):
            catalog.set_exclusive_pair(a, a)

    def test_pair_with_unknown_library(self, catalog):
        a = catalog.create_library("A")
        with pytest.raises(UnknownLibraryKey):
            catalog.set_exclusive_pair(a, "missing")

    def test_moving_a_member_between_paired_libraries(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.set_exclusive_pair(a, b)
        catalog.add_members(a, ["x"])
        catalog.remove_members(a, ["x"])
        catalog.add_members(b, ["x"])
        assert catalog.members(a) == frozenset()
        assert catalog.members(b) == frozenset({"x"})


class TestSetOps:
    def test_golden_ops(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.add_members(a, ["1", "2", "3"])
        catalog.add_members(b, ["3", "4"])
        assert catalog.set_op("union", a, b) == frozenset("1234")
        assert catalog.set_op("intersection", a, b) == frozenset("3")
        assert catalog.set_op("difference", a, b) == frozenset("12")
        assert catalog.set_op("difference", b, a) == frozenset("4")

    def test_unknown_op(self, catalog):
        a = catalog.create_library("A")
        with pytest.raises(LibraryError):
            catalog.set_op("xor", a, a)

    @settings(max_examples=200, deadline=None)
    @given(
        st.sets(st.integers(0, 30).map(str), max_size=12),
        st.sets(st.integers(0, 30).map(str), max_size=12),
        st.sampled_from(["union", "intersection", "difference"]),
    )
    def test_matches_naive(self, left, right, op):
        catalog = Catalog(now=ticking_clock())
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.add_members(a, left)
        catalog.add_members(b, right)
        assert catalog.set_op(op, a, b) == naive.naive_set_op(op, left, right)


# ------------------------------------------------------------------ audit


class TestAudit:
    def test_seq_is_contiguous_from_one(self, catalog):
        a = catalog.create_library("A")
        catalog.add_members(a, ["x"])
        catalog.remove_members(a, ["x"])
        assert [e.seq for e in catalog.audit_log] == [1, 2, 3]

    def test_audit_records_actual_deltas_only(self, catalog):
        a = catalog.create_library("A")
        catalog.add_members(a, ["x", "y"])
        catalog.add_members(a, ["y", "z"])
        adds = [e.payload["bibcodes"] for e in catalog.audit_log if e.op == "add"]
        assert adds == [["x", "y"], ["z"]]

    def test_replay_reproduces_membership(self, catalog):
        a = catalog.create_library("A")
        b = catalog.create_library("B")
        catalog.add_members(a, ["1", "2"])
        catalog.add_members(b, ["3"])
        catalog.remove_members(a, ["1"])
        replayed = replay_memberships(catalog.audit_log)
        assert replayed == {a: frozenset({"2"}), b: frozenset({"3"})}
        assert catalog.verify_replay()

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["add", "remove"]),
                st.sampled_from(["A", "B"]),
                st.sets(st.integers(0, 12).map(str), max_size=5),
            ),
            max_size=20,
        )
    )
    def test_replay_is_faithful_under_random_traffic(self, ops):
        catalog = Catalog(now=ticking_clock())
        keys = {
            "A": catalog.create_library("A"),
            "B": catalog.create_library("B"),
        }
        for op, which, bibcodes in ops:
            if op == "add":
                catalog.add_members(keys[which], bibcodes)
            else:
                catalog.remove_members(keys[which], bibcodes)
        assert catalog.verify_replay()


# -------------------------------------------------------------- snapshots


def populated_catalog() -> Catalog:
    catalog = Catalog(now=ticking_clock())
    a = catalog.create_library("Main", "kept")
    b = catalog.create_library("Cut", 'has "quotes"\tand tabs')
    catalog.add_members(a, ["2020A....1", "2021B....2"])
    catalog.add_members(b, ["1999X....9"])
    catalog.set_exclusive_pair(a, b)
    catalog.remove_members(a, ["2021B....2"])
    return catalog


def catalog_state(catalog: Catalog):
    return (
        {
            k.key: (k.name, k.description, frozenset(k.members), k.created_at, k.updated_at)
            for k in catalog.libraries()
        },
        catalog.exclusive_pairs,
        catalog.audit_log,
    )


class TestSnapshots:
    def test_text_shape(self):
        text = snapshot_text(populated_catalog())
        lines = text.splitlines()
        assert lines[0].startswith("bibcurate-catalog")
        assert lines[-1] == "end\t2\t1\t6"
        assert text.endswith("\n")

    def test_text_roundtrip(self):
        original = populated_catalog()
        clone = restore_text(snapshot_text(original))
        assert catalog_state(clone) == catalog_state(original)

    def test_file_roundtrip(self, tmp_path):
        original = populated_catalog()
        target = tmp_path / "catalog.txt"
        snapshot(original, target)
        clone = restore(target)
        assert catalog_state(clone) == catalog_state(original)

    def test_snapshot_overwrites_atomically(self, tmp_path):
        target = tmp_path / "catalog.txt"
        first = populated_catalog()
        snapshot(first, target)
        second = Catalog(now=ticking_clock())
        second.create_library("Only")
        snapshot(second, target)
        assert len(restore(target)) == 1
        assert not list(tmp_path.glob("*.tmp"))

    def test_restored_catalog_keeps_working(self):
        clone = restore_text(snapshot_text(populated_catalog()))
        (main,) = (lib.key for lib in clone.by_name("Main"))
        (cut,) = (lib.key for lib in clone.by_name("Cut"))
        seq_before = clone.audit_log[-1].seq
        clone.add_members(main, ["2022C....3"])
        assert clone.audit_log[-1].seq == seq_before + 1
        assert clone.verify_replay()
        with pytest.raises(ExclusivePairViolation):
            clone.add_members(cut, ["2022C....3"])

    def test_restore_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            restore(tmp_path / "absent.txt")

    def test_truncated_snapshot(self):
        text = snapshot_text(populated_catalog())
        truncated = "\n".join(text.splitlines()[:-1]) + "\n"
        with pytest.raises(CorruptSnapshot):
            restore_text(truncated)

    def test_bad_header(self):
        text = snapshot_text(populated_catalog())
        with pytest.raises(CorruptSnapshot):
            restore_text("something-else-v9\n" + text.split("\n", 1)[1])

    def test_trailer_counts_must_match(self):
        text = snapshot_text(populated_catalog())
        lines = text.splitlines()
        # drop one library line but keep the old counts
        del lines[1]
        with pytest.raises(CorruptSnapshot):
            restore_text("\n".join(lines) + "\n")

    def test_garbage_line_kind(self):
        text = snapshot_text(populated_catalog())
        lines = text.splitlines()
        lines.insert(1, "mystery\tstuff")
        with pytest.raises(CorruptSnapshot):
            restore_text("\n".join(lines) + "\n")

    def test_mangled_library_key(self):
        text = snapshot_text(populated_catalog())
        lines = text.splitlines()
        idx = next(i for i, l in enumerate(lines) if l.startswith("library\t"))
        cols = lines[idx].split("\t")
        cols[1] = "not-a-key"
        lines[idx] = "\t".join(cols)
        with pytest.raises(CorruptSnapshot):
            restore_text("\n".join(lines) + "\n")

    def test_mangled_json_payload(self):
        text = snapshot_text(populated_catalog())
        lines = text.splitlines()
        idx = next(i for i, l in enumerate(lines) if l.startswith("audit\t"))
        lines[idx] = lines[idx][: lines[idx].rindex("\t")] + "\t{broken"
        with pytest.raises(CorruptSnapshot):
            restore_text("\n".join(lines) + "\n")

    def test_empty_text(self):
        with pytest.raises(CorruptSnapshot):
            restore_text("")


# ------------------------------------------------------------- resolver


class TestCatalogResolver:
    def test_members_through_alias(self, catalog):
        local = catalog.create_library("Local")
        catalog.add_members(local, ["x"])
        resolver = CatalogResolver(catalog, aliases={"foreign-key": local})
        assert resolver.members("foreign-key") == frozenset({"x"})
        assert resolver.members(local) == frozenset({"x"})

    def test_unknown_key_raises(self, catalog):
        resolver = CatalogResolver(catalog)
        with pytest.raises(UnknownLibraryKey):
            resolver.members("ghost")

    def test_bibgroup_unions_same_named_libraries(self, catalog):
        k1 = catalog.create_library("Group")
        k2 = catalog.create_library("Group")
        other = catalog.create_library("Other")
        catalog.add_members(k1, ["a"])
        catalog.add_members(k2, ["b"])
        catalog.add_members(other, ["c"])
        resolver = CatalogResolver(catalog)
        assert resolver.bibgroup("Group") == frozenset({"a", "b"})
        assert resolver.bibgroup("Nothing") == frozenset()
