"""Command-line entry point.

Subcommands:
  corpus load          parse and sanity-check a corpus file
  search               run a query (preset or ad hoc) against the corpus
  lib                  create, edit, combine, and list catalog libraries
  update run           one classification pass: evaluate, decide, route
  triage serve         launch the local HTTP service for the web UI
  stats                citation metrics table for a library
  digest               render the monthly digest
  sync                 pull/push/verify libraries against the remote service

Exit codes: 0 success, 1 user error (bad arguments, bad query, malformed
input data), 2 environment error (IO failures, remote failures, missing
credentials). All output is deterministic for fixed inputs; progress and
diagnostics go to stderr, results to stdout.

An optional TOML config file supplies defaults; flags always win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .corpusindex import Corpus, CorpusError, Index, load_corpus
from .curation import (
    CurationError,
    DecisionLog,
    MappingSource,
    Workflow,
    load_batch,
    render_digest,
)
from .librarystore import (
    Catalog,
    IoFailure,
    LibraryError,
    UnknownLibraryKey,
    restore,
    snapshot,
)
from .metrics import citation_table, render_report, year_histogram
from .presets import (
    EXCLUDED_A_KEY,
    EXCLUDED_B_KEY,
    EXCLUDED_B_KEY_ALT,
    load_preset,
    preset_names,
)
from .querylang import And, QueryError, QueryNode, YearRange, parse
from .remotesync import HttpTransport, RemoteClient, RemoteConfig, RemoteError

log = logging.getLogger(__name__)


class CliUserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; the contract here is 1."""

    def error(self, message: str):
        raise CliUserError(f"{self.prog}: {message}\n{self.format_usage()}".rstrip())


@dataclass
class CliConfig:
    corpus: str = "corpus.jsonl"
    catalog: str = "catalog.txt"
    decisions: str = "decisions.jsonl"
    main_library: str = "SETI"
    excluded_library: str = "Not SETI"
    staging_library: str = "This Month in SETI"
    preset: str = "strict"
    query: str = ""
    remote_base_url: str = "https://api.adsabs.harvard.edu"
    remote_main: str = ""
    remote_excluded: str = ""


_CONFIG_KEYS = {
    ("paths", "corpus"): "corpus",
    ("paths", "catalog"): "catalog",
    ("paths", "decisions"): "decisions",
    ("libraries", "main"): "main_library",
    ("libraries", "excluded"): "excluded_library",
    ("libraries", "staging"): "staging_library",
    ("query", "preset"): "preset",
    ("query", "query"): "query",
    ("remote", "base_url"): "remote_base_url",
    ("remote", "main"): "remote_main",
    ("remote", "excluded"): "remote_excluded",
}


def load_config(path: str | None) -> CliConfig:
    config = CliConfig()
    if path is None:
        return config
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise CliUserError(f"bad config {path}: {exc}") from exc
    updates = {}
    for (section, key), attr in _CONFIG_KEYS.items():
        value = doc.get(section, {}).get(key)
        if value is None:
            continue
        if not isinstance(value, str):
            raise CliUserError(f"config {section}.{key} must be a string")
        updates[attr] = value
    known = {(s, k) for (s, k) in _CONFIG_KEYS}
    for section, body in doc.items():
        if not isinstance(body, dict):
            raise CliUserError(f"config section [{section}] must be a table")
        for key in body:
            if (section, key) not in known:
                raise CliUserError(f"unknown config entry {section}.{key}")
    return replace(config, **updates)


class Workspace:
    """Resolves paths and lazily wires corpus, index, catalog, and log."""

    def __init__(self, config: CliConfig, root: str = "."):
        self.config = config
        self.root = root
        self._corpus: Corpus | None = None
        self._index: Index | None = None
        self._catalog: Catalog | None = None
        self._log: DecisionLog | None = None

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    @property
    def corpus(self) -> Corpus:
        if self._corpus is None:
            target = self.path(self.config.corpus)
            print(f"loading corpus from {target}", file=sys.stderr)
            self._corpus = load_corpus(target)
        return self._corpus

    @property
    def index(self) -> Index:
        if self._index is None:
            print(f"indexing {len(self.corpus)} records", file=sys.stderr)
            self._index = Index(self.corpus)
        return self._index

    def _ensure_library(self, catalog: Catalog, name: str) -> str:
        libs = catalog.by_name(name)
        if libs:
            return libs[0].key
        return catalog.create_library(name, who="cli")

    @property
    def catalog(self) -> Catalog:
        if self._catalog is None:
            target = self.path(self.config.catalog)
            if os.path.exists(target):
                self._catalog = restore(target)
            else:
                self._catalog = Catalog()
            main = self._ensure_library(self._catalog, self.config.main_library)
            excluded = self._ensure_library(self._catalog, self.config.excluded_library)
            self._ensure_library(self._catalog, self.config.staging_library)
            # disjointness must hold even for direct lib edits, not only
            # for commands that build a workflow
            self._catalog.set_exclusive_pair(main, excluded)
        return self._catalog

    def save_catalog(self) -> None:
        if self._catalog is not None:
            snapshot(self._catalog, self.path(self.config.catalog))

    @property
    def decision_log(self) -> DecisionLog:
        if self._log is None:
            target = self.path(self.config.decisions)
            if os.path.exists(target):
                with open(target, "r", encoding="utf-8") as fh:
                    self._log = DecisionLog.from_lines(fh)
            else:
                self._log = DecisionLog()
        return self._log

    def save_decision_log(self) -> None:
        if self._log is None:
            return
        target = self.path(self.config.decisions)
        tmp = target + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for line in self._log.dump_lines():
                fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)

    def library_key(self, name: str) -> str:
        """Library lookup by name, or by raw key when the name is taken by
        several libraries (names are not unique in the catalog)."""
        libs = self.catalog.by_name(name)
        if len(libs) == 1:
            return libs[0].key
        if len(libs) > 1:
            raise CliUserError(
                f"library name {name!r} is ambiguous; use its key (see 'lib list')"
            )
        try:
            return self.catalog.get(name).key
        except UnknownLibraryKey:
            raise CliUserError(f"no library named {name!r}") from None

    def aliases(self) -> dict[str, str]:
        main = self.library_key(self.config.main_library)
        excluded = self.library_key(self.config.excluded_library)
        return {
            EXCLUDED_A_KEY: main,
            EXCLUDED_B_KEY: excluded,
            EXCLUDED_B_KEY_ALT: excluded,
        }

    def workflow(self) -> Workflow:
        return Workflow(
            self.corpus,
            self.index,
            self.catalog,
            self.library_key(self.config.main_library),
            self.library_key(self.config.excluded_library),
            staging_key=self.library_key(self.config.staging_library),
            aliases=self.aliases(),
            decision_log=self.decision_log,
        )


def _query_from_args(args: argparse.Namespace, config: CliConfig) -> QueryNode:
    if getattr(args, "query", None):
        node = parse(args.query)
    else:
        preset = getattr(args, "preset", None) or config.preset or "strict"
        try:
            node = parse(load_preset(preset))
        except KeyError:
            raise CliUserError(
                f"unknown preset {preset!r}; available: {', '.join(preset_names())}"
            ) from None
    year = getattr(args, "year", None)
    if year is not None:
        node = And((node, YearRange(year, year)))
    return node


# -- subcommand handlers ---------------------------------------------------


def cmd_corpus_load(args: argparse.Namespace, ws: Workspace) -> int:
    corpus = load_corpus(args.path)
    print(f"{len(corpus)} records")
    for warning in corpus.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def cmd_search(args: argparse.Namespace, ws: Workspace) -> int:
    node = _query_from_args(args, ws.config)
    workflow = ws.workflow()
    result = workflow.search(node)
    hits = result.hits[: args.limit] if args.limit else result.hits
    if args.count:
        print(result.total)
        return 0
    for bibcode in hits:
        print(bibcode)
    print(f"{result.total} hits", file=sys.stderr)
    return 0


def _bibcodes_from(args: argparse.Namespace) -> list[str]:
    bibcodes = list(args.bibcodes)
    if args.from_file:
        with open(args.from_file, "r", encoding="utf-8") as fh:
            bibcodes.extend(line.strip() for line in fh if line.strip())
    if not bibcodes:
        raise CliUserError("no bibcodes given (arguments or --from-file)")
    return bibcodes


def cmd_lib(args: argparse.Namespace, ws: Workspace) -> int:
    catalog = ws.catalog
    if args.lib_action == "create":
        key = catalog.create_library(args.name, description=args.description, who="cli")
        ws.save_catalog()
        print(key)
        return 0
    if args.lib_action == "add":
        added = catalog.add_members(ws.library_key(args.name), _bibcodes_from(args), who="cli")
        ws.save_catalog()
        print(f"{added} added")
        return 0
    if args.lib_action == "remove":
        removed = catalog.remove_members(
            ws.library_key(args.name), _bibcodes_from(args), who="cli"
        )
        ws.save_catalog()
        print(f"{removed} removed")
        return 0
    if args.lib_action == "op":
        result = catalog.set_op(args.kind, ws.library_key(args.a), ws.library_key(args.b))
        if args.into:
            existing = catalog.by_name(args.into)
            into = existing[0].key if existing else catalog.create_library(args.into, who="cli")
            current = catalog.members(into)
            catalog.remove_members(into, sorted(current - result), who="cli")
            catalog.add_members(into, sorted(result - current), who="cli")
            ws.save_catalog()
            print(f"{len(result)} members -> {args.into}")
        else:
            for bibcode in sorted(result):
                print(bibcode)
        return 0
    if args.lib_action == "list":
        if args.name:
            for bibcode in sorted(catalog.members(ws.library_key(args.name))):
                print(bibcode)
        else:
            for lib in sorted(catalog.libraries(), key=lambda l: l.name):
                print(f"{lib.name}\t{lib.key}\t{len(lib.members)}")
        return 0
    raise CliUserError(f"unknown lib action {args.lib_action!r}")


def cmd_update_run(args: argparse.Namespace, ws: Workspace) -> int:
    node = _query_from_args(args, ws.config)
    workflow = ws.workflow()
    decisions = {}
    if args.batch:
        with open(args.batch, "r", encoding="utf-8") as fh:
            decisions = load_batch(fh)
    source = MappingSource(decisions, curator=args.curator)
    report = workflow.run_update_cycle(node, source, on_undecided="skip")
    ws.save_decision_log()
    ws.save_catalog()
    print(f"iterations: {report.iterations}")
    print(f"relevant: {report.classified_relevant}")
    print(f"irrelevant: {report.classified_irrelevant}")
    print(f"skipped: {report.skipped}")
    print(f"converged: {'yes' if report.converged else 'no'}")
    if report.residual:
        print(f"residual: {' '.join(report.residual)}")
    return 0


def cmd_triage_serve(args: argparse.Namespace, ws: Workspace) -> int:
    from .service import TriageSession, run

    node = _query_from_args(args, ws.config)
    workflow = ws.workflow()
    ws.save_catalog()
    session = TriageSession(workflow, node, log_path=ws.path(ws.config.decisions))
    print(f"serving on http://{args.host}:{args.port}", file=sys.stderr)
    run(session, host=args.host, port=args.port)
    return 0


def cmd_stats(args: argparse.Namespace, ws: Workspace) -> int:
    members = ws.catalog.members(ws.library_key(args.library or ws.config.main_library))
    report = citation_table(members, ws.corpus)
    rendered = render_report(report, args.format)
    if args.format == "structured":
        import json

        print(json.dumps(rendered, indent=2, sort_keys=True))
    else:
        print(rendered, end="" if str(rendered).endswith("\n") else "\n")
    if args.histogram:
        histogram = year_histogram(members, ws.corpus)
        for year, count in sorted(histogram.counts.items()):
            print(f"{year}\t{count}", file=sys.stderr)
    return 0


def cmd_digest(args: argparse.Namespace, ws: Workspace) -> int:
    workflow = ws.workflow()
    if args.stage:
        staged = workflow.stage_month(args.month)
        ws.save_catalog()
        print(f"staged {staged}", file=sys.stderr)
    print(render_digest(workflow, args.month), end="")
    return 0


def cmd_sync(args: argparse.Namespace, ws: Workspace) -> int:
    token = os.environ.get("ADS_API_TOKEN", "")
    if not token:
        print("sync needs ADS_API_TOKEN in the environment", file=sys.stderr)
        return 2
    config = RemoteConfig(base_url=ws.config.remote_base_url, auth_token=token)
    client = RemoteClient(config, HttpTransport(config))
    key = ws.library_key(args.library)
    remote_name = args.remote_name or args.library
    if args.sync_action == "pull":
        report = client.pull(ws.catalog, key, remote_name)
        ws.save_catalog()
    elif args.sync_action == "push":
        report = client.push(ws.catalog, key, remote_name)
    else:
        report = client.verify(ws.catalog, key, remote_name)
    print(f"library: {args.library}")
    print(f"remote: {report.remote_name}")
    print(f"added: {len(report.added)}")
    print(f"removed: {len(report.removed)}")
    print(f"in_sync: {'yes' if report.in_sync else 'no'}")
    return 0 if report.in_sync or args.sync_action != "verify" else 1


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="bibcurate", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--workspace", default=".", help="directory for data files")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_corpus = sub.add_parser("corpus", help="corpus inspection")
    corpus_sub = p_corpus.add_subparsers(dest="corpus_action", required=True)
    p_load = corpus_sub.add_parser("load", help="parse and validate a corpus file")
    p_load.add_argument("path")
    p_load.set_defaults(handler=cmd_corpus_load)

    p_search = sub.add_parser("search", help="evaluate a query")
    p_search.add_argument("--preset", choices=["strict", "broad"])
    p_search.add_argument("--query", help="ad hoc query text (overrides --preset)")
    p_search.add_argument("--year", type=int, help="restrict to one publication year")
    p_search.add_argument("--limit", type=int)
    p_search.add_argument("--count", action="store_true", help="print only the hit count")
    p_search.set_defaults(handler=cmd_search)

    p_lib = sub.add_parser("lib", help="library management")
    lib_sub = p_lib.add_subparsers(dest="lib_action", required=True)
    p_create = lib_sub.add_parser("create")
    p_create.add_argument("name")
    p_create.add_argument("--description", default="")
    p_add = lib_sub.add_parser("add")
    p_add.add_argument("name")
    p_add.add_argument("bibcodes", nargs="*")
    p_add.add_argument("--from-file")
    p_remove = lib_sub.add_parser("remove")
    p_remove.add_argument("name")
    p_remove.add_argument("bibcodes", nargs="*")
    p_remove.add_argument("--from-file")
    p_op = lib_sub.add_parser("op")
    p_op.add_argument("kind", choices=["union", "intersection", "difference"])
    p_op.add_argument("a")
    p_op.add_argument("b")
    p_op.add_argument("--into", help="store the result in this library")
    p_list = lib_sub.add_parser("list")
    p_list.add_argument("name", nargs="?")
    p_lib.set_defaults(handler=cmd_lib)

    p_update = sub.add_parser("update", help="classification passes")
    update_sub = p_update.add_subparsers(dest="update_action", required=True)
    p_run = update_sub.add_parser("run", help="evaluate and classify until converged")
    p_run.add_argument("--preset", choices=["strict", "broad"])
    p_run.add_argument("--query")
    p_run.add_argument("--year", type=int)
    p_run.add_argument("--batch", help="tab-separated decisions file")
    p_run.add_argument("--curator", default="batch")
    p_run.set_defaults(handler=cmd_update_run)

    p_triage = sub.add_parser("triage", help="interactive triage")
    triage_sub = p_triage.add_subparsers(dest="triage_action", required=True)
    p_serve = triage_sub.add_parser("serve", help="run the local HTTP service")
    p_serve.add_argument("--preset", choices=["strict", "broad"])
    p_serve.add_argument("--query")
    p_serve.add_argument("--year", type=int)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8642)
    p_serve.set_defaults(handler=cmd_triage_serve)

    p_stats = sub.add_parser("stats", help="citation metrics for a library")
    p_stats.add_argument("--library")
    p_stats.add_argument(
        "--format", choices=["markdown", "csv", "structured"], default="markdown"
    )
    p_stats.add_argument("--histogram", action="store_true")
    p_stats.set_defaults(handler=cmd_stats)

    p_digest = sub.add_parser("digest", help="monthly digest")
    p_digest.add_argument("--month", required=True, help="YYYY-MM")
    p_digest.add_argument("--stage", action="store_true",
                          help="also stage the month into the staging library")
    p_digest.set_defaults(handler=cmd_digest)

    p_sync = sub.add_parser("sync", help="remote library synchronization")
    sync_sub = p_sync.add_subparsers(dest="sync_action", required=True)
    for action in ("pull", "push", "verify"):
        p_action = sync_sub.add_parser(action)
        p_action.add_argument("--library", required=True)
        p_action.add_argument("--remote-name")
    p_sync.set_defaults(handler=cmd_sync)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CliUserError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        ws = Workspace(config, root=args.workspace)
        handler = getattr(args, "handler", None)
        if handler is None:
            raise CliUserError(f"{parser.prog}: missing subcommand")
        return int(handler(args, ws) or 0)
    except CliUserError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (QueryError, CorpusError, LibraryError, CurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, IoFailure, RemoteError) as exc:
        print(f"environment error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
