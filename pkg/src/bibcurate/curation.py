"""Curation workflow: triage verdicts, the rubric, and the update cycle.

Search results are triaged one record at a time. Every verdict is recorded
in an append-only decision log (corrections are new entries; the latest one
wins, and undo appends a marker rather than deleting). Relevant records are
routed into the main library, Irrelevant ones into the exclusion library;
because the search query subtracts both libraries, re-running it after a
pass yields only what is still unjudged. The update cycle repeats
evaluate-and-classify until the result set is empty or only Skipped records
remain.

Verdict rules: a Relevant decision carries no exclusion tags; an Irrelevant
decision needs at least one exclusion tag or a free-text note. The only
automatic rule is that book reviews are Irrelevant. Everything else,
including satire, pseudoscience, and borderline commensal instrument
papers, gets a human look; tag suggestions are hints, never verdicts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Iterable, Protocol, Sequence

from .corpusindex import (
    BibRecord,
    Corpus,
    Doctype,
    Index,
    MatchExplanation,
    SearchResult,
    evaluate,
)
from .librarystore import Catalog, CatalogResolver
from .querylang import And, DocsRef, Not, QueryNode, YearRange, normalize

log = logging.getLogger(__name__)


class Verdict(str, Enum):
    RELEVANT = "Relevant"
    IRRELEVANT = "Irrelevant"
    SKIPPED = "Skipped"


class RubricTag(str, Enum):
    """Why a record belongs (or does not belong) in the bibliography."""

    OBSERVATION = "observation"
    INSTRUMENTATION = "instrumentation"
    FERMI_PARADOX = "fermi-paradox"
    META = "meta-seti"
    HISTORY = "history"
    SOCIAL_SCIENCE = "social-science"
    COMMENSAL = "commensal"
    EXCLUDED_ASTROBIOLOGY_ONLY = "excluded-astrobiology-only"
    EXCLUDED_FUNDAMENTAL_ONLY = "excluded-fundamental-only"
    EXCLUDED_PSEUDOSCIENCE_UFO = "excluded-pseudoscience-ufo"
    EXCLUDED_BOOK_REVIEW = "excluded-book-review"
    EXCLUDED_SATIRE = "excluded-satire"


EXCLUSION_TAGS = frozenset(
    {
        RubricTag.EXCLUDED_ASTROBIOLOGY_ONLY,
        RubricTag.EXCLUDED_FUNDAMENTAL_ONLY,
        RubricTag.EXCLUDED_PSEUDOSCIENCE_UFO,
        RubricTag.EXCLUDED_BOOK_REVIEW,
        RubricTag.EXCLUDED_SATIRE,
    }
)

# Checklist shown with the commensal tag: a passing mention is not enough,
# the search role must be real. One confident yes is enough to keep.
COMMENSAL_CHECKLIST = (
    "Do the stated mission or project goals include this kind of search?",
    "Was the instrument or pipeline built intending this use?",
    "Does the paper discuss the search beyond a single passing sentence?",
    "Does it identify concrete future targets or methods for the search?",
    "Is the work necessary groundwork for a search, acknowledged as such?",
)


class CurationError(Exception):
    pass


class InvalidDecision(CurationError):
    pass


class MissingExclusions(CurationError):
    pass


class DecisionSourceExhausted(CurationError):
    def __init__(self, bibcode: str):
        super().__init__(f"decision source offered no verdict for {bibcode}")
        self.bibcode = bibcode


class NothingToUndo(CurationError):
    def __init__(self, bibcode: str):
        super().__init__(f"no effective decision for {bibcode}")
        self.bibcode = bibcode


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Decision:
    bibcode: str
    verdict: Verdict
    reasons: frozenset[RubricTag] = frozenset()
    note: str = ""
    curator: str = "local"
    decided_at: datetime = field(default_factory=_utcnow)
    month_stamp: str = ""

    def __post_init__(self) -> None:
        if not self.bibcode:
            raise InvalidDecision("decision needs a bibcode")
        exclusions = self.reasons & EXCLUSION_TAGS
        if self.verdict is Verdict.RELEVANT and exclusions:
            raise InvalidDecision(
                f"Relevant decision cannot carry exclusion tags: "
                f"{sorted(t.value for t in exclusions)}"
            )
        if self.verdict is Verdict.IRRELEVANT and not exclusions and not self.note:
            raise InvalidDecision(
                "Irrelevant decision needs an exclusion tag or a note"
            )
        if not self.month_stamp:
            object.__setattr__(
                self, "month_stamp", self.decided_at.astimezone(timezone.utc).strftime("%Y-%m")
            )


@dataclass(frozen=True)
class LogEntry:
    kind: str  # "decision" | "undo"
    decision: Decision | None = None
    bibcode: str = ""

    @staticmethod
    def of(decision: Decision) -> "LogEntry":
        return LogEntry(kind="decision", decision=decision, bibcode=decision.bibcode)

    @staticmethod
    def undo(bibcode: str) -> "LogEntry":
        return LogEntry(kind="undo", bibcode=bibcode)


class DecisionLog:
    """Append-only sequence of decisions and undo markers."""

    def __init__(self, entries: Iterable[LogEntry] = ()):
        self.entries: list[LogEntry] = list(entries)

    def append(self, decision: Decision) -> None:
        self.entries.append(LogEntry.of(decision))

    def append_undo(self, bibcode: str) -> None:
        self.entries.append(LogEntry.undo(bibcode))

    def effective(self) -> dict[str, Decision]:
        """Latest surviving decision per bibcode. An undo cancels the most
        recent surviving decision for its bibcode."""
        stacks: dict[str, list[Decision]] = {}
        for entry in self.entries:
            if entry.kind == "decision":
                stacks.setdefault(entry.bibcode, []).append(entry.decision)
            elif entry.kind == "undo":
                stack = stacks.get(entry.bibcode)
                if stack:
                    stack.pop()
            else:
                raise ValueError(f"unknown log entry kind {entry.kind!r}")
        return {b: stack[-1] for b, stack in stacks.items() if stack}

    def effective_for(self, bibcode: str) -> Decision | None:
        return self.effective().get(bibcode)

    # -- serialization ------------------------------------------------------

    @staticmethod
    def entry_to_json(entry: LogEntry) -> dict:
        if entry.kind == "undo":
            return {"kind": "undo", "bibcode": entry.bibcode}
        d = entry.decision
        return {
            "kind": "decision",
            "bibcode": d.bibcode,
            "verdict": d.verdict.value,
            "tags": sorted(t.value for t in d.reasons),
            "note": d.note,
            "curator": d.curator,
            "decidedAt": d.decided_at.astimezone(timezone.utc).isoformat(),
            "monthStamp": d.month_stamp,
        }

    @staticmethod
    def entry_from_json(doc: dict) -> LogEntry:
        if doc.get("kind") == "undo":
            return LogEntry.undo(doc["bibcode"])
        return LogEntry.of(
            Decision(
                bibcode=doc["bibcode"],
                verdict=Verdict(doc["verdict"]),
                reasons=frozenset(RubricTag(t) for t in doc.get("tags", ())),
                note=doc.get("note", ""),
                curator=doc.get("curator", "local"),
                decided_at=datetime.fromisoformat(doc["decidedAt"]),
                month_stamp=doc.get("monthStamp", ""),
            )
        )

    def dump_lines(self) -> list[str]:
        return [json.dumps(self.entry_to_json(e), sort_keys=True) for e in self.entries]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "DecisionLog":
        entries = [
            cls.entry_from_json(json.loads(line))
            for line in lines
            if line.strip()
        ]
        return cls(entries)


def auto_rules(record: BibRecord) -> Decision | None:
    """The only automatic verdict: book reviews are excluded outright."""
    if record.doctype is Doctype.BOOKREVIEW:
        return Decision(
            bibcode=record.bibcode,
            verdict=Verdict.IRRELEVANT,
            reasons=frozenset({RubricTag.EXCLUDED_BOOK_REVIEW}),
            note="automatic: book review doctype",
            curator="auto",
        )
    return None


@dataclass(frozen=True)
class TagHint:
    tag: RubricTag
    score: int
    cue: str


_TAG_CUES: tuple[tuple[RubricTag, tuple[str, ...]], ...] = (
    (RubricTag.OBSERVATION, ("survey", "observations", "search for", "null result", "targeted search")),
    (RubricTag.INSTRUMENTATION, ("instrument", "receiver", "spectrometer", "backend", "signal processing", "telescope array")),
    (RubricTag.FERMI_PARADOX, ("fermi paradox", "great silence", "great filter", "where is everybody")),
    (RubricTag.META, ("research program", "state of the field", "bibliography", "funding", "nomenclature")),
    (RubricTag.HISTORY, ("history", "historical", "archival", "anniversary")),
    (RubricTag.SOCIAL_SCIENCE, ("societal", "public perception", "sociology", "anthropology", "policy", "post-detection")),
    (RubricTag.COMMENSAL, ("commensal", "piggyback", "shared backend", "concurrent observing")),
    (RubricTag.EXCLUDED_ASTROBIOLOGY_ONLY, ("biosignature", "habitability", "prebiotic", "microbial")),
    (RubricTag.EXCLUDED_FUNDAMENTAL_ONLY, ("exoplanet demographics", "stellar population", "radial velocity survey")),
    (RubricTag.EXCLUDED_PSEUDOSCIENCE_UFO, ("ufo", "ufos", "uap", "alien abduction", "flying saucer")),
    (RubricTag.EXCLUDED_SATIRE, ("satire", "satirical", "april fools", "parody")),
    (RubricTag.EXCLUDED_BOOK_REVIEW, ("book review", "reviewed by")),
)


def suggest_tags(
    record: BibRecord, explanations: Sequence[MatchExplanation] = ()
) -> list[TagHint]:
    """Ranked rubric-tag hints from surface cues. Title cues count double.
    Hints only; verdicts stay with the curator."""
    title = record.title.lower()
    rest = " ".join((record.abstract, " ".join(record.keywords))).lower()
    matched_terms = " ".join(e.term for e in explanations).lower()
    hints = []
    for tag, cues in _TAG_CUES:
        score = 0
        cue_hit = ""
        for cue in cues:
            hits = 2 * title.count(cue) + rest.count(cue) + matched_terms.count(cue)
            if hits and not cue_hit:
                cue_hit = cue
            score += hits
        if score:
            hints.append(TagHint(tag=tag, score=score, cue=cue_hit))
    hints.sort(key=lambda h: (-h.score, h.tag.value))
    return hints


@dataclass(frozen=True)
class CycleReport:
    iterations: int
    classified_relevant: int
    classified_irrelevant: int
    skipped: int
    converged: bool
    residual: tuple[str, ...]


class DecisionSource(Protocol):
    def decide(self, record: BibRecord, hints: list[TagHint]) -> Decision | None:
        """Return a decision for the record, or None when it has none."""


class MappingSource:
    """Decision source backed by a bibcode mapping, e.g. a parsed batch file."""

    def __init__(self, decisions: dict[str, tuple[Verdict, Iterable[RubricTag], str]],
                 curator: str = "batch",
                 clock: Callable[[], datetime] | None = None):
        self._decisions = decisions
        self._curator = curator
        self._clock = clock or _utcnow

    def decide(self, record: BibRecord, hints: list[TagHint]) -> Decision | None:
        got = self._decisions.get(record.bibcode)
        if got is None:
            return None
        verdict, tags, note = got
        return Decision(
            bibcode=record.bibcode,
            verdict=verdict,
            reasons=frozenset(tags),
            note=note,
            curator=self._curator,
            decided_at=self._clock(),
        )


def parse_batch_line(line: str) -> tuple[str, Verdict, frozenset[RubricTag], str]:
    """One decision per line: bibcode, verdict, comma-joined tags, note;
    tab-separated, tags and note optional."""
    cols = line.rstrip("\n").split("\t")
    if len(cols) < 2 or not cols[0]:
        raise InvalidDecision(f"batch line needs bibcode<TAB>verdict: {line!r}")
    bibcode = cols[0].strip()
    try:
        verdict = Verdict(cols[1].strip().capitalize())
    except ValueError:
        raise InvalidDecision(f"unknown verdict {cols[1]!r}") from None
    tags: frozenset[RubricTag] = frozenset()
    if len(cols) > 2 and cols[2].strip():
        try:
            tags = frozenset(RubricTag(t.strip()) for t in cols[2].split(",") if t.strip())
        except ValueError as exc:
            raise InvalidDecision(f"unknown tag in {cols[2]!r}: {exc}") from None
    note = cols[3].strip() if len(cols) > 3 else ""
    return bibcode, verdict, tags, note


def load_batch(lines: Iterable[str]) -> dict[str, tuple[Verdict, frozenset[RubricTag], str]]:
    decisions = {}
    for line in lines:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        bibcode, verdict, tags, note = parse_batch_line(line)
        decisions[bibcode] = (verdict, tags, note)
    return decisions


class Workflow:
    """Ties a corpus, its index, and a catalog into the triage loop."""

    def __init__(
        self,
        corpus: Corpus,
        index: Index,
        catalog: Catalog,
        main_key: str,
        excluded_key: str,
        *,
        staging_key: str | None = None,
        aliases: dict[str, str] | None = None,
        decision_log: DecisionLog | None = None,
        clock: Callable[[], datetime] | None = None,
    ):
        self.corpus = corpus
        self.index = index
        self.catalog = catalog
        self.main_key = main_key
        self.excluded_key = excluded_key
        self.staging_key = staging_key
        self.resolver = CatalogResolver(catalog, aliases)
        self.log = decision_log if decision_log is not None else DecisionLog()
        self.clock = clock or _utcnow
        catalog.set_exclusive_pair(main_key, excluded_key)

    # -- plumbing -----------------------------------------------------------

    def search(self, query: QueryNode, explain: bool = False) -> SearchResult:
        return evaluate(query, self.index, self.resolver, explain=explain)

    def require_exclusions(self, query: QueryNode) -> None:
        """The update query must subtract both the main and the excluded
        library, or classified records would never leave the queue."""
        node = normalize(query)
        excluded_keys: set[str] = set()
        if isinstance(node, And):
            for child in node.children:
                if isinstance(child, Not) and isinstance(child.child, DocsRef):
                    excluded_keys.add(self.resolver.resolve_key(child.child.library_key))
        needed = {self.main_key, self.excluded_key}
        missing = needed - excluded_keys
        if missing:
            raise MissingExclusions(
                "query must exclude the main and excluded libraries via "
                f"NOT docs(...); missing: {sorted(missing)}"
            )

    def _membership_for(self, bibcode: str, decision: Decision | None) -> None:
        """Make library membership reflect ``decision`` (latest wins)."""
        self.catalog.remove_members(self.main_key, [bibcode], who="curation")
        self.catalog.remove_members(self.excluded_key, [bibcode], who="curation")
        if decision is None or decision.verdict is Verdict.SKIPPED:
            return
        target = (
            self.main_key
            if decision.verdict is Verdict.RELEVANT
            else self.excluded_key
        )
        self.catalog.add_members(target, [bibcode], who="curation")

    def apply_decision(self, decision: Decision) -> None:
        """Record a decision and route the bibcode accordingly."""
        if decision.bibcode not in self.corpus:
            raise CurationError(f"unknown bibcode {decision.bibcode}")
        self.log.append(decision)
        self._membership_for(decision.bibcode, decision)

    def undo(self, bibcode: str) -> Decision:
        """Cancel the latest decision for ``bibcode``; membership reverts to
        the previous decision, or to unjudged if none remains."""
        undone = self.log.effective_for(bibcode)
        if undone is None:
            raise NothingToUndo(bibcode)
        self.log.append_undo(bibcode)
        self._membership_for(bibcode, self.log.effective_for(bibcode))
        return undone

    def replay(self) -> dict[str, frozenset[str]]:
        """Membership implied by the decision log alone (for verification)."""
        members: dict[str, set[str]] = {self.main_key: set(), self.excluded_key: set()}
        for bibcode, decision in self.log.effective().items():
            if decision.verdict is Verdict.RELEVANT:
                members[self.main_key].add(bibcode)
            elif decision.verdict is Verdict.IRRELEVANT:
                members[self.excluded_key].add(bibcode)
        return {k: frozenset(v) for k, v in members.items()}

    # -- the update cycle ---------------------------------------------------

    def run_update_cycle(
        self,
        query: QueryNode,
        source: DecisionSource,
        *,
        year: int | None = None,
        on_undecided: str = "error",
        max_iterations: int = 100,
    ) -> CycleReport:
        """Evaluate, classify every hit, and repeat until the result set is
        empty or only skipped records remain. ``year`` restricts the run to
        one publication year (equivalent to AND year:YYYY)."""
        if on_undecided not in ("error", "skip"):
            raise ValueError("on_undecided must be 'error' or 'skip'")
        if year is not None:
            query = And((query, YearRange(year, year)))
        self.require_exclusions(query)

        relevant = irrelevant = 0
        skipped: set[str] = set()
        iterations = 0
        while iterations < max_iterations:
            iterations += 1
            hits = self.search(query).hits
            pending = [b for b in hits if b not in skipped]
            if not pending:
                break
            for bibcode in pending:
                record = self.corpus[bibcode]
                decision = auto_rules(record)
                if decision is None:
                    decision = source.decide(record, suggest_tags(record))
                if decision is None:
                    if on_undecided == "error":
                        raise DecisionSourceExhausted(bibcode)
                    decision = Decision(
                        bibcode=bibcode,
                        verdict=Verdict.SKIPPED,
                        note="no verdict offered",
                        curator="auto",
                        decided_at=self.clock(),
                    )
                self.apply_decision(decision)
                if decision.verdict is Verdict.RELEVANT:
                    relevant += 1
                elif decision.verdict is Verdict.IRRELEVANT:
                    irrelevant += 1
                else:
                    skipped.add(bibcode)
        residual = self.search(query).hits
        return CycleReport(
            iterations=iterations,
            classified_relevant=relevant,
            classified_irrelevant=irrelevant,
            skipped=len(skipped),
            converged=not residual,
            residual=residual,
        )

    # -- staging and digests -------------------------------------------------

    def relevant_in_month(self, month: str) -> list[BibRecord]:
        chosen = [
            d
            for d in self.log.effective().values()
            if d.verdict is Verdict.RELEVANT and d.month_stamp == month
        ]
        records = [self.corpus[d.bibcode] for d in chosen if d.bibcode in self.corpus]
        records.sort(key=lambda r: (r.year, r.bibcode), reverse=True)
        return records

    def stage_month(self, month: str) -> int:
        """Add the month's Relevant bibcodes to the staging library.
        Idempotent; returns how many were newly added."""
        if self.staging_key is None:
            raise CurationError("no staging library configured")
        records = self.relevant_in_month(month)
        return self.catalog.add_members(
            self.staging_key, [r.bibcode for r in records], who="staging"
        )


_DOCTYPE_HEADINGS = {
    Doctype.ARTICLE: "Articles",
    Doctype.EPRINT: "Preprints",
    Doctype.ABSTRACT: "Abstracts",
    Doctype.BOOK: "Books",
    Doctype.PROCEEDINGS: "Conference proceedings",
    Doctype.TECHREPORT: "Technical reports",
    Doctype.PRESSRELEASE: "Press releases",
    Doctype.PHDTHESIS: "Theses",
    Doctype.SOFTWARE: "Software",
    Doctype.CATALOG: "Catalogs",
    Doctype.BOOKREVIEW: "Book reviews",
    Doctype.MISC: "Other",
}


def _digest_authors(record: BibRecord) -> str:
    names = list(record.authors)
    if len(names) > 3:
        return "; ".join(names[:3]) + " et al."
    return "; ".join(names)


def render_digest(workflow: Workflow, month: str) -> str:
    """Deterministic monthly digest of Relevant decisions, grouped by
    document type, newest first within each group. An empty month yields an
    explicit empty document and a logged warning."""
    records = workflow.relevant_in_month(month)
    lines = [f"# Monthly digest: {month}", ""]
    if not records:
        log.warning("digest for %s has no entries", month)
        lines.append(f"No entries for {month}.")
        return "\n".join(lines) + "\n"
    lines.append(f"{len(records)} new {'entry' if len(records) == 1 else 'entries'}.")
    for doctype in Doctype:
        group = [r for r in records if r.doctype is doctype]
        if not group:
            continue
        lines.append("")
        lines.append(f"## {_DOCTYPE_HEADINGS[doctype]}")
        lines.append("")
        for record in group:
            lines.append(
                f"- {record.title} ({record.year}) [{record.bibcode}] "
                f"{_digest_authors(record)}"
            )
    return "\n".join(lines) + "\n"
