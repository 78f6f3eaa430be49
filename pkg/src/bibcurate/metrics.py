"""Citation metrics over a closed corpus.

The reference lists stored on each record are inverted into citer sets
(paper B cites paper A when A appears in B's references); references that
point outside the corpus are ignored and counted as dangling. The metrics
table has two columns: Totals covers every library member found in the
corpus, Refereed restricts the member population to refereed members. The
refereed* rows additionally restrict the citing papers to refereed ones.

Conventions, applied uniformly:

* averages and normalized sums round half away from zero to one decimal;
* medians are integer lower medians (element at index (n-1)//2);
* self-citations count citing/cited pairs that share at least one
  normalized author name ("last, first-initial", case-insensitive);
* normalized citations divide each member's citation count by its author
  count (author-less records contribute zero).

Records may carry an externalCitationCount for display by callers; it never
feeds the computations here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable

from .corpusindex import BibRecord, Corpus


@dataclass(frozen=True)
class CitationGraph:
    citers: dict[str, frozenset[str]]
    dangling: int


def invert_citations(corpus: Corpus) -> CitationGraph:
    """Map each bibcode to the set of corpus bibcodes citing it."""
    citers: dict[str, set[str]] = {b: set() for b in corpus.bibcodes}
    dangling = 0
    for record in corpus:
        for ref in record.references:
            if ref in citers:
                citers[ref].add(record.bibcode)
            else:
                dangling += 1
    return CitationGraph(
        citers={b: frozenset(s) for b, s in citers.items()}, dangling=dangling
    )


def normalize_author(name: str) -> str:
    """Collapse an author name to "last, first-initial", lowercased.
    Idempotent: already-normalized names pass through unchanged."""
    name = name.strip().lower()
    last, _, rest = name.partition(",")
    last = last.strip()
    initial = next((ch for ch in rest if ch.isalpha()), "")
    return f"{last}, {initial}" if initial else last


def round_half_away(numerator: int, denominator: int) -> float:
    """numerator/denominator to one decimal, ties away from zero; 0.0 when
    the denominator is zero."""
    if denominator == 0:
        return 0.0
    value = (Decimal(numerator) / Decimal(denominator)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )
    return float(value)


def lower_median(counts: Iterable[int]) -> int:
    ordered = sorted(counts)
    if not ordered:
        return 0
    return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class MetricsColumn:
    member_count: int
    citing_papers: int
    total_citations: int
    self_citations: int
    average_citations: float
    median_citations: int
    normalized_citations: float
    refereed_citations: int
    average_refereed_citations: float
    median_refereed_citations: int
    normalized_refereed_citations: float


@dataclass(frozen=True)
class MetricsReport:
    totals: MetricsColumn
    refereed: MetricsColumn
    missing_members: tuple[str, ...]
    dangling_references: int


def _author_set(record: BibRecord) -> frozenset[str]:
    return frozenset(normalize_author(a) for a in record.authors)


def _column(members: list[BibRecord], corpus: Corpus, graph: CitationGraph) -> MetricsColumn:
    citer_sets = [graph.citers.get(m.bibcode, frozenset()) for m in members]
    refereed_sets = [
        frozenset(c for c in citers if corpus[c].refereed) for citers in citer_sets
    ]
    counts = [len(s) for s in citer_sets]
    refereed_counts = [len(s) for s in refereed_sets]

    union: set[str] = set()
    for citers in citer_sets:
        union |= citers

    self_citations = 0
    for member, citers in zip(members, citer_sets):
        member_authors = _author_set(member)
        if not member_authors:
            continue
        for citer in citers:
            if member_authors & _author_set(corpus[citer]):
                self_citations += 1

    normalized = Fraction(0)
    normalized_refereed = Fraction(0)
    for member, count, refereed_count in zip(members, counts, refereed_counts):
        n_authors = len(member.authors)
        if n_authors == 0:
            continue
        normalized += Fraction(count, n_authors)
        normalized_refereed += Fraction(refereed_count, n_authors)

    n = len(members)
    return MetricsColumn(
        member_count=n,
        citing_papers=len(union),
        total_citations=sum(counts),
        self_citations=self_citations,
        average_citations=round_half_away(sum(counts), n),
        median_citations=lower_median(counts),
        normalized_citations=round_half_away(
            normalized.numerator, normalized.denominator
        ),
        refereed_citations=sum(refereed_counts),
        average_refereed_citations=round_half_away(sum(refereed_counts), n),
        median_refereed_citations=lower_median(refereed_counts),
        normalized_refereed_citations=round_half_away(
            normalized_refereed.numerator, normalized_refereed.denominator
        ),
    )


def citation_table(members: Iterable[str], corpus: Corpus) -> MetricsReport:
    """Full metrics report for a library's members against the corpus.
    Members absent from the corpus are excluded and reported."""
    graph = invert_citations(corpus)
    present: list[BibRecord] = []
    missing: list[str] = []
    for bibcode in members:
        record = corpus.get(bibcode)
        if record is None:
            missing.append(bibcode)
        else:
            present.append(record)
    refereed_members = [r for r in present if r.refereed]
    return MetricsReport(
        totals=_column(present, corpus, graph),
        refereed=_column(refereed_members, corpus, graph),
        missing_members=tuple(sorted(missing)),
        dangling_references=graph.dangling,
    )


@dataclass(frozen=True)
class YearHistogram:
    counts: dict[int | str, int]
    missing_members: tuple[str, ...]


def year_histogram(members: Iterable[str], corpus: Corpus) -> YearHistogram:
    """Publication-year counts for library members found in the corpus.
    Counts sum to the number of included members; records without a usable
    year would fall into an "unknown" bin."""
    counts: dict[int | str, int] = {}
    missing: list[str] = []
    for bibcode in members:
        record = corpus.get(bibcode)
        if record is None:
            missing.append(bibcode)
            continue
        bin_key: int | str = record.year if record.year is not None else "unknown"
        counts[bin_key] = counts.get(bin_key, 0) + 1
    ordered = dict(
        sorted(counts.items(), key=lambda kv: (isinstance(kv[0], str), kv[0]))
    )
    return YearHistogram(counts=ordered, missing_members=tuple(sorted(missing)))


ROW_LABELS = (
    "Number of citing papers",
    "Total citations",
    "Number of self-citations",
    "Average citations",
    "Median citations",
    "Normalized citations",
    "Refereed citations",
    "Average refereed citations",
    "Median refereed citations",
    "Normalized refereed citations",
)

_ROW_ATTRS = (
    "citing_papers",
    "total_citations",
    "self_citations",
    "average_citations",
    "median_citations",
    "normalized_citations",
    "refereed_citations",
    "average_refereed_citations",
    "median_refereed_citations",
    "normalized_refereed_citations",
)

_DECIMAL_ATTRS = {
    "average_citations",
    "normalized_citations",
    "average_refereed_citations",
    "normalized_refereed_citations",
}


def _cell(column: MetricsColumn, attr: str) -> str:
    value = getattr(column, attr)
    if attr in _DECIMAL_ATTRS:
        return f"{value:.1f}"
    return str(value)


def render_report(report: MetricsReport, fmt: str = "markdown") -> str | dict:
    """Render the 10-row, 2-column metrics table as markdown, csv, or a
    structured dict."""
    if fmt == "structured":
        def camel(attr: str) -> str:
            head, *rest = attr.split("_")
            return head + "".join(part.title() for part in rest)

        def column_dict(column: MetricsColumn) -> dict:
            return {
                "memberCount": column.member_count,
                **{camel(attr): getattr(column, attr) for attr in _ROW_ATTRS},
            }

        return {
            "totals": column_dict(report.totals),
            "refereed": column_dict(report.refereed),
            "missingMembers": list(report.missing_members),
            "danglingReferences": report.dangling_references,
        }
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["", "Totals", "Refereed"])
        writer.writerow(
            ["Members", report.totals.member_count, report.refereed.member_count]
        )
        for label, attr in zip(ROW_LABELS, _ROW_ATTRS):
            writer.writerow(
                [label, _cell(report.totals, attr), _cell(report.refereed, attr)]
            )
        return buffer.getvalue()
    if fmt == "markdown":
        lines = [
            f"Members: {report.totals.member_count} total, "
            f"{report.refereed.member_count} refereed",
            "",
            "| Metric | Totals | Refereed |",
            "| --- | ---: | ---: |",
        ]
        for label, attr in zip(ROW_LABELS, _ROW_ATTRS):
            lines.append(
                f"| {label} | {_cell(report.totals, attr)} "
                f"| {_cell(report.refereed, attr)} |"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
