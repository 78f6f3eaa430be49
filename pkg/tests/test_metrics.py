"""Citation metrics tests: hand-tallied goldens plus a slow reference."""

from __future__ import annotations

import csv
import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import naive
from bibcurate.corpusindex import load_corpus
from bibcurate.metrics import (
    ROW_LABELS,
    MetricsColumn,
    citation_table,
    invert_citations,
    lower_median,
    normalize_author,
    render_report,
    round_half_away,
    year_histogram,
)

# Post-triage main library over the fixture corpus: every search hit except
# the debris-disk paper that only name-drops an institute.
MAIN_MEMBERS = (
    "2019ApJ...884..145T",
    "2018AJ....156..260M",
    "1961PhT....14...40O",
    "2015IJAsB..14..147G",
    "2021MNRAS.500.1921R",
    "2020PASP..132j5001C",
)


def column_as_dict(column: MetricsColumn) -> dict:
    return {
        "member_count": column.member_count,
        "citing_papers": column.citing_papers,
        "total_citations": column.total_citations,
        "self_citations": column.self_citations,
        "average_citations": column.average_citations,
        "median_citations": column.median_citations,
        "normalized_citations": column.normalized_citations,
        "refereed_citations": column.refereed_citations,
        "average_refereed_citations": column.average_refereed_citations,
        "median_refereed_citations": column.median_refereed_citations,
        "normalized_refereed_citations": column.normalized_refereed_citations,
    }


# -------------------------------------------------------------- primitives


class TestNormalizeAuthor:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Mireles, Ana", "mireles, a"),
            ("  VAN DER BERG , Hendrik ", "van der berg, h"),
            ("Doe, J. R.", "doe, j"),
            ("Okonkwo, Daniel", "okonkwo, d"),
            ("Plainword", "plainword"),
            ("Last,", "last"),
        ],
    )
    def test_hand_cases(self, raw, expected):
        assert normalize_author(raw) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.text("abcdefgh ,.-", max_size=20))
    def test_idempotent(self, raw):
        once = normalize_author(raw)
        assert normalize_author(once) == once

    @settings(max_examples=200, deadline=None)
    @given(st.text("abcdefgh ,.-", max_size=20))
    def test_agrees_with_naive(self, raw):
        assert normalize_author(raw) == naive.naive_author(raw)


class TestRounding:
    @pytest.mark.parametrize(
        "num,den,expected",
        [
            (1329, 553, 2.4),
            (783, 171, 4.6),
            (8, 6, 1.3),
            (5, 100, 0.1),  # exact tie rounds away from zero
            (15, 100, 0.2),
            (-5, 100, -0.1),
            (0, 7, 0.0),
            (7, 0, 0.0),  # zero denominator defined as zero
            (3, 2, 1.5),
        ],
    )
    def test_hand_cases(self, num, den, expected):
        assert round_half_away(num, den) == expected

    @settings(max_examples=500, deadline=None)
    @given(st.integers(-10**6, 10**6), st.integers(0, 10**4))
    def test_agrees_with_naive(self, num, den):
        assert round_half_away(num, den) == naive.naive_round1(num, den)


class TestLowerMedian:
    @pytest.mark.parametrize(
        "values,expected",
        [([], 0), ([5], 5), ([1, 2], 1), ([3, 1, 2], 2), ([4, 1, 3, 2], 2)],
    )
    def test_hand_cases(self, values, expected):
        assert lower_median(values) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 50), max_size=15))
    def test_result_is_an_element_when_nonempty(self, values):
        if values:
            assert lower_median(values) in values


# ------------------------------------------------------------- graph


class TestInvertCitations:
    def test_fixture_graph(self, falsepos_corpus):
        graph = invert_citations(falsepos_corpus)
        assert graph.citers["1961PhT....14...40O"] == frozenset(
            {
                "2019ApJ...884..145T",
                "2018AJ....156..260M",
                "2015IJAsB..14..147G",
                "2021MNRAS.500.1921R",
            }
        )
        assert graph.citers["2018AJ....156..260M"] == frozenset(
            {
                "2019ApJ...884..145T",
                "2021MNRAS.500.1921R",
                "2020PASP..132j5001C",
            }
        )
        assert graph.citers["2015IJAsB..14..147G"] == frozenset(
            {"2021MNRAS.500.1921R"}
        )
        assert graph.citers["2021MNRAS.500.1921R"] == frozenset()
        # one reference in the fixture points outside the corpus
        assert graph.dangling == 1


# ------------------------------------------------------------- the table


class TestCitationTable:
    def test_fixture_totals_column(self, falsepos_corpus):
        report = citation_table(MAIN_MEMBERS, falsepos_corpus)
        t = report.totals
        assert t.member_count == 6
        assert t.citing_papers == 5
        assert t.total_citations == 8
        assert t.self_citations == 1
        assert t.average_citations == 1.3
        assert t.median_citations == 0
        assert t.normalized_citations == 6.5
        assert t.refereed_citations == 6
        assert t.average_refereed_citations == 1.0
        assert t.median_refereed_citations == 0
        assert t.normalized_refereed_citations == 5.0

    def test_fixture_refereed_column(self, falsepos_corpus):
        report = citation_table(MAIN_MEMBERS, falsepos_corpus)
        r = report.refereed
        assert r.member_count == 5  # the eprint drops out
        assert r.citing_papers == 5
        assert r.total_citations == 8
        assert r.self_citations == 1
        assert r.average_citations == 1.6
        assert r.median_citations == 1
        assert r.normalized_citations == 6.5
        assert r.refereed_citations == 6
        assert r.average_refereed_citations == 1.2
        assert r.median_refereed_citations == 1
        assert r.normalized_refereed_citations == 5.0

    def test_fixture_bookkeeping(self, falsepos_corpus):
        report = citation_table(MAIN_MEMBERS, falsepos_corpus)
        assert report.missing_members == ()
        assert report.dangling_references == 1

    def test_missing_members_are_reported_not_counted(self, falsepos_corpus):
        report = citation_table(
            MAIN_MEMBERS + ("2030Ghost....1G",), falsepos_corpus
        )
        assert report.missing_members == ("2030Ghost....1G",)
        assert report.totals.member_count == 6

    def test_empty_membership(self, falsepos_corpus):
        report = citation_table((), falsepos_corpus)
        assert report.totals.member_count == 0
        assert report.totals.average_citations == 0.0
        assert report.totals.median_citations == 0

    def test_fixture_agrees_with_naive(self, falsepos_corpus):
        report = citation_table(MAIN_MEMBERS, falsepos_corpus)
        ref = naive.naive_metrics(list(MAIN_MEMBERS), falsepos_corpus)
        assert column_as_dict(report.totals) == ref["totals"]
        assert column_as_dict(report.refereed) == ref["refereed"]
        assert list(report.missing_members) == ref["missing"]


# ------------------------------------------------ randomized vs reference


@st.composite
def _corpus_and_members(draw):
    n = draw(st.integers(1, 10))
    bibcodes = [f"20{i:02d}Rnd.....{i:02X}Z" for i in range(n)]
    docs = []
    for i, bibcode in enumerate(bibcodes):
        others = [b for b in bibcodes if b != bibcode]
        refs = draw(
            st.lists(st.sampled_from(others), max_size=min(4, len(others)), unique=True)
        ) if others else []
        if draw(st.booleans()):
            refs = refs + ["2099Gone....1X"]
        docs.append(
            {
                "bibcode": bibcode,
                "title": "t",
                "authors": draw(
                    st.lists(
                        st.sampled_from(
                            ["Ada, A", "Bo, B", "Cy, C", "Dee, D", "Ada, A"]
                        ),
                        min_size=0,
                        max_size=3,
                    )
                ),
                "abstract": "a",
                "keywords": [],
                "year": 2000 + i,
                "doctype": "article",
                "refereed": draw(st.booleans()),
                "collections": ["astronomy"],
                "references": refs,
            }
        )
    members = draw(st.lists(st.sampled_from(bibcodes), max_size=n, unique=True))
    members += draw(st.lists(st.just("1999Miss....1M"), max_size=1))
    corpus = load_corpus([json.dumps(d) for d in docs])
    return corpus, members


class TestRandomizedAgainstNaive:
    @settings(max_examples=150, deadline=None)
    @given(_corpus_and_members())
    def test_full_report_matches(self, case):
        corpus, members = case
        report = citation_table(members, corpus)
        ref = naive.naive_metrics(members, corpus)
        assert column_as_dict(report.totals) == ref["totals"]
        assert column_as_dict(report.refereed) == ref["refereed"]
        assert list(report.missing_members) == ref["missing"]


# ---------------------------------------------------------------- histogram


class TestYearHistogram:
    def test_fixture_counts(self, falsepos_corpus):
        hist = year_histogram(MAIN_MEMBERS, falsepos_corpus)
        assert hist.counts == {1961: 1, 2015: 1, 2018: 1, 2019: 1, 2020: 1, 2021: 1}
        assert hist.missing_members == ()

    def test_counts_sum_to_included_members(self, falsepos_corpus):
        hist = year_histogram(
            MAIN_MEMBERS + ("2030Ghost....1G",), falsepos_corpus
        )
        assert sum(hist.counts.values()) == len(MAIN_MEMBERS)
        assert hist.missing_members == ("2030Ghost....1G",)

    def test_bins_are_sorted(self, falsepos_corpus):
        hist = year_histogram(falsepos_corpus.bibcodes, falsepos_corpus)
        years = [y for y in hist.counts if isinstance(y, int)]
        assert years == sorted(years)


# ---------------------------------------------------------------- renderers


class TestRenderReport:
    @pytest.fixture()
    def report(self, falsepos_corpus):
        return citation_table(MAIN_MEMBERS, falsepos_corpus)

    def test_markdown_has_all_rows(self, report):
        text = render_report(report, "markdown")
        lines = text.splitlines()
        assert lines[0] == "Members: 6 total, 5 refereed"
        for label in ROW_LABELS:
            assert any(line.startswith(f"| {label} |") for line in lines)
        assert "| Average citations | 1.3 | 1.6 |" in lines

    def test_csv_parses_back(self, report):
        rows = list(csv.reader(io.StringIO(render_report(report, "csv"))))
        assert rows[0] == ["", "Totals", "Refereed"]
        assert rows[1] == ["Members", "6", "5"]
        assert len(rows) == 2 + len(ROW_LABELS)
        table = {row[0]: (row[1], row[2]) for row in rows[2:]}
        assert table["Total citations"] == ("8", "8")
        assert table["Average citations"] == ("1.3", "1.6")
        assert table["Normalized refereed citations"] == ("5.0", "5.0")

    def test_structured_keys_and_values(self, report):
        data = render_report(report, "structured")
        assert data["totals"]["averageCitations"] == 1.3
        assert data["refereed"]["medianCitations"] == 1
        assert data["totals"]["memberCount"] == 6
        assert data["missingMembers"] == []
        assert data["danglingReferences"] == 1
        # structured output must be JSON-clean
        json.dumps(data)

    def test_decimal_cells_always_show_one_place(self, report):
        text = render_report(report, "markdown")
        assert "| Average refereed citations | 1.0 | 1.2 |" in text.splitlines()

    def test_unknown_format(self, report):
        with pytest.raises(ValueError):
            render_report(report, "yaml")
