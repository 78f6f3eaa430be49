"""Shared fixtures: the 12-record confounder corpus and preset wiring."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bibcurate.corpusindex import DictResolver, Index, load_corpus
from bibcurate.presets import EXCLUDED_A_KEY, EXCLUDED_B_KEY, EXCLUDED_B_KEY_ALT

FIXTURES = Path(__file__).parent / "fixtures"

# Hand-verified hit set of preset-strict over the confounder corpus,
# newest first (year desc, bibcode desc). Frozen; do not derive.
STRICT_EXPECTED = (
    "2021MNRAS.500.1921R",
    "2020PASP..132j5001C",
    "2019ApJ...887..201S",
    "2019ApJ...884..145T",
    "2018AJ....156..260M",
    "2015IJAsB..14..147G",
    "1961PhT....14...40O",
)

NON_HITS = (
    "2016JHyd..536..112K",
    "2014NlnDy..78..301F",
    "2017ApJ...845...77D",
    "2018PlCel..30..886E",
    "2020A&A...642A..28S",
)

ETI_ONLY_BIBCODE = "2018PlCel..30..886E"

# The human verdicts that converge the fixture: everything relevant except
# the disk-imaging paper that only name-drops the institute.
FIXTURE_VERDICTS = {
    "2021MNRAS.500.1921R": "Relevant",
    "2020PASP..132j5001C": "Relevant",
    "2019ApJ...887..201S": "Irrelevant",
    "2019ApJ...884..145T": "Relevant",
    "2018AJ....156..260M": "Relevant",
    "2015IJAsB..14..147G": "Relevant",
    "1961PhT....14...40O": "Relevant",
}


@pytest.fixture(scope="session")
def falsepos_corpus():
    return load_corpus(FIXTURES / "falsepos.jsonl")


@pytest.fixture(scope="session")
def falsepos_index(falsepos_corpus):
    return Index(falsepos_corpus)


@pytest.fixture()
def empty_preset_resolver():
    """Resolver where both preset-embedded library keys exist and are empty."""
    return DictResolver(
        members={
            EXCLUDED_A_KEY: (),
            EXCLUDED_B_KEY: (),
            EXCLUDED_B_KEY_ALT: (),
        }
    )
