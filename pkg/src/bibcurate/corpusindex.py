"""Bibliographic records, corpus loading, and the local search engine.

The corpus file format is UTF-8 JSON Lines: one record per line with keys
bibcode, title, authors, abstract, body, keywords, year, doctype, refereed,
collections, references. ``body`` may be null or omitted; every other key is
required. ``externalCitationCount`` is an optional recognized extension; any
other unknown key is ignored with a warning. See docs/corpus-format.md.

Search goes through a positional inverted index per physical field (title,
abstract, keywords, body, author). Pseudo-fields resolve at evaluation time:
``abs`` searches title+abstract+keywords, ``full`` searches
title+abstract+keywords+body. ``bibgroup:`` names resolve through the library
resolver (union of members of libraries with that name), since corpus files
carry no group data of their own.

Tokens are lowercased runs of alphanumerics. A hyphenated word contributes
its parts at consecutive positions plus the joined concatenation as an
alternative token anchored at the first part's position, so phrase matching
may consume either form. A non-exact multi-word phrase additionally matches
single acronym tokens (see ``acronym_match``). Exact phrases match only the
literal split-token sequence: no acronym expansion, no joined-alternative
consumption. There is no stemming; singular and plural are distinct.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import IO, Iterable, Iterator, Protocol

from .librarystore import UnknownLibraryKey
from .querylang import (
    And,
    DocsRef,
    Field,
    FieldScope,
    Not,
    Or,
    Phrase,
    QueryNode,
    Word,
    YearRange,
    normalize,
)

log = logging.getLogger(__name__)


class Doctype(str, Enum):
    ARTICLE = "article"
    EPRINT = "eprint"
    ABSTRACT = "abstract"
    BOOK = "book"
    PROCEEDINGS = "proceedings"
    TECHREPORT = "techreport"
    PRESSRELEASE = "pressrelease"
    PHDTHESIS = "phdthesis"
    SOFTWARE = "software"
    CATALOG = "catalog"
    BOOKREVIEW = "bookreview"
    MISC = "misc"


class Collection(str, Enum):
    ASTRONOMY = "astronomy"
    PHYSICS = "physics"
    GENERAL = "general"


YEAR_MIN = 1000
YEAR_MAX = 2999


class CorpusError(Exception):
    pass


class DuplicateBibcode(CorpusError):
    def __init__(self, bibcode: str, line: int):
        super().__init__(f"line {line}: duplicate bibcode {bibcode!r}")
        self.bibcode = bibcode
        self.line = line


class MalformedRecord(CorpusError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class NotAHit(CorpusError):
    def __init__(self, bibcode: str):
        super().__init__(f"{bibcode} is not in the result set")
        self.bibcode = bibcode


@dataclass(frozen=True)
class BibRecord:
    bibcode: str
    title: str
    authors: tuple[str, ...]
    abstract: str
    keywords: tuple[str, ...]
    year: int
    doctype: Doctype
    refereed: bool
    collections: frozenset[Collection]
    references: tuple[str, ...]
    body_text: str | None = None
    external_citation_count: int | None = None

    def __post_init__(self) -> None:
        if not self.bibcode:
            raise ValueError("bibcode must be non-empty")
        if not (YEAR_MIN <= self.year <= YEAR_MAX):
            raise ValueError(f"year {self.year} outside [{YEAR_MIN}, {YEAR_MAX}]")
        if len(set(self.references)) != len(self.references):
            raise ValueError("references contain duplicates")
        if self.bibcode in self.references:
            raise ValueError("record cites itself")


_REQUIRED_KEYS = (
    "bibcode",
    "title",
    "authors",
    "abstract",
    "keywords",
    "year",
    "doctype",
    "refereed",
    "collections",
    "references",
)
_OPTIONAL_KEYS = ("body", "externalCitationCount")


class Corpus:
    """Loaded records in file order, addressable by bibcode."""

    def __init__(self, records: Iterable[BibRecord] = ()):
        self._records: dict[str, BibRecord] = {}
        self.warnings: list[str] = []
        for rec in records:
            self.add(rec)

    def add(self, record: BibRecord) -> None:
        if record.bibcode in self._records:
            raise DuplicateBibcode(record.bibcode, line=0)
        self._records[record.bibcode] = record

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[BibRecord]:
        return iter(self._records.values())

    def __contains__(self, bibcode: str) -> bool:
        return bibcode in self._records

    def __getitem__(self, bibcode: str) -> BibRecord:
        return self._records[bibcode]

    def get(self, bibcode: str) -> BibRecord | None:
        return self._records.get(bibcode)

    @property
    def bibcodes(self) -> tuple[str, ...]:
        return tuple(self._records)


def _string_list(value: object, what: str) -> tuple[str, ...]:
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise ValueError(f"{what} must be a list of strings")
    return tuple(value)


def _record_from_json(doc: dict, line: int, warnings: list[str]) -> BibRecord:
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise MalformedRecord(line, f"missing keys: {', '.join(missing)}")
    unknown = [k for k in doc if k not in _REQUIRED_KEYS and k not in _OPTIONAL_KEYS]
    for key in unknown:
        message = f"line {line}: ignoring unknown key {key!r}"
        warnings.append(message)
        log.warning(message)
    try:
        doctype = Doctype(doc["doctype"])
    except ValueError:
        raise MalformedRecord(line, f"unknown doctype {doc['doctype']!r}") from None
    try:
        collections = frozenset(Collection(c) for c in doc["collections"])
    except (ValueError, TypeError):
        raise MalformedRecord(
            line, f"collections must be a subset of {[c.value for c in Collection]}"
        ) from None
    year = doc["year"]
    if not isinstance(year, int) or isinstance(year, bool):
        raise MalformedRecord(line, "year must be an integer")
    if not isinstance(doc["refereed"], bool):
        raise MalformedRecord(line, "refereed must be a boolean")
    body = doc.get("body")
    if body is not None and not isinstance(body, str):
        raise MalformedRecord(line, "body must be a string or null")
    external = doc.get("externalCitationCount")
    if external is not None and (not isinstance(external, int) or isinstance(external, bool)):
        raise MalformedRecord(line, "externalCitationCount must be an integer")
    for key in ("bibcode", "title", "abstract"):
        if not isinstance(doc[key], str):
            raise MalformedRecord(line, f"{key} must be a string")
    try:
        return BibRecord(
            bibcode=doc["bibcode"],
            title=doc["title"],
            authors=_string_list(doc["authors"], "authors"),
            abstract=doc["abstract"],
            keywords=_string_list(doc["keywords"], "keywords"),
            year=year,
            doctype=doctype,
            refereed=doc["refereed"],
            collections=collections,
            references=_string_list(doc["references"], "references"),
            body_text=body,
            external_citation_count=external,
        )
    except ValueError as exc:
        raise MalformedRecord(line, str(exc)) from None


def load_corpus(source: str | Path | IO[str] | Iterable[str]) -> Corpus:
    """Load a JSON Lines corpus. Raises MalformedRecord or DuplicateBibcode."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as handle:
            return load_corpus(handle)
    corpus = Corpus()
    for line_no, line in enumerate(source, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise MalformedRecord(line_no, "record must be a JSON object")
        record = _record_from_json(doc, line_no, corpus.warnings)
        if record.bibcode in corpus:
            raise DuplicateBibcode(record.bibcode, line_no)
        corpus.add(record)
    return corpus


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class Token:
    text: str
    position: int
    span: int = 1


_CHUNK_RE = re.compile(r"[^\W_]+(?:-[^\W_]+)*")


def tokenize(text: str) -> list[Token]:
    """Lowercased tokens split on non-alphanumerics. Hyphenated words also
    emit the joined concatenation as an alternative token anchored at the
    first part's position, spanning all parts."""
    tokens: list[Token] = []
    pos = 0
    for match in _CHUNK_RE.finditer(text):
        parts = match.group(0).split("-")
        for i, part in enumerate(parts):
            tokens.append(Token(part.lower(), pos + i))
        if len(parts) > 1:
            tokens.append(Token("".join(parts).lower(), pos, len(parts)))
        pos += len(parts)
    return tokens


_MAX_VARIANTS = 64


def phrase_parts(text: str) -> tuple[str, ...]:
    """The fully split lowercase token sequence of a phrase."""
    return tuple(
        part.lower()
        for match in _CHUNK_RE.finditer(text)
        for part in match.group(0).split("-")
    )


def phrase_variants(text: str, exact: bool = False) -> list[tuple[str, ...]]:
    """Token sequences a phrase may match as. Non-exact phrases with
    hyphenated words yield both the split and the joined spelling; exact
    phrases yield only the split form."""
    chunks = [m.group(0).split("-") for m in _CHUNK_RE.finditer(text)]
    if not chunks:
        return []
    if exact:
        return [tuple(p.lower() for chunk in chunks for p in chunk)]
    options: list[list[tuple[str, ...]]] = []
    for parts in chunks:
        forms = [tuple(p.lower() for p in parts)]
        if len(parts) > 1:
            forms.append(("".join(parts).lower(),))
        options.append(forms)
    variants: list[tuple[str, ...]] = []
    for combo in product(*options):
        variants.append(tuple(tok for form in combo for tok in form))
        if len(variants) >= _MAX_VARIANTS:
            break
    return variants


def _is_subsequence(needle: str, haystack: str) -> bool:
    it = iter(haystack)
    return all(ch in it for ch in needle)


@lru_cache(maxsize=4096)
def acronym_match(token: str, parts: tuple[str, ...]) -> bool:
    """True if ``token`` reads as an acronym of the word sequence ``parts``:
    it splits into len(parts) contiguous non-empty groups where group j
    starts with parts[j][0] and is a prefix-anchored subsequence of
    parts[j]. Every plain-initials acronym qualifies; so do compact forms
    where a word contributes a few extra letters. Each group is capped at
    half its word's length (rounded up): an acronym abbreviates every word,
    so a group that reproduces most of a word (e.g. "drak" + "e" for
    "Drake Equation") is not acronym use of it."""
    if len(parts) < 2 or len(token) < len(parts):
        return False

    def rec(i: int, j: int) -> bool:
        if j == len(parts):
            return i == len(token)
        word = parts[j]
        if i >= len(token) or not word or token[i] != word[0]:
            return False
        remaining_words = len(parts) - j - 1
        max_group = min(len(token) - i - remaining_words, (len(word) + 1) // 2)
        for size in range(1, max_group + 1):
            if size > 1 and not _is_subsequence(token[i + 1 : i + size], word[1:]):
                continue
            if rec(i + size, j + 1):
                return True
        return False

    return rec(0, 0)


# ---------------------------------------------------------------------------
# Index

PHYSICAL_FIELDS = ("title", "abstract", "keywords", "body", "author")

_FIELD_TARGETS: dict[Field, tuple[str, ...]] = {
    Field.TITLE: ("title",),
    Field.BODY: ("body",),
    Field.AUTHOR: ("author",),
    Field.KEYWORD: ("keywords",),
    Field.ABS: ("title", "abstract", "keywords"),
    Field.FULL: ("title", "abstract", "keywords", "body"),
}

_LIST_GAP = 100  # separate keyword/author entries so phrases cannot straddle

Postings = dict[str, dict[str, tuple[tuple[int, int], ...]]]


class Index:
    """Positional inverted index over a corpus, one posting map per field."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.universe: frozenset[str] = frozenset(corpus.bibcodes)
        self._postings: dict[str, Postings] = {f: {} for f in PHYSICAL_FIELDS}
        self._by_year: dict[int, set[str]] = {}
        self._by_doctype: dict[str, set[str]] = {}
        for record in corpus:
            self._add(record)

    def _add(self, record: BibRecord) -> None:
        b = record.bibcode
        self._index_text("title", b, tokenize(record.title))
        self._index_text("abstract", b, tokenize(record.abstract))
        self._index_text("keywords", b, _tokenize_list(record.keywords))
        if record.body_text is not None:
            self._index_text("body", b, tokenize(record.body_text))
        self._index_text("author", b, _tokenize_list(record.authors))
        self._by_year.setdefault(record.year, set()).add(b)
        self._by_doctype.setdefault(record.doctype.value, set()).add(b)

    def _index_text(self, fieldname: str, bibcode: str, tokens: list[Token]) -> None:
        postings = self._postings[fieldname]
        grouped: dict[str, list[tuple[int, int]]] = {}
        for tok in tokens:
            grouped.setdefault(tok.text, []).append((tok.position, tok.span))
        for text, occurrences in grouped.items():
            postings.setdefault(text, {})[bibcode] = tuple(sorted(occurrences))

    def vocabulary(self, fieldname: str) -> Iterable[str]:
        return self._postings[fieldname].keys()

    def token_docs(self, fieldname: str, token: str) -> frozenset[str]:
        return frozenset(self._postings[fieldname].get(token, ()))

    def occurrences(
        self, fieldname: str, token: str, bibcode: str
    ) -> tuple[tuple[int, int], ...]:
        return self._postings[fieldname].get(token, {}).get(bibcode, ())

    def year_docs(self, first: int, last: int) -> frozenset[str]:
        out: set[str] = set()
        for year, docs in self._by_year.items():
            if first <= year <= last:
                out |= docs
        return frozenset(out)

    def doctype_docs(self, doctype: str) -> frozenset[str]:
        return frozenset(self._by_doctype.get(doctype, ()))

    def sort_hits(self, bibcodes: Iterable[str]) -> tuple[str, ...]:
        """Newest first: year descending, then bibcode descending."""
        return tuple(
            sorted(bibcodes, key=lambda b: (self.corpus[b].year, b), reverse=True)
        )

    def phrase_starts(
        self, fieldname: str, variant: tuple[str, ...], bibcode: str, allow_alts: bool
    ) -> list[int]:
        """Start positions where the token sequence occurs contiguously.
        With allow_alts=False only span-1 occurrences chain (exact mode)."""

        def usable(occs: tuple[tuple[int, int], ...]) -> list[tuple[int, int]]:
            return [o for o in occs if allow_alts or o[1] == 1]

        first = usable(self.occurrences(fieldname, variant[0], bibcode))
        if not first:
            return []
        # start -> set of end positions reached so far
        frontier = {pos: pos + span for pos, span in first}
        for token in variant[1:]:
            occs = usable(self.occurrences(fieldname, token, bibcode))
            if not occs:
                return []
            by_pos = {pos: span for pos, span in occs}
            frontier = {
                start: end + by_pos[end]
                for start, end in frontier.items()
                if end in by_pos
            }
            if not frontier:
                return []
        return sorted(frontier)

    def phrase_docs(
        self, fieldname: str, variant: tuple[str, ...], allow_alts: bool
    ) -> frozenset[str]:
        if not variant:
            return frozenset()
        candidates = self.token_docs(fieldname, variant[0])
        for token in variant[1:]:
            candidates &= self.token_docs(fieldname, token)
            if not candidates:
                return frozenset()
        if len(variant) == 1 and allow_alts:
            return candidates
        return frozenset(
            b
            for b in candidates
            if self.phrase_starts(fieldname, variant, b, allow_alts)
        )

    def acronym_tokens(self, fieldname: str, parts: tuple[str, ...]) -> list[str]:
        if len(parts) < 2:
            return []
        head = parts[0][:1]
        return [
            tok
            for tok in self.vocabulary(fieldname)
            if tok[:1] == head and acronym_match(tok, parts)
        ]


def _tokenize_list(entries: tuple[str, ...]) -> list[Token]:
    tokens: list[Token] = []
    base = 0
    for entry in entries:
        entry_tokens = tokenize(entry)
        tokens.extend(Token(t.text, t.position + base, t.span) for t in entry_tokens)
        if entry_tokens:
            base += max(t.position + t.span for t in entry_tokens) + _LIST_GAP
    return tokens


def build_index(corpus: Corpus) -> Index:
    return Index(corpus)


# ---------------------------------------------------------------------------
# Evaluation


class LibraryResolver(Protocol):
    def members(self, key: str) -> frozenset[str]:
        """Member bibcodes of the library at ``key``; UnknownLibraryKey if absent."""

    def bibgroup(self, name: str) -> frozenset[str]:
        """Union of member sets of libraries named ``name``; empty if none."""


class DictResolver:
    """Resolver over plain mappings, mainly for tests and scripts."""

    def __init__(
        self,
        members: dict[str, Iterable[str]] | None = None,
        bibgroups: dict[str, Iterable[str]] | None = None,
    ):
        self._members = {k: frozenset(v) for k, v in (members or {}).items()}
        self._bibgroups = {k: frozenset(v) for k, v in (bibgroups or {}).items()}

    def members(self, key: str) -> frozenset[str]:
        if key not in self._members:
            raise UnknownLibraryKey(key)
        return self._members[key]

    def bibgroup(self, name: str) -> frozenset[str]:
        return self._bibgroups.get(name, frozenset())


EMPTY_RESOLVER = DictResolver()


@dataclass(frozen=True)
class MatchExplanation:
    field: str
    term: str
    position: int
    expanded_from: str | None = None


@dataclass(frozen=True)
class SearchResult:
    hits: tuple[str, ...]
    total: int
    explanations: dict[str, tuple[MatchExplanation, ...]] | None = None


def evaluate(
    query: QueryNode,
    index: Index,
    resolver: LibraryResolver | None = None,
    explain: bool = False,
) -> SearchResult:
    """Evaluate a query against the index. The query is normalized first;
    results come back newest-first (year desc, bibcode desc). Set semantics
    throughout: NOT complements within the corpus, docs(...) resolves to
    library members intersected with the corpus."""
    resolver = resolver if resolver is not None else EMPTY_RESOLVER
    node = normalize(query)
    hits = index.sort_hits(_eval(node, index, resolver))
    explanations = None
    if explain:
        explanations = {
            b: tuple(_explain_walk(node, b, index, resolver)) for b in hits
        }
    return SearchResult(hits=hits, total=len(hits), explanations=explanations)


def _eval(node: QueryNode, index: Index, resolver: LibraryResolver) -> frozenset[str]:
    if isinstance(node, And):
        result = _eval(node.children[0], index, resolver)
        for child in node.children[1:]:
            result &= _eval(child, index, resolver)
        return result
    if isinstance(node, Or):
        result = _eval(node.children[0], index, resolver)
        for child in node.children[1:]:
            result |= _eval(child, index, resolver)
        return result
    if isinstance(node, Not):
        return index.universe - _eval(node.child, index, resolver)
    if isinstance(node, DocsRef):
        return resolver.members(node.library_key) & index.universe
    if isinstance(node, YearRange):
        return index.year_docs(node.first, node.last)
    if isinstance(node, FieldScope):
        return _eval_scope(node.field, node.child, index, resolver)
    if isinstance(node, (Word, Phrase)):  # pragma: no cover - normalize scopes terms
        return _eval_scope(Field.FULL, node, index, resolver)
    raise TypeError(f"not a query node: {node!r}")


def _term_text(term: QueryNode) -> tuple[str, bool]:
    if isinstance(term, Phrase):
        return term.text, term.exact
    if isinstance(term, Word):
        return term.text, False
    raise TypeError(f"field scope holds a non-term after normalize: {term!r}")


def _eval_scope(
    fieldname: Field, term: QueryNode, index: Index, resolver: LibraryResolver
) -> frozenset[str]:
    text, exact = _term_text(term)
    if fieldname is Field.DOCTYPE:
        return index.doctype_docs(text.lower())
    if fieldname is Field.BIBGROUP:
        return resolver.bibgroup(text) & index.universe
    if fieldname is Field.YEAR:  # pragma: no cover - parser emits YearRange
        raise TypeError("year scopes must be YearRange nodes")
    targets = _FIELD_TARGETS[fieldname]
    docs: set[str] = set()
    variants = phrase_variants(text, exact)
    for target in targets:
        for variant in variants:
            docs |= index.phrase_docs(target, variant, allow_alts=not exact)
    if not exact:
        parts = phrase_parts(text)
        if len(parts) >= 2:
            for target in targets:
                for token in index.acronym_tokens(target, parts):
                    docs |= index.token_docs(target, token)
    return frozenset(docs)


def _explain_walk(
    node: QueryNode,
    bibcode: str,
    index: Index,
    resolver: LibraryResolver,
    positive: bool = True,
) -> Iterator[MatchExplanation]:
    """Yield match evidence for positive-polarity text leaves."""
    if isinstance(node, Not):
        yield from _explain_walk(node.child, bibcode, index, resolver, not positive)
        return
    if isinstance(node, (And, Or)):
        for child in node.children:
            yield from _explain_walk(child, bibcode, index, resolver, positive)
        return
    if not positive or not isinstance(node, FieldScope):
        return
    text, exact = _term_text(node.child)
    if node.field is Field.DOCTYPE:
        if bibcode in index.doctype_docs(text.lower()):
            yield MatchExplanation("doctype", text.lower(), 0)
        return
    if node.field is Field.BIBGROUP:
        if bibcode in resolver.bibgroup(text):
            yield MatchExplanation("bibgroup", text, 0)
        return
    for target in _FIELD_TARGETS[node.field]:
        for variant in phrase_variants(text, exact):
            starts = index.phrase_starts(target, variant, bibcode, allow_alts=not exact)
            if starts:
                yield MatchExplanation(target, " ".join(variant), starts[0])
        if not exact:
            parts = phrase_parts(text)
            if len(parts) >= 2:
                for token in index.acronym_tokens(target, parts):
                    occs = index.occurrences(target, token, bibcode)
                    if occs:
                        yield MatchExplanation(
                            target, token, occs[0][0], expanded_from=text
                        )


def explain_match(
    bibcode: str,
    query: QueryNode,
    index: Index,
    resolver: LibraryResolver | None = None,
) -> tuple[MatchExplanation, ...]:
    """Evidence for why ``bibcode`` matched ``query``. NotAHit if it did not."""
    resolver = resolver if resolver is not None else EMPTY_RESOLVER
    node = normalize(query)
    if bibcode not in _eval(node, index, resolver):
        raise NotAHit(bibcode)
    return tuple(_explain_walk(node, bibcode, index, resolver))
