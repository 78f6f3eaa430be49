"""Boolean query language for bibliographic search strings.

Grammar, loosest binding first::

    query    := or-expr (NOT or-expr)*           difference: A NOT B = A minus B
    or-expr  := and-expr (OR and-expr)*
    and-expr := unit (AND unit | unit)*           bare juxtaposition means AND
    unit     := NOT unit
              | '(' query ')'
              | ['='] FIELD ':' (term | '(' query ')')
              | 'docs(library/' KEY ')'
              | term
    term     := '"' text '"' | WORD | NNNN-NNNN

Binary NOT binds loosest so that trailing library exclusions subtract from
the whole query: ``a OR b NOT docs(library/K)`` means (a OR b) minus K.
AND, OR and NOT are operators only in upper case; ``not`` is an ordinary
word. A leading ``=`` on a field scope marks every phrase inside it exact,
which disables acronym expansion and hyphen-variant matching downstream.

``parse`` builds an AST of the node types below, ``normalize`` rewrites it
into a canonical form (flattened booleans, no double negation, every text
term under exactly one field scope), and ``serialize`` emits canonical text
such that ``parse(serialize(n)) == normalize(n)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Union


class Field(str, Enum):
    """Searchable fields. abs and full are pseudo-fields resolved at evaluation."""

    ABS = "abs"
    BODY = "body"
    TITLE = "title"
    AUTHOR = "author"
    KEYWORD = "keyword"
    BIBGROUP = "bibgroup"
    DOCTYPE = "doctype"
    YEAR = "year"
    FULL = "full"


class QueryError(ValueError):
    """Base class for query parsing and construction problems."""


class EmptyQuery(QueryError):
    pass


class UnbalancedParen(QueryError):
    pass


class UnknownField(QueryError):
    pass


class EmptyPhrase(QueryError):
    pass


class MalformedDocsRef(QueryError):
    pass


class DanglingOperator(QueryError):
    pass


class UnterminatedPhrase(QueryError):
    pass


class MalformedYear(QueryError):
    pass


YEAR_MIN = 1000
YEAR_MAX = 2999

_RESERVED = frozenset({"AND", "OR", "NOT"})
# Characters that terminate a bare word at lexing time.
_SPECIAL = frozenset({"(", ")", '"', ":", "="})
_YEAR_RE = re.compile(r"^\d{4}$")
_YEAR_RANGE_RE = re.compile(r"^(\d{4})-(\d{4})$")
_DOCS_KEY_RE = re.compile(r"^[A-Za-z0-9_-]+$")


@dataclass(frozen=True)
class Phrase:
    """Quoted multi-token term. exact suppresses all variant matching."""

    text: str
    exact: bool = False

    def __post_init__(self) -> None:
        if not self.text:
            raise EmptyPhrase("phrase text must be non-empty")
        if '"' in self.text:
            raise QueryError("phrase text cannot contain a double quote")


@dataclass(frozen=True)
class Word:
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise QueryError("word text must be non-empty")


@dataclass(frozen=True)
class FieldScope:
    field: Field
    child: "QueryNode"

    def __post_init__(self) -> None:
        # year terms parse straight to YearRange nodes; a year scope has
        # no surface syntax and would not survive a serialize round trip
        if self.field is Field.YEAR:
            raise QueryError("year terms are YearRange nodes, not scopes")


@dataclass(frozen=True)
class DocsRef:
    """Reference to a stored library by key; evaluates to its member set."""

    library_key: str

    def __post_init__(self) -> None:
        if not _DOCS_KEY_RE.match(self.library_key):
            raise MalformedDocsRef(f"bad library key: {self.library_key!r}")


@dataclass(frozen=True)
class YearRange:
    """Inclusive publication-year filter; a single year is first == last."""

    first: int
    last: int

    def __post_init__(self) -> None:
        if not (YEAR_MIN <= self.first <= self.last <= YEAR_MAX):
            raise MalformedYear(
                f"year range {self.first}-{self.last} outside "
                f"[{YEAR_MIN}, {YEAR_MAX}] or reversed"
            )


@dataclass(frozen=True)
class And:
    children: tuple["QueryNode", ...]

    def __post_init__(self) -> None:
        if len(self.children) < 2:
            raise QueryError("And requires at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["QueryNode", ...]

    def __post_init__(self) -> None:
        if len(self.children) < 2:
            raise QueryError("Or requires at least two children")


@dataclass(frozen=True)
class Not:
    child: "QueryNode"


QueryNode = Union[Phrase, Word, FieldScope, DocsRef, YearRange, And, Or, Not]


def and_(*children: QueryNode) -> QueryNode:
    return children[0] if len(children) == 1 else And(tuple(children))


def or_(*children: QueryNode) -> QueryNode:
    return children[0] if len(children) == 1 else Or(tuple(children))


# ---------------------------------------------------------------------------
# Lexer


class _T(Enum):
    LPAREN = "("
    RPAREN = ")"
    WORD = "word"
    PHRASE = "phrase"
    FIELD = "field"
    EXACT_FIELD = "=field"
    DOCSREF = "docs"
    AND = "AND"
    OR = "OR"
    NOT = "NOT"


@dataclass(frozen=True)
class _Token:
    kind: _T
    value: str = ""


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c == "(":
            tokens.append(_Token(_T.LPAREN))
            i += 1
            continue
        if c == ")":
            tokens.append(_Token(_T.RPAREN))
            i += 1
            continue
        if c == '"':
            end = text.find('"', i + 1)
            if end < 0:
                raise UnterminatedPhrase(f"unterminated phrase starting at {i}")
            tokens.append(_Token(_T.PHRASE, text[i + 1 : end]))
            i = end + 1
            continue
        if c == "=":
            word, j = _read_word(text, i + 1)
            if word and j < n and text[j] == ":":
                tokens.append(_Token(_T.EXACT_FIELD, _field_name(word)))
                i = j + 1
                continue
            raise QueryError(f"'=' must prefix a field scope at {i}")
        if c == ":":
            raise UnknownField(f"':' without a field name at {i}")
        word, j = _read_word(text, i)
        if not word:  # pragma: no cover - every non-special char is a word char
            raise QueryError(f"unexpected character {c!r} at {i}")
        if j < n and text[j] == ":":
            tokens.append(_Token(_T.FIELD, _field_name(word)))
            i = j + 1
            continue
        if word == "docs" and j < n and text[j] == "(":
            end = text.find(")", j + 1)
            if end < 0:
                raise MalformedDocsRef("docs(...) missing closing parenthesis")
            inner = text[j + 1 : end]
            if not inner.startswith("library/"):
                raise MalformedDocsRef(f"docs ref must name library/<key>: {inner!r}")
            key = inner[len("library/") :]
            if not _DOCS_KEY_RE.match(key):
                raise MalformedDocsRef(f"bad library key in docs ref: {key!r}")
            tokens.append(_Token(_T.DOCSREF, key))
            i = end + 1
            continue
        if word in _RESERVED:
            tokens.append(_Token(_T[word]))
        else:
            tokens.append(_Token(_T.WORD, word))
        i = j
    return tokens


def _read_word(text: str, start: int) -> tuple[str, int]:
    j = start
    while j < len(text) and not text[j].isspace() and text[j] not in _SPECIAL:
        j += 1
    return text[start:j], j


def _field_name(word: str) -> str:
    name = word.lower()
    try:
        Field(name)
    except ValueError:
        raise UnknownField(f"unknown field: {word!r}") from None
    return name


# ---------------------------------------------------------------------------
# Parser

_UNIT_STARTERS = frozenset(
    {_T.LPAREN, _T.WORD, _T.PHRASE, _T.FIELD, _T.EXACT_FIELD, _T.DOCSREF, _T.NOT}
)


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> QueryNode:
        node = self.parse_query()
        leftover = self.peek()
        if leftover is not None:
            if leftover.kind is _T.RPAREN:
                raise UnbalancedParen("unmatched ')'")
            raise QueryError(f"unexpected trailing input: {leftover.kind.value}")
        return node

    def parse_query(self) -> QueryNode:
        items = [self.parse_or()]
        while (tok := self.peek()) is not None and tok.kind is _T.NOT:
            self.take()
            items.append(Not(self.parse_or()))
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_or(self) -> QueryNode:
        items = [self.parse_and()]
        while (tok := self.peek()) is not None and tok.kind is _T.OR:
            self.take()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_and(self) -> QueryNode:
        items = [self.parse_unit()]
        while (tok := self.peek()) is not None:
            if tok.kind is _T.AND:
                self.take()
                items.append(self.parse_unit())
            elif tok.kind in _UNIT_STARTERS and tok.kind is not _T.NOT:
                # Juxtaposition. A bare NOT here belongs to the difference
                # level, so parse_query can turn "A NOT B" into A minus B.
                items.append(self.parse_unit())
            else:
                break
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_unit(self) -> QueryNode:
        tok = self.peek()
        if tok is None:
            raise DanglingOperator("expected a term, found end of query")
        if tok.kind is _T.NOT:
            self.take()
            return Not(self.parse_unit())
        if tok.kind is _T.LPAREN:
            self.take()
            node = self.parse_query()
            closing = self.peek()
            if closing is None or closing.kind is not _T.RPAREN:
                raise UnbalancedParen("missing ')'")
            self.take()
            return node
        if tok.kind in (_T.FIELD, _T.EXACT_FIELD):
            self.take()
            return self.parse_field_body(Field(tok.value), tok.kind is _T.EXACT_FIELD)
        if tok.kind is _T.DOCSREF:
            self.take()
            return DocsRef(tok.value)
        if tok.kind is _T.WORD:
            self.take()
            return self.term_from_word(tok.value)
        if tok.kind is _T.PHRASE:
            self.take()
            if not tok.value:
                raise EmptyPhrase('phrase "" is empty')
            return Phrase(tok.value)
        raise DanglingOperator(f"expected a term, got {tok.kind.value!r}")

    def parse_field_body(self, field: Field, exact: bool) -> QueryNode:
        tok = self.peek()
        if tok is None:
            raise DanglingOperator(f"field {field.value}: has no term")
        if tok.kind is _T.LPAREN:
            self.take()
            node = (
                self.parse_year_group() if field is Field.YEAR else self.parse_query()
            )
            closing = self.peek()
            if closing is None or closing.kind is not _T.RPAREN:
                raise UnbalancedParen("missing ')'")
            self.take()
        elif field is Field.YEAR:
            node = self.parse_year_term()
        elif tok.kind is _T.WORD:
            self.take()
            node = self.term_from_word(tok.value)
        elif tok.kind is _T.PHRASE:
            self.take()
            if not tok.value:
                raise EmptyPhrase('phrase "" is empty')
            node = Phrase(tok.value)
        elif tok.kind is _T.DOCSREF:
            self.take()
            node = DocsRef(tok.value)
        else:
            raise DanglingOperator(f"field {field.value}: has no term")
        if exact:
            node = _set_exact(node)
        if field is Field.YEAR:
            # YearRange nodes are self-describing; no scope wrapper needed.
            return node
        return FieldScope(field, node)

    def parse_year_group(self) -> QueryNode:
        """Boolean combination of year terms inside ``year:( ... )``."""
        items = [self.parse_year_and()]
        while (tok := self.peek()) is not None and tok.kind is _T.OR:
            self.take()
            items.append(self.parse_year_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def parse_year_and(self) -> QueryNode:
        items = [self.parse_year_operand()]
        while (tok := self.peek()) is not None and tok.kind is _T.AND:
            self.take()
            items.append(self.parse_year_operand())
        return items[0] if len(items) == 1 else And(tuple(items))

    def parse_year_operand(self) -> QueryNode:
        tok = self.peek()
        if tok is not None and tok.kind is _T.LPAREN:
            self.take()
            node = self.parse_year_group()
            closing = self.peek()
            if closing is None or closing.kind is not _T.RPAREN:
                raise UnbalancedParen("missing ')'")
            self.take()
            return node
        return self.parse_year_term()

    def parse_year_term(self) -> YearRange:
        tok = self.peek()
        if tok is None or tok.kind is not _T.WORD:
            raise MalformedYear("year: expects NNNN or NNNN-NNNN")
        self.take()
        if _YEAR_RE.match(tok.value):
            year = int(tok.value)
            return YearRange(year, year)
        m = _YEAR_RANGE_RE.match(tok.value)
        if m:
            return YearRange(int(m.group(1)), int(m.group(2)))
        raise MalformedYear(f"bad year form: {tok.value!r}")

    def term_from_word(self, word: str) -> QueryNode:
        m = _YEAR_RANGE_RE.match(word)
        if m:
            first, last = int(m.group(1)), int(m.group(2))
            if YEAR_MIN <= first <= last <= YEAR_MAX:
                return YearRange(first, last)
        return Word(word)


def _set_exact(node: QueryNode) -> QueryNode:
    """Mark every phrase in the subtree exact (the '=' scope prefix)."""
    if isinstance(node, Phrase):
        return Phrase(node.text, exact=True)
    if isinstance(node, Not):
        return Not(_set_exact(node.child))
    if isinstance(node, And):
        return And(tuple(_set_exact(c) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(_set_exact(c) for c in node.children))
    if isinstance(node, FieldScope):
        return FieldScope(node.field, _set_exact(node.child))
    return node


def parse(text: str) -> QueryNode:
    """Parse query text into an AST. Raises QueryError subclasses."""
    if not text or not text.strip():
        raise EmptyQuery("query is empty")
    return _Parser(_lex(text)).parse()


# ---------------------------------------------------------------------------
# Normalization

_WORD_OK_RE = re.compile(r"^[^\s()=:\"]+$")


def _word_survives(text: str) -> bool:
    """True if the text lexes back to a single plain word token."""
    if text in _RESERVED:
        return False
    if not _WORD_OK_RE.match(text):
        return False
    m = _YEAR_RANGE_RE.match(text)
    if m and YEAR_MIN <= int(m.group(1)) <= int(m.group(2)) <= YEAR_MAX:
        return False
    return True


def normalize(node: QueryNode) -> QueryNode:
    """Canonical form: booleans flattened, no double negation, every Word
    and Phrase under exactly one FieldScope (unscoped terms get ``full``),
    field scopes distributed over boolean children, inner scope winning.
    Words that cannot round-trip through the lexer become phrases.
    Idempotent: normalize(normalize(n)) == normalize(n).
    """
    return _norm(node, None)


def _norm(node: QueryNode, scope: Field | None) -> QueryNode:
    if isinstance(node, Word):
        term: QueryNode = node if _word_survives(node.text) else Phrase(node.text)
        return FieldScope(scope or Field.FULL, term)
    if isinstance(node, Phrase):
        return FieldScope(scope or Field.FULL, node)
    if isinstance(node, (DocsRef, YearRange)):
        return node
    if isinstance(node, FieldScope):
        return _norm(node.child, node.field)
    if isinstance(node, Not):
        child = _norm(node.child, scope)
        if isinstance(child, Not):
            return child.child
        return Not(child)
    if isinstance(node, (And, Or)):
        kind = type(node)
        flat: list[QueryNode] = []
        for child in node.children:
            c = _norm(child, scope)
            if isinstance(c, kind):
                flat.extend(c.children)
            else:
                flat.append(c)
        if len(flat) == 1:
            return flat[0]
        return kind(tuple(flat))
    raise TypeError(f"not a query node: {node!r}")


# ---------------------------------------------------------------------------
# Serialization


def serialize(node: QueryNode) -> str:
    """Canonical text for a query. parse(serialize(n)) == normalize(n)."""
    return _emit_query(normalize(node))


def _emit_query(node: QueryNode) -> str:
    if isinstance(node, Or):
        return " OR ".join(_emit_or_operand(c) for c in node.children)
    if isinstance(node, And):
        return _emit_and(node)
    if isinstance(node, Not):
        return "NOT " + _emit_unit(node.child)
    return _emit_leaf(node)


def _emit_or_operand(node: QueryNode) -> str:
    if isinstance(node, And):
        return _emit_and(node)
    if isinstance(node, Not):
        return "NOT " + _emit_unit(node.child)
    return _emit_leaf(node)


def _emit_and(node: And) -> str:
    parts = []
    for child in node.children:
        if isinstance(child, Not):
            parts.append("NOT " + _emit_unit(child.child))
        else:
            parts.append(_emit_unit(child))
    return " AND ".join(parts)


def _emit_unit(node: QueryNode) -> str:
    if isinstance(node, (And, Or)):
        return "(" + _emit_query(node) + ")"
    if isinstance(node, Not):
        return "NOT " + _emit_unit(node.child)
    return _emit_leaf(node)


def _emit_leaf(node: QueryNode) -> str:
    if isinstance(node, FieldScope):
        child = node.child
        if isinstance(child, Word):
            return f"{node.field.value}:{child.text}"
        if isinstance(child, Phrase):
            prefix = "=" if child.exact else ""
            return f'{prefix}{node.field.value}:"{child.text}"'
        # Only reachable on hand-built, non-normalized scopes.
        return f"{node.field.value}:({_emit_query(child)})"
    if isinstance(node, DocsRef):
        return f"docs(library/{node.library_key})"
    if isinstance(node, YearRange):
        if node.first == node.last:
            return f"year:{node.first}"
        return f"year:{node.first}-{node.last}"
    if isinstance(node, Word):
        return node.text
    if isinstance(node, Phrase):
        return f'"{node.text}"'
    raise TypeError(f"not a query node: {node!r}")


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Issue:
    code: str
    severity: str  # "error" or "warning"
    message: str


def validate(node: QueryNode) -> list[Issue]:
    """Structural lint of an AST. Returns issues; an empty list means clean."""
    issues: list[Issue] = []
    if isinstance(node, Not):
        issues.append(
            Issue(
                "ComplementWarning",
                "warning",
                "bare NOT at the root selects the complement of the corpus",
            )
        )
    _validate_walk(node, None, issues)
    return issues


def _validate_walk(
    node: QueryNode, scope: Field | None, issues: list[Issue]
) -> None:
    if isinstance(node, DocsRef):
        if scope is not None:
            issues.append(
                Issue(
                    "DocsRefInsideFieldScope",
                    "error",
                    f"docs(library/{node.library_key}) inside {scope.value}: "
                    "scope; library refs are not field-searchable",
                )
            )
        return
    if isinstance(node, YearRange):
        if scope is not None and scope is not Field.YEAR:
            issues.append(
                Issue(
                    "YearUnderNonYearField",
                    "warning",
                    f"year range {node.first}-{node.last} under {scope.value}: "
                    "scope; it filters by record year regardless",
                )
            )
        return
    if isinstance(node, FieldScope):
        _validate_walk(node.child, node.field, issues)
        return
    if isinstance(node, Not):
        _validate_walk(node.child, scope, issues)
        return
    if isinstance(node, (And, Or)):
        for child in node.children:
            _validate_walk(child, scope, issues)
