"""bibcurate: search, curate, and report on a bibliographic corpus.

The toolkit keeps a curated bibliography converged against a boolean
search query: parse and evaluate queries (querylang, corpusindex), manage
membership libraries with an audit trail (librarystore), classify results
and iterate to a fixed point (curation), compute citation metrics
(metrics), mirror libraries to a remote service (remotesync), and drive it
all from a CLI (cli) or a local HTTP service plus web UI (service).
"""

from .corpusindex import (
    BibRecord,
    Corpus,
    Doctype,
    Index,
    SearchResult,
    evaluate,
    load_corpus,
)
from .curation import Decision, DecisionLog, RubricTag, Verdict, Workflow
from .librarystore import Catalog, generate_key, restore, snapshot
from .metrics import citation_table, render_report, year_histogram
from .presets import load_preset, preset_names
from .querylang import QueryError, QueryNode, normalize, parse, serialize, validate

__version__ = "0.1.0"

__all__ = [
    "BibRecord",
    "Catalog",
    "Corpus",
    "Decision",
    "DecisionLog",
    "Doctype",
    "Index",
    "QueryError",
    "QueryNode",
    "RubricTag",
    "SearchResult",
    "Verdict",
    "Workflow",
    "__version__",
    "citation_table",
    "evaluate",
    "generate_key",
    "load_corpus",
    "load_preset",
    "normalize",
    "parse",
    "preset_names",
    "render_report",
    "restore",
    "serialize",
    "snapshot",
    "validate",
    "year_histogram",
]
