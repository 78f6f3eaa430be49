"""Local HTTP API for triage: queue, decisions, search, and reports.

A thin FastAPI layer over the curation workflow. All state lives in the
workflow and catalog; the service adds a session sequence number for
optimistic concurrency (two curators can share one instance; whoever loses
the race gets 409 and refreshes) and durable persistence of every decision
before the response goes out.

The server is a local tool: it binds to localhost, has no authentication,
and allows cross-origin requests only from the dev UI origin.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .corpusindex import BibRecord, NotAHit, explain_match
from .curation import (
    COMMENSAL_CHECKLIST,
    CurationError,
    Decision,
    DecisionLog,
    NothingToUndo,
    RubricTag,
    Verdict,
    Workflow,
    render_digest,
    suggest_tags,
)
from .metrics import citation_table, render_report, year_histogram
from .querylang import QueryError, QueryNode, parse, serialize, validate

log = logging.getLogger(__name__)

UI_ORIGIN = "http://localhost:5173"
_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class TriageSession:
    """One service instance's mutable state around a workflow."""

    def __init__(
        self,
        workflow: Workflow,
        query: QueryNode,
        *,
        log_path: str | os.PathLike | None = None,
    ):
        workflow.require_exclusions(query)
        self.workflow = workflow
        self.query = query
        self.log_path = os.fspath(log_path) if log_path is not None else None
        self.lock = threading.Lock()
        self.seq = len(workflow.log.entries)
        self.decided_this_session = 0

    # -- state ----------------------------------------------------------------

    def queue(self) -> list[str]:
        return list(self.workflow.search(self.query).hits)

    def bump(self) -> int:
        self.seq += 1
        self.decided_this_session += 1
        return self.seq


def _persist_tail(session: TriageSession) -> None:
    """Append log entries not yet on disk, fsynced before returning, so a
    decision survives a crash that happens right after the response."""
    if session.log_path is None:
        return
    on_disk = 0
    if os.path.exists(session.log_path):
        with open(session.log_path, "r", encoding="utf-8") as fh:
            on_disk = sum(1 for line in fh if line.strip())
    entries = session.workflow.log.entries[on_disk:]
    if not entries:
        return
    with open(session.log_path, "a", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(DecisionLog.entry_to_json(entry), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _record_payload(record: BibRecord) -> dict:
    payload = {
        "bibcode": record.bibcode,
        "title": record.title,
        "authors": list(record.authors),
        "abstract": record.abstract,
        "keywords": list(record.keywords),
        "year": record.year,
        "doctype": record.doctype.value,
        "refereed": record.refereed,
        "collections": sorted(c.value for c in record.collections),
        "references": list(record.references),
    }
    if record.body_text is not None:
        payload["body"] = record.body_text
    if record.external_citation_count is not None:
        payload["externalCitationCount"] = record.external_citation_count
    return payload


def _card(session: TriageSession, bibcode: str) -> dict:
    record = session.workflow.corpus[bibcode]
    try:
        explanations = explain_match(
            bibcode, session.query, session.workflow.index, session.workflow.resolver
        )
    except NotAHit:
        explanations = ()
    hints = suggest_tags(record, explanations)
    card = {
        "bibcode": record.bibcode,
        "title": record.title,
        "authors": list(record.authors),
        "year": record.year,
        "doctype": record.doctype.value,
        "refereed": record.refereed,
        "abstract": record.abstract,
        "keywords": list(record.keywords),
        "highlights": [
            {
                "field": e.field,
                "term": e.term,
                "position": e.position,
                "expandedFrom": e.expanded_from,
            }
            for e in explanations
        ],
        "hints": [
            {"tag": h.tag.value, "score": h.score, "cue": h.cue} for h in hints
        ],
    }
    if any(h.tag is RubricTag.COMMENSAL for h in hints):
        card["checklist"] = list(COMMENSAL_CHECKLIST)
    return card


class DecisionBody(BaseModel):
    bibcode: str
    verdict: str
    tags: list[str] = []
    note: str = ""
    expectedSeq: int | None = None


class UndoBody(BaseModel):
    bibcode: str
    expectedSeq: int | None = None


class SearchBody(BaseModel):
    q: str
    limit: int | None = None


def _parse_decision(body: DecisionBody) -> tuple[Verdict, frozenset[RubricTag]]:
    try:
        verdict = Verdict(body.verdict)
    except ValueError:
        raise ServiceError(400, f"unknown verdict {body.verdict!r}") from None
    try:
        tags = frozenset(RubricTag(t) for t in body.tags)
    except ValueError as exc:
        raise ServiceError(400, f"unknown tag: {exc}") from None
    return verdict, tags


def create_app(session: TriageSession) -> FastAPI:
    app = FastAPI(title="bibcurate service")
    app.state.session = session
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[UI_ORIGIN],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.message})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        # the HTTP contract promises 400 for malformed bodies, not 422
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def _state_payload() -> dict:
        queue = session.queue()
        catalog = session.workflow.catalog
        return {
            "query": serialize(session.query),
            "seq": session.seq,
            "pending": len(queue),
            "decidedThisSession": session.decided_this_session,
            "converged": not queue,
            "counts": {
                "main": len(catalog.members(session.workflow.main_key)),
                "excluded": len(catalog.members(session.workflow.excluded_key)),
            },
        }

    @app.get("/state")
    def get_state() -> dict:
        with session.lock:
            return _state_payload()

    @app.get("/queue")
    def get_queue(limit: int = 10) -> dict:
        if limit < 1:
            raise ServiceError(400, "limit must be positive")
        with session.lock:
            queue = session.queue()
            cards = [_card(session, b) for b in queue[:limit]]
            return {
                "seq": session.seq,
                "pending": len(queue),
                "cards": cards,
            }

    @app.post("/decision")
    def post_decision(body: DecisionBody) -> dict:
        verdict, tags = _parse_decision(body)
        with session.lock:
            if body.expectedSeq is not None and body.expectedSeq != session.seq:
                raise ServiceError(
                    409,
                    f"stale sequence: expected {body.expectedSeq}, "
                    f"current {session.seq}",
                )
            if body.bibcode not in session.workflow.corpus:
                raise ServiceError(404, f"unknown bibcode {body.bibcode}")
            try:
                decision = Decision(
                    bibcode=body.bibcode,
                    verdict=verdict,
                    reasons=tags,
                    note=body.note,
                    curator="service",
                )
                session.workflow.apply_decision(decision)
            except CurationError as exc:
                raise ServiceError(400, str(exc)) from None
            _persist_tail(session)
            seq = session.bump()
            return {"seq": seq, "bibcode": body.bibcode, "verdict": verdict.value}

    @app.post("/undo")
    def post_undo(body: UndoBody) -> dict:
        with session.lock:
            if body.expectedSeq is not None and body.expectedSeq != session.seq:
                raise ServiceError(
                    409,
                    f"stale sequence: expected {body.expectedSeq}, "
                    f"current {session.seq}",
                )
            try:
                undone = session.workflow.undo(body.bibcode)
            except NothingToUndo as exc:
                raise ServiceError(404, str(exc)) from None
            _persist_tail(session)
            seq = session.bump()
            return {
                "seq": seq,
                "bibcode": body.bibcode,
                "undoneVerdict": undone.verdict.value,
            }

    @app.get("/stats")
    def get_stats() -> dict:
        with session.lock:
            members = session.workflow.catalog.members(session.workflow.main_key)
            corpus = session.workflow.corpus
            report = citation_table(members, corpus)
            histogram = year_histogram(members, corpus)
            return {
                "table": render_report(report, "structured"),
                "histogram": {
                    "counts": {str(y): n for y, n in histogram.counts.items()},
                    "missingMembers": list(histogram.missing_members),
                },
            }

    @app.post("/search")
    def post_search(body: SearchBody) -> dict:
        try:
            node = parse(body.q)
        except QueryError as exc:
            raise ServiceError(400, f"bad query: {exc}") from None
        issues = validate(node)
        if any(i.severity == "error" for i in issues):
            raise ServiceError(
                400, "; ".join(i.message for i in issues if i.severity == "error")
            )
        with session.lock:
            result = session.workflow.search(node)
        hits = list(result.hits)
        if body.limit is not None:
            hits = hits[: max(0, body.limit)]
        return {
            "query": serialize(node),
            "total": result.total,
            "hits": hits,
            "warnings": [i.message for i in issues],
        }

    @app.get("/record/{bibcode}")
    def get_record(bibcode: str) -> dict:
        record = session.workflow.corpus.get(bibcode)
        if record is None:
            raise ServiceError(404, f"unknown bibcode {bibcode}")
        return _record_payload(record)

    @app.get("/digest/{month}")
    def get_digest(month: str) -> PlainTextResponse:
        if not _MONTH_RE.match(month):
            raise ServiceError(400, f"month must be YYYY-MM, got {month!r}")
        with session.lock:
            text = render_digest(session.workflow, month)
        return PlainTextResponse(text, media_type="text/markdown")

    return app


def run(session: TriageSession, host: str = "127.0.0.1", port: int = 8642) -> None:
    """Serve until interrupted. Import of uvicorn is deferred so tests can
    exercise the app object without an ASGI server."""
    import uvicorn

    uvicorn.run(create_app(session), host=host, port=port, log_level="info")
