"""HTTP layer over the entry store for the manual-review UI.

Three endpoints: GET /api/review/next leases a triage-ordered batch,
POST /api/review/verdict finalizes one entry, GET /api/review/stats
reports queue counts.  Errors carry a machine-readable reason: 404
not_found, 409 conflict, 400 invalid field edits.  A static directory
can be mounted at / so the same process serves the UI bundle.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .entries import EntryError, entry_to_record
from .store import Conflict, EntryStore, NotFound

MAX_BATCH = 100


class VerdictRequest(BaseModel):
    entry_id: str
    verdict: str  # accept | fix | delete
    fields: Optional[dict] = None
    actor: str = "reviewer"


def _error(status_code: int, reason: str, detail: str) -> JSONResponse:
    return JSONResponse({"reason": reason, "detail": detail}, status_code=status_code)


def create_app(store: EntryStore, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="review API")

    @app.get("/api/review/next")
    def review_next(batch: int = 10, task: str | None = None):
        if not 1 <= batch <= MAX_BATCH:
            return _error(400, "bad_batch", f"batch must be 1..{MAX_BATCH}")
        entries = store.review_next(batch, task=task)
        return {"entries": [entry_to_record(entry) for entry in entries]}

    @app.post("/api/review/verdict")
    def review_verdict(body: VerdictRequest):
        try:
            entry = store.apply_verdict(
                body.entry_id, body.verdict, fields=body.fields, actor=body.actor
            )
        except NotFound as exc:
            return _error(404, "not_found", str(exc))
        except Conflict as exc:
            return _error(409, "conflict", str(exc))
        except (EntryError, ValueError) as exc:
            return _error(400, "invalid", str(exc))
        return {"entry": entry_to_record(entry)}

    @app.get("/api/review/stats")
    def review_stats():
        return store.counts()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
