"""Persistent entry store backing the manual-review workflow.

SQLite in one file: entries keyed by id plus an append-only audit log,
so verdicts are atomic and the queue survives restarts.  Every status
change appends exactly one audit record; inserts and judge scores are
not status changes and do not audit.

Review leasing: review_next hands out pending entries worst-score
first and leases each for a fixed window, so two reviewers polling
concurrently never see the same entry.  Verdicts clear the lease.

Edited entries keep their original id (the content hash no longer
matches by design); the manual_fix status reason marks them so loads
skip the id check even after a reopen or re-accept.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
from pathlib import Path
from typing import Callable, Iterable

from .entries import InstructionEntry, entry_from_record, entry_to_record

DEFAULT_LEASE_S = 600.0

FIXABLE_FIELDS = ("question", "options", "answer", "source", "summary")
FINAL_STATUSES = ("accepted", "fixed", "deleted")
VERDICTS = ("accept", "fix", "delete")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS entries (
    id TEXT PRIMARY KEY,
    task TEXT NOT NULL,
    status TEXT NOT NULL,
    judge_score INTEGER,
    lease_until REAL,
    record TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS audit_log (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    ts REAL NOT NULL,
    entry_id TEXT NOT NULL,
    transition TEXT NOT NULL,
    actor TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_entries_queue ON entries (status, task, judge_score);
"""


class StoreError(Exception):
    """Base class for store failures."""


class NotFound(StoreError):
    """No entry with that id."""


class Conflict(StoreError):
    """The entry's current status does not allow the operation."""


class EntryStore:
    """Entry persistence with audit trail and review leases."""

    def __init__(
        self,
        path: str | Path,
        clock: Callable[[], float] = time.time,
        lease_s: float = DEFAULT_LEASE_S,
    ):
        self.path = Path(path)
        self.clock = clock
        self.lease_s = lease_s
        self._lock = threading.Lock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        self._conn.executescript(_SCHEMA)
        self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def __enter__(self) -> "EntryStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def add(self, entries: Iterable[InstructionEntry]) -> int:
        """Insert entries; an already-present id is the same content, so
        re-adding is a no-op.  Returns how many were new."""
        added = 0
        with self._lock:
            for entry in entries:
                cur = self._conn.execute(
                    "INSERT OR IGNORE INTO entries"
                    " (id, task, status, judge_score, record) VALUES (?,?,?,?,?)",
                    (
                        entry.id,
                        entry.task,
                        entry.status,
                        entry.judge_score,
                        self._dump(entry),
                    ),
                )
                added += cur.rowcount
            self._conn.commit()
        return added

    def get(self, entry_id: str) -> InstructionEntry:
        row = self._conn.execute(
            "SELECT record FROM entries WHERE id = ?", (entry_id,)
        ).fetchone()
        if row is None:
            raise NotFound(f"no entry {entry_id!r}")
        return entry_from_record(json.loads(row[0]))

    def entries(
        self, status: str | None = None, task: str | None = None
    ) -> list[InstructionEntry]:
        """All matching entries in stable id order."""
        sql = "SELECT record FROM entries"
        clauses, params = [], []
        if status is not None:
            clauses.append("status = ?")
            params.append(status)
        if task is not None:
            clauses.append("task = ?")
            params.append(task)
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY id"
        rows = self._conn.execute(sql, params).fetchall()
        return [entry_from_record(json.loads(row[0])) for row in rows]

    def counts(self) -> dict:
        """Queue counts: overall by status and nested by task."""
        by_status: dict[str, int] = {}
        by_task: dict[str, dict[str, int]] = {}
        rows = self._conn.execute(
            "SELECT task, status, COUNT(*) FROM entries GROUP BY task, status"
        ).fetchall()
        for task, status, n in rows:
            by_status[status] = by_status.get(status, 0) + n
            by_task.setdefault(task, {})[status] = n
        return {"by_status": by_status, "by_task": by_task}

    def set_judge_scores(self, scores) -> None:
        """Record judge scores on existing entries (not a status change)."""
        with self._lock:
            for score in scores:
                record = self._load_record(score.entry_id)
                record["judge_score"] = score.score
                self._conn.execute(
                    "UPDATE entries SET judge_score = ?, record = ? WHERE id = ?",
                    (score.score, json.dumps(record, ensure_ascii=False), score.entry_id),
                )
            self._conn.commit()

    def review_next(
        self, batch_size: int, task: str | None = None
    ) -> list[InstructionEntry]:
        """Lease up to batch_size pending entries, worst judge score first.

        Unscored entries queue after scored ones; ties break on id so
        the order is reproducible.  Leased entries are skipped until
        their lease expires.
        """
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        with self._lock:
            now = self.clock()
            sql = (
                "SELECT record FROM entries WHERE status = 'pending'"
                " AND (lease_until IS NULL OR lease_until <= ?)"
            )
            params: list = [now]
            if task is not None:
                sql += " AND task = ?"
                params.append(task)
            sql += " ORDER BY judge_score IS NULL, judge_score, id LIMIT ?"
            params.append(batch_size)
            rows = self._conn.execute(sql, params).fetchall()
            entries = [entry_from_record(json.loads(row[0])) for row in rows]
            self._conn.executemany(
                "UPDATE entries SET lease_until = ? WHERE id = ?",
                [(now + self.lease_s, entry.id) for entry in entries],
            )
            self._conn.commit()
        return entries

    def discard(
        self, entry_id: str, reason: str, actor: str
    ) -> InstructionEntry:
        """Delete one pending entry with a machine-supplied reason (audited)."""
        with self._lock:
            record = self._load_record(entry_id)
            old_status = record["status"]
            if old_status != "pending":
                raise Conflict(f"entry {entry_id} is {old_status}, not pending")
            record["status"] = "deleted"
            record["status_reason"] = reason
            entry = entry_from_record(record)
            self._write_back(entry, f"{old_status}->deleted", actor)
        return entry

    def apply_verdict(
        self,
        entry_id: str,
        verdict: str,
        fields: dict | None = None,
        actor: str = "reviewer",
    ) -> InstructionEntry:
        """Finalize one pending entry: accept, fix(fields), or delete."""
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        with self._lock:
            record = self._load_record(entry_id)
            old_status = record["status"]
            if old_status != "pending":
                raise Conflict(
                    f"entry {entry_id} is {old_status}, not pending"
                )
            if verdict == "accept":
                record["status"] = "accepted"
            elif verdict == "delete":
                record["status"] = "deleted"
                record["status_reason"] = record.get("status_reason") or "manual_delete"
            else:
                if not fields:
                    raise ValueError("fix verdict needs replacement fields")
                unknown = set(fields) - set(FIXABLE_FIELDS)
                if unknown:
                    raise ValueError(f"cannot fix fields: {sorted(unknown)}")
                record.update(fields)
                record["status"] = "fixed"
                record["status_reason"] = "manual_fix"
            entry = entry_from_record(record)  # revalidates before any write
            self._write_back(entry, f"{old_status}->{record['status']}", actor)
        return entry

    def reopen(self, entry_id: str, actor: str = "reviewer") -> InstructionEntry:
        """Put a finalized entry back in the review queue (audited)."""
        with self._lock:
            record = self._load_record(entry_id)
            old_status = record["status"]
            if old_status not in FINAL_STATUSES:
                raise Conflict(f"entry {entry_id} is {old_status}, not finalized")
            record["status"] = "pending"
            entry = entry_from_record(record)
            self._write_back(entry, f"reopen:{old_status}->pending", actor)
        return entry

    def audit_log(self) -> list[dict]:
        rows = self._conn.execute(
            "SELECT ts, entry_id, transition, actor FROM audit_log ORDER BY seq"
        ).fetchall()
        return [
            {"ts": ts, "entry_id": entry_id, "transition": transition, "actor": actor}
            for ts, entry_id, transition, actor in rows
        ]

    def _load_record(self, entry_id: str) -> dict:
        row = self._conn.execute(
            "SELECT record FROM entries WHERE id = ?", (entry_id,)
        ).fetchone()
        if row is None:
            raise NotFound(f"no entry {entry_id!r}")
        return json.loads(row[0])

    def _write_back(self, entry: InstructionEntry, transition: str, actor: str) -> None:
        # caller holds the lock; one transaction covers row + audit
        self._conn.execute(
            "UPDATE entries SET status = ?, judge_score = ?, record = ?,"
            " lease_until = NULL WHERE id = ?",
            (entry.status, entry.judge_score, self._dump(entry), entry.id),
        )
        self._conn.execute(
            "INSERT INTO audit_log (ts, entry_id, transition, actor) VALUES (?,?,?,?)",
            (self.clock(), entry.id, transition, actor),
        )
        self._conn.commit()

    @staticmethod
    def _dump(entry: InstructionEntry) -> str:
        return json.dumps(entry_to_record(entry), ensure_ascii=False)
