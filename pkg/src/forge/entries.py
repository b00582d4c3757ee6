"""Instruction entries: the unit of the synthetic dataset.

One InstructionEntry is an MCQ, QA, or summarization sample moving
through the lifecycle pending -> accepted / fixed / deleted.  Ids hash
the task plus content fields, so identical content collides on purpose
(the store treats a duplicate id as the same sample) and ids survive
round-trips through JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Mapping

from .textutil import content_id

TASKS = ("mcq", "qa", "summarization")
STATUSES = ("pending", "accepted", "fixed", "deleted")
OPTION_LABELS = ("A", "B", "C", "D")


class EntryError(ValueError):
    """An entry violates its task's field requirements."""


@dataclass(frozen=True)
class Provenance:
    """Where an entry came from: expert seed or a named generator."""

    kind: str  # seed | generated
    model_name: str | None = None
    sub_topic: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "seed":
            if self.model_name or self.sub_topic:
                raise EntryError("seed provenance carries no model or sub-topic")
        elif self.kind == "generated":
            if not self.model_name:
                raise EntryError("generated provenance must name its model")
        else:
            raise EntryError(f"unknown provenance kind {self.kind!r}")


SEED = Provenance("seed")


@dataclass
class InstructionEntry:
    id: str
    task: str
    provenance: Provenance
    status: str
    question: str | None = None
    options: dict[str, str] | None = None
    answer: str | None = None
    source: str | None = None
    summary: str | None = None
    judge_score: int | None = None
    status_reason: str | None = None


def _require_text(value, name: str) -> None:
    if not isinstance(value, str) or not value.strip():
        raise EntryError(f"{name} must be non-empty text")


def _require_absent(entry: InstructionEntry, *names: str) -> None:
    for name in names:
        if getattr(entry, name) is not None:
            raise EntryError(f"{name} must be absent for task={entry.task}")


def validate_entry(entry: InstructionEntry) -> None:
    """Enforce the task-specific field layout and value ranges."""
    if entry.task not in TASKS:
        raise EntryError(f"unknown task {entry.task!r}")
    if entry.status not in STATUSES:
        raise EntryError(f"unknown status {entry.status!r}")
    if entry.judge_score is not None and not 1 <= entry.judge_score <= 10:
        raise EntryError(f"judge_score {entry.judge_score} outside 1..10")
    if entry.task == "mcq":
        _require_text(entry.question, "question")
        if not isinstance(entry.options, Mapping) or sorted(
            entry.options
        ) != sorted(OPTION_LABELS):
            raise EntryError("mcq options must be exactly A, B, C, D")
        for label in OPTION_LABELS:
            _require_text(entry.options[label], f"option {label}")
        if entry.answer not in OPTION_LABELS:
            raise EntryError(f"mcq answer must be one of {OPTION_LABELS}")
        _require_absent(entry, "source", "summary")
    elif entry.task == "qa":
        _require_text(entry.question, "question")
        _require_text(entry.answer, "answer")
        _require_absent(entry, "options", "source", "summary")
    else:
        _require_text(entry.source, "source")
        _require_text(entry.summary, "summary")
        _require_absent(entry, "question", "options", "answer")


def _entry_id(task: str, content: dict) -> str:
    return content_id(json.dumps({"task": task, **content}, sort_keys=True))


def _initial_status(provenance: Provenance) -> str:
    return "accepted" if provenance.kind == "seed" else "pending"


def mcq_entry(
    question: str,
    options: Mapping[str, str],
    answer: str,
    provenance: Provenance = SEED,
) -> InstructionEntry:
    options = dict(options)
    entry = InstructionEntry(
        id=_entry_id("mcq", {"question": question, "options": options, "answer": answer}),
        task="mcq",
        provenance=provenance,
        status=_initial_status(provenance),
        question=question,
        options=options,
        answer=answer,
    )
    validate_entry(entry)
    return entry


def qa_entry(
    question: str, answer: str, provenance: Provenance = SEED
) -> InstructionEntry:
    entry = InstructionEntry(
        id=_entry_id("qa", {"question": question, "answer": answer}),
        task="qa",
        provenance=provenance,
        status=_initial_status(provenance),
        question=question,
        answer=answer,
    )
    validate_entry(entry)
    return entry


def summarization_entry(
    source: str, summary: str, provenance: Provenance = SEED
) -> InstructionEntry:
    entry = InstructionEntry(
        id=_entry_id("summarization", {"source": source, "summary": summary}),
        task="summarization",
        provenance=provenance,
        status=_initial_status(provenance),
        source=source,
        summary=summary,
    )
    validate_entry(entry)
    return entry


def entry_to_record(entry: InstructionEntry) -> dict:
    """Flat JSON form; omits unset optional fields."""
    record: dict = {
        "id": entry.id,
        "task": entry.task,
        "status": entry.status,
        "provenance": entry.provenance.kind,
    }
    if entry.provenance.model_name:
        record["model_name"] = entry.provenance.model_name
    if entry.provenance.sub_topic:
        record["sub_topic"] = entry.provenance.sub_topic
    for name in ("question", "options", "answer", "source", "summary"):
        value = getattr(entry, name)
        if value is not None:
            record[name] = value
    if entry.judge_score is not None:
        record["judge_score"] = entry.judge_score
    if entry.status_reason is not None:
        record["status_reason"] = entry.status_reason
    return record


def entry_from_record(record: Mapping) -> InstructionEntry:
    """Rebuild and re-validate an entry from its JSON form.

    The id is recomputed from content and must match any declared id,
    which catches silent content edits that kept a stale id.  Entries a
    reviewer edited are exempt (status=fixed, or a manual_fix reason
    surviving later transitions such as reopen): their id keeps the
    entry's original identity on purpose.
    """
    try:
        task = record["task"]
    except KeyError:
        raise EntryError("record missing task") from None
    provenance = Provenance(
        kind=record.get("provenance", "seed"),
        model_name=record.get("model_name"),
        sub_topic=record.get("sub_topic"),
    )
    content_fields = {}
    for name in ("question", "options", "answer", "source", "summary"):
        if record.get(name) is not None:
            content_fields[name] = record[name]
    status = record.get("status", _initial_status(provenance))
    computed = _entry_id(task, content_fields) if task in TASKS else ""
    declared = record.get("id")
    edited = status == "fixed" or record.get("status_reason") == "manual_fix"
    if declared is not None and not edited and declared != computed:
        raise EntryError(f"record id {declared!r} does not match content hash")
    entry = InstructionEntry(
        id=declared or computed,
        task=task,
        provenance=provenance,
        status=status,
        question=record.get("question"),
        options=dict(record["options"]) if record.get("options") else None,
        answer=record.get("answer"),
        source=record.get("source"),
        summary=record.get("summary"),
        judge_score=record.get("judge_score"),
        status_reason=record.get("status_reason"),
    )
    validate_entry(entry)
    return entry


def with_status(
    entry: InstructionEntry, status: str, reason: str | None = None
) -> InstructionEntry:
    updated = replace(entry, status=status, status_reason=reason)
    validate_entry(updated)
    return updated
