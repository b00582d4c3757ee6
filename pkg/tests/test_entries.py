"""Entry constructors, validation, and JSON round-trips."""

import json

import pytest

from forge.entries import (
    SEED,
    EntryError,
    Provenance,
    entry_from_record,
    entry_to_record,
    mcq_entry,
    qa_entry,
    summarization_entry,
    validate_entry,
    with_status,
)
from forge.textutil import content_id

OPTIONS = {
    "A": "Load module",
    "B": "Object deck",
    "C": "Copybook",
    "D": "Source listing",
}

GEN = Provenance("generated", model_name="model-x", sub_topic="JCL")


def test_mcq_seed_entry_shape():
    entry = mcq_entry("What does the linkage editor produce?", OPTIONS, "A")
    assert entry.task == "mcq"
    assert entry.status == "accepted"
    assert entry.provenance is SEED
    assert entry.options == OPTIONS
    assert entry.answer == "A"
    assert entry.source is None and entry.summary is None


def test_generated_entry_starts_pending():
    entry = qa_entry("What is a PDS?", "A partitioned data set.", provenance=GEN)
    assert entry.status == "pending"
    assert entry.provenance.model_name == "model-x"
    assert entry.provenance.sub_topic == "JCL"


def test_ids_are_sha256_hex():
    entries = [
        mcq_entry("q", OPTIONS, "B"),
        qa_entry("q", "a"),
        summarization_entry("long source text", "short"),
    ]
    for entry in entries:
        assert len(entry.id) == 64
        int(entry.id, 16)


def test_id_matches_content_hash():
    entry = qa_entry("What is VSAM?", "A record-oriented access method.")
    expected = content_id(
        json.dumps(
            {
                "task": "qa",
                "question": "What is VSAM?",
                "answer": "A record-oriented access method.",
            },
            sort_keys=True,
        )
    )
    assert entry.id == expected


def test_id_is_deterministic_and_content_sensitive():
    a = qa_entry("q1", "a1")
    b = qa_entry("q1", "a1")
    c = qa_entry("q1", "a2")
    assert a.id == b.id
    assert a.id != c.id


def test_id_ignores_provenance_and_status():
    a = qa_entry("q1", "a1")
    b = qa_entry("q1", "a1", provenance=GEN)
    assert a.id == b.id
    assert a.status != b.status


def test_mcq_requires_exactly_four_options():
    three = {k: v for k, v in OPTIONS.items() if k != "D"}
    with pytest.raises(EntryError):
        mcq_entry("q", three, "A")
    five = dict(OPTIONS, E="extra")
    with pytest.raises(EntryError):
        mcq_entry("q", five, "A")


def test_mcq_answer_must_be_a_label():
    with pytest.raises(EntryError):
        mcq_entry("q", OPTIONS, "E")
    with pytest.raises(EntryError):
        mcq_entry("q", OPTIONS, "Load module")


def test_mcq_rejects_empty_option_text():
    bad = dict(OPTIONS, C="   ")
    with pytest.raises(EntryError):
        mcq_entry("q", bad, "A")


def test_qa_rejects_blank_fields():
    with pytest.raises(EntryError):
        qa_entry("", "a")
    with pytest.raises(EntryError):
        qa_entry("q", "  ")


def test_summarization_rejects_blank_fields():
    with pytest.raises(EntryError):
        summarization_entry("", "s")
    with pytest.raises(EntryError):
        summarization_entry("src", "")


def test_cross_task_fields_rejected():
    entry = qa_entry("q", "a")
    entry.source = "stray"
    with pytest.raises(EntryError):
        validate_entry(entry)
    entry = summarization_entry("src", "sum")
    entry.answer = "stray"
    with pytest.raises(EntryError):
        validate_entry(entry)


def test_judge_score_bounds():
    entry = qa_entry("q", "a")
    entry.judge_score = 0
    with pytest.raises(EntryError):
        validate_entry(entry)
    entry.judge_score = 11
    with pytest.raises(EntryError):
        validate_entry(entry)
    entry.judge_score = 10
    validate_entry(entry)


def test_provenance_validation():
    with pytest.raises(EntryError):
        Provenance("seed", model_name="m")
    with pytest.raises(EntryError):
        Provenance("generated")
    with pytest.raises(EntryError):
        Provenance("scraped")
    Provenance("generated", model_name="m")


@pytest.mark.parametrize(
    "entry",
    [
        mcq_entry("q?", OPTIONS, "C", provenance=GEN),
        qa_entry("q?", "answer text"),
        summarization_entry("source body", "the gist", provenance=GEN),
    ],
    ids=["mcq", "qa", "summarization"],
)
def test_record_round_trip(entry):
    record = entry_to_record(entry)
    rebuilt = entry_from_record(json.loads(json.dumps(record)))
    assert rebuilt == entry


def test_record_omits_unset_fields():
    record = entry_to_record(qa_entry("q", "a"))
    assert "options" not in record
    assert "source" not in record
    assert "judge_score" not in record
    assert "model_name" not in record


def test_record_carries_score_and_reason():
    entry = qa_entry("q", "a")
    entry.judge_score = 9
    entry = with_status(entry, "deleted", "low_judge_score")
    record = entry_to_record(entry)
    assert record["judge_score"] == 9
    assert record["status_reason"] == "low_judge_score"
    assert entry_from_record(record) == entry


def test_tampered_id_rejected():
    record = entry_to_record(qa_entry("q", "a"))
    record["id"] = "0" * 64
    with pytest.raises(EntryError):
        entry_from_record(record)


def test_edited_content_with_stale_id_rejected():
    record = entry_to_record(qa_entry("q", "a"))
    record["answer"] = "a (edited)"
    with pytest.raises(EntryError):
        entry_from_record(record)


def test_fixed_status_keeps_original_id():
    record = entry_to_record(qa_entry("q", "a"))
    original_id = record["id"]
    record["answer"] = "a (reviewer corrected)"
    record["status"] = "fixed"
    rebuilt = entry_from_record(record)
    assert rebuilt.id == original_id
    assert rebuilt.answer == "a (reviewer corrected)"


def test_record_missing_task_rejected():
    with pytest.raises(EntryError):
        entry_from_record({"question": "q", "answer": "a"})


def test_record_unknown_task_rejected():
    with pytest.raises(EntryError):
        entry_from_record({"task": "translation", "question": "q", "answer": "a"})


def test_with_status_replaces_without_mutation():
    entry = qa_entry("q", "a", provenance=GEN)
    updated = with_status(entry, "accepted")
    assert entry.status == "pending"
    assert updated.status == "accepted"
    assert updated.id == entry.id
    with pytest.raises(EntryError):
        with_status(entry, "archived")
