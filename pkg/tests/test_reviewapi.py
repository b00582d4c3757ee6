"""Review HTTP API: queue endpoint, verdicts, stats, static UI."""

import pytest
from fastapi.testclient import TestClient

from forge.entries import Provenance, mcq_entry, qa_entry
from forge.judge import JudgeScore
from forge.reviewapi import create_app
from forge.store import EntryStore

GEN = Provenance("generated", model_name="gen-a")


@pytest.fixture
def store(tmp_path):
    with EntryStore(tmp_path / "entries.db") as s:
        yield s


@pytest.fixture
def client(store):
    return TestClient(create_app(store))


def _seed(store, n=3):
    entries = [
        qa_entry(f"question {i}?", f"answer number {i}.", provenance=GEN)
        for i in range(n)
    ]
    store.add(entries)
    store.set_judge_scores(
        [JudgeScore(e.id, 9 - i, "judge-1") for i, e in enumerate(entries)]
    )
    return entries


class TestNext:
    def test_empty_queue(self, client):
        resp = client.get("/api/review/next")
        assert resp.status_code == 200
        assert resp.json() == {"entries": []}

    def test_batch_in_triage_order(self, client, store):
        entries = _seed(store)  # scores 9, 8, 7
        resp = client.get("/api/review/next", params={"batch": 2})
        got = resp.json()["entries"]
        assert [e["judge_score"] for e in got] == [7, 8]
        assert got[0]["id"] == entries[2].id

    def test_leases_prevent_double_serving(self, client, store):
        _seed(store)
        first = client.get("/api/review/next", params={"batch": 2}).json()["entries"]
        second = client.get("/api/review/next", params={"batch": 5}).json()["entries"]
        assert len(first) == 2 and len(second) == 1
        assert {e["id"] for e in first} & {e["id"] for e in second} == set()

    def test_task_filter(self, client, store):
        qa = qa_entry("qa?", "answer.", provenance=GEN)
        mcq = mcq_entry(
            "mcq?", {"A": "1", "B": "2", "C": "3", "D": "4"}, "A", provenance=GEN
        )
        store.add([qa, mcq])
        got = client.get(
            "/api/review/next", params={"batch": 5, "task": "mcq"}
        ).json()["entries"]
        assert [e["id"] for e in got] == [mcq.id]

    def test_batch_bounds(self, client):
        assert client.get("/api/review/next", params={"batch": 0}).status_code == 400
        assert client.get("/api/review/next", params={"batch": 999}).status_code == 400


class TestVerdict:
    def test_accept(self, client, store):
        entries = _seed(store, 1)
        resp = client.post(
            "/api/review/verdict",
            json={"entry_id": entries[0].id, "verdict": "accept", "actor": "alice"},
        )
        assert resp.status_code == 200
        assert resp.json()["entry"]["status"] == "accepted"
        assert store.get(entries[0].id).status == "accepted"
        assert store.audit_log()[0]["actor"] == "alice"

    def test_fix(self, client, store):
        entries = _seed(store, 1)
        resp = client.post(
            "/api/review/verdict",
            json={
                "entry_id": entries[0].id,
                "verdict": "fix",
                "fields": {"answer": "a corrected answer."},
            },
        )
        body = resp.json()["entry"]
        assert body["status"] == "fixed"
        assert body["answer"] == "a corrected answer."
        assert body["id"] == entries[0].id

    def test_unknown_entry_404(self, client):
        resp = client.post(
            "/api/review/verdict", json={"entry_id": "0" * 64, "verdict": "accept"}
        )
        assert resp.status_code == 404
        assert resp.json()["reason"] == "not_found"

    def test_double_verdict_409(self, client, store):
        entries = _seed(store, 1)
        body = {"entry_id": entries[0].id, "verdict": "delete"}
        assert client.post("/api/review/verdict", json=body).status_code == 200
        resp = client.post(
            "/api/review/verdict", json={"entry_id": entries[0].id, "verdict": "accept"}
        )
        assert resp.status_code == 409
        assert resp.json()["reason"] == "conflict"

    def test_invalid_fix_400_and_unchanged(self, client, store):
        mcq = mcq_entry(
            "q?", {"A": "1", "B": "2", "C": "3", "D": "4"}, "A", provenance=GEN
        )
        store.add([mcq])
        resp = client.post(
            "/api/review/verdict",
            json={
                "entry_id": mcq.id,
                "verdict": "fix",
                "fields": {"answer": "E"},
            },
        )
        assert resp.status_code == 400
        assert resp.json()["reason"] == "invalid"
        assert store.get(mcq.id).status == "pending"

    def test_unknown_verdict_400(self, client, store):
        entries = _seed(store, 1)
        resp = client.post(
            "/api/review/verdict",
            json={"entry_id": entries[0].id, "verdict": "promote"},
        )
        assert resp.status_code == 400


class TestStats:
    def test_counts_by_status_and_task(self, client, store):
        entries = _seed(store, 3)
        store.apply_verdict(entries[0].id, "accept")
        body = client.get("/api/review/stats").json()
        assert body["by_status"] == {"pending": 2, "accepted": 1}
        assert body["by_task"]["qa"]["pending"] == 2


def test_static_ui_served(tmp_path, store):
    ui = tmp_path / "ui"
    ui.mkdir()
    (ui / "index.html").write_text("<h1>review queue</h1>")
    client = TestClient(create_app(store, static_dir=ui))
    resp = client.get("/")
    assert resp.status_code == 200
    assert "review queue" in resp.text
    assert client.get("/api/review/stats").status_code == 200
