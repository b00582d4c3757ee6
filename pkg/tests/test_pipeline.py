"""Stage runner behavior against a scripted provider endpoint."""

import json
import re
import shutil

import pytest

from mockhttp import MockHttpServer, json_response

from forge.config import load_config
from forge.entries import Provenance, entry_to_record, mcq_entry, qa_entry, summarization_entry
from forge.pipeline import PipelineError, Workspace, run_eval, run_pipeline

COBOL_A = """IDENTIFICATION DIVISION.
PROGRAM-ID. PAYROLL1.
DATA DIVISION.
WORKING-STORAGE SECTION.
01 WS-TOTAL PIC 9(7)V99.
01 WS-AMT PIC 9(5)V99.
PROCEDURE DIVISION.
MAIN-PARA.
    MOVE ZERO TO WS-TOTAL.
    PERFORM ACCUM-PARA 10 TIMES.
    DISPLAY WS-TOTAL.
    STOP RUN.
ACCUM-PARA.
    ADD WS-AMT TO WS-TOTAL.
"""

COBOL_C = """IDENTIFICATION DIVISION.
PROGRAM-ID. INVENTRY.
DATA DIVISION.
WORKING-STORAGE SECTION.
01 IN-COUNT PIC 9(5).
01 IN-CODE PIC X(8).
PROCEDURE DIVISION.
START-PARA.
    MOVE 1 TO IN-COUNT.
    PERFORM CHECK-PARA UNTIL IN-COUNT > 50.
    GOBACK.
CHECK-PARA.
    ADD 1 TO IN-COUNT.
    DISPLAY IN-CODE.
"""

GUIDE_HTML = """<html>
<head><title>Guide</title><style>body { color: black }</style></head>
<body>
<nav class="nav">Home | Index</nav>
<article>
<h1>Dataset allocation</h1>
<p>Allocation requests describe space, unit, and disposition for a new dataset.</p>
<p>The catalog records volume and organization so later jobs can locate it.</p>
</article>
<footer id="footer">copyright docs</footer>
</body>
</html>
"""

GEN_REPLIES = [
    '[{"name": "JCL"}, {"name": "VSAM"}]',
    '[{"question": "How does JCL submit a batch job?",'
    ' "answer": "Through a JOB statement interpreted by JES2 or JES3."}]',
    '[{"question": "Which JCL statement allocates a dataset?",'
    ' "options": {"A": "DD", "B": "JOB", "C": "EXEC", "D": "OUTPUT"},'
    ' "answer": "A"}]',
    # same text as the first qa reply, upper-cased: a normalized duplicate
    '[{"question": "HOW DOES JCL SUBMIT A BATCH JOB?",'
    ' "answer": "THROUGH A JOB STATEMENT INTERPRETED BY JES2 OR JES3."}]',
    '[{"question": "Which VSAM organization supports keyed access?",'
    ' "options": {"A": "ESDS", "B": "KSDS", "C": "RRDS", "D": "LDS"},'
    ' "answer": "B"}]',
    '[{"source": "READ-MASTER. READ MASTER-FILE AT END SET WS-EOF TO TRUE.",'
    ' "summary": "Reads the master file and raises the end flag'
    ' when input is exhausted."}]',
]


def default_judge_reply(payload) -> str:
    """Score 3 for any VSAM multiple-choice line, 8 for the rest."""
    scores = []
    for line in payload["messages"][-1]["content"].splitlines():
        m = re.match(r"\d+\.\s+(\{.*\})$", line)
        if not m:
            continue
        entry = json.loads(m.group(1))
        # multiple-choice payloads are the ones carrying options
        bad = "options" in entry and "VSAM" in json.dumps(entry)
        scores.append(3 if bad else 8)
    return f"All entries reviewed. Final scores: {scores}"


def completion(content: str):
    return json_response({"choices": [{"message": {"content": content}}]})


def install_llm(server, gen_replies, judge_reply=default_judge_reply):
    queue = list(gen_replies)

    def respond(req):
        payload = json.loads(req.body)
        if payload["model"] == "judge-model":
            reply = judge_reply(payload) if callable(judge_reply) else judge_reply
            return completion(reply)
        assert queue, "unexpected extra generation call"
        return completion(queue.pop(0))

    server.add("POST", "/chat/completions", respond)


@pytest.fixture()
def server():
    with MockHttpServer() as s:
        yield s


def write_corpus(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "a.cbl").write_text(COBOL_A, encoding="utf-8")
    (corpus / "b.cbl").write_text(
        COBOL_A + "* AUDIT NOTE ADDED BY TOOLING.\n", encoding="utf-8"
    )
    (corpus / "c.cbl").write_text(COBOL_C, encoding="utf-8")
    (corpus / "guide.html").write_text(GUIDE_HTML, encoding="utf-8")
    (corpus / "tiny.txt").write_text("hi\n", encoding="utf-8")
    return corpus


def write_seed(tmp_path):
    entries = [
        qa_entry(
            "What does MOVE do?",
            "Copies data between storage areas under COBOL conversion rules.",
        ),
        mcq_entry(
            "Which division holds file definitions?",
            {
                "A": "DATA DIVISION",
                "B": "PROCEDURE DIVISION",
                "C": "ENVIRONMENT DIVISION",
                "D": "IDENTIFICATION DIVISION",
            },
            "A",
        ),
        summarization_entry(
            "ACCUM-TOTALS. ADD WS-AMT TO WS-TOTAL. PERFORM WRITE-LINE.",
            "Accumulates the amount into the running total and writes a line.",
        ),
    ]
    path = tmp_path / "seed.jsonl"
    path.write_text(
        "".join(json.dumps(entry_to_record(e)) + "\n" for e in entries),
        encoding="utf-8",
    )
    return entries


def write_config(tmp_path, server_url, seed=True, subtopic_count=2, extra=""):
    seed_line = "  seed_path: seed.jsonl\n" if seed else ""
    text = (
        "workspace: ws\n"
        "providers:\n"
        f"  - {{name: gen, base_url: '{server_url}', model_id: gen-model,"
        " requests_per_minute: 6000}\n"
        f"  - {{name: judge, base_url: '{server_url}', model_id: judge-model,"
        " requests_per_minute: 6000}\n"
        "ingest:\n"
        "  source_dir: corpus\n"
        "extraction_rules:\n"
        "  min_doc_tokens: 12\n"
        "generation:\n"
        f"{seed_line}"
        f"  subtopic_count: {subtopic_count}\n"
        "  entries_per_call: 10\n"
        "  providers: [gen]\n"
        "judge:\n"
        "  provider: judge\n"
        "  min_score: 7\n"
        "  batch_size: 10\n"
        "eval:\n"
        "  endpoint: gen\n" + extra
    )
    path = tmp_path / "forge.yaml"
    path.write_text(text, encoding="utf-8")
    return load_config(path)


def statuses(results):
    return [(r.stage, r.status) for r in results]


class TestMarkers:
    def test_ingest_writes_manifest_stats_and_marker(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["ingest"])
        assert statuses(results) == [("ingest", "ok")]
        assert results[0].summary["files_total"] == 5
        assert results[0].summary["files_kept"] == 4
        ws = Workspace(cfg.workspace)
        assert len(ws.manifest.read_text().splitlines()) == 5
        marker = json.loads(ws.marker("ingest").read_text())
        assert marker["config_sha256"] == cfg.sha256

    def test_rerun_skips_completed_stage(self, tmp_path):
        corpus = write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        run_pipeline(cfg, ["ingest"])
        shutil.rmtree(corpus)  # a skipped stage must not touch its inputs
        results = run_pipeline(cfg, ["ingest"])
        assert statuses(results) == [("ingest", "skipped")]
        assert results[0].summary["files_total"] == 5

    def test_force_reruns(self, tmp_path):
        corpus = write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        run_pipeline(cfg, ["ingest"])
        (corpus / "tiny.txt").unlink()
        results = run_pipeline(cfg, ["ingest"], force=True)
        assert statuses(results) == [("ingest", "ok")]
        assert results[0].summary["files_total"] == 4

    def test_config_change_invalidates_marker(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        run_pipeline(cfg, ["ingest"])
        cfg2 = write_config(
            tmp_path, "http://unused.invalid", extra="filter_policy:\n  min_file_lines: 4\n"
        )
        assert cfg2.sha256 != cfg.sha256
        results = run_pipeline(cfg2, ["ingest"])
        assert statuses(results) == [("ingest", "ok")]

    def test_unknown_stage_rejected(self, tmp_path):
        cfg = write_config(tmp_path, "http://unused.invalid")
        with pytest.raises(PipelineError, match="unknown stages"):
            run_pipeline(cfg, ["polish"])

    def test_stages_normalize_to_dependency_order(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["dedup", "ingest"])
        assert statuses(results) == [("ingest", "ok"), ("dedup", "ok")]


class TestCorpusStages:
    def test_dedup_collapses_near_duplicates(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["ingest", "dedup"])
        summary = results[1].summary
        assert summary == {"docs_in": 4, "docs_kept": 3, "clusters": 1}
        ws = Workspace(cfg.workspace)
        kept = json.loads(ws.dedup_kept.read_text())
        assert len(kept) == 3
        clusters = json.loads(ws.dedup_clusters.read_text())
        assert len(clusters) == 1
        assert len(clusters[0]["member_ids"]) == 2

    def test_dedup_without_manifest_fails(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["dedup"])
        assert statuses(results) == [("dedup", "failed")]
        assert "ingest" in results[0].error

    def test_extract_docs_strips_boilerplate(self, tmp_path):
        write_corpus(tmp_path)
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["ingest", "extract-docs"])
        assert results[1].summary == {"docs_extracted": 1, "docs_dropped": 0}
        ws = Workspace(cfg.workspace)
        records = [json.loads(line) for line in ws.docs.read_text().splitlines()]
        assert len(records) == 1
        text = records[0]["text"]
        assert "Dataset allocation" in text
        assert "Allocation requests describe space" in text
        assert "<" not in text
        assert "Home | Index" not in text
        assert records[0]["path"] == "guide.html"


class TestGenerationStages:
    def run_through_judge(self, tmp_path, server):
        write_corpus(tmp_path)
        write_seed(tmp_path)
        install_llm(server, GEN_REPLIES)
        cfg = write_config(tmp_path, server.base_url)
        results = run_pipeline(
            cfg, ["gen-topics", "gen-data", "judge", "filter-rules"]
        )
        assert [r.status for r in results] == ["ok"] * 4
        return cfg, results

    def test_generation_to_export_flow(self, tmp_path, server):
        cfg, results = self.run_through_judge(tmp_path, server)
        topics, gen, judged, filtered = results
        assert topics.summary == {"topics": 2}
        assert gen.summary == {"seed_entries": 3, "generated": 5, "topics_used": 2}
        assert judged.summary == {"scored": 5, "failed_batches": 0, "discarded": 1}
        assert filtered.summary == {"checked": 4, "kept": 3, "rejected": 1}

        ws = Workspace(cfg.workspace)
        with ws.open_store() as store:
            counts = store.counts()["by_status"]
            assert counts == {"accepted": 3, "pending": 3, "deleted": 2}
            reasons = {
                e.status_reason for e in store.entries(status="deleted")
            }
            assert reasons == {"low_judge_score", "duplicate"}

        # the review gate blocks assemble and never reaches export
        blocked = run_pipeline(cfg, ["assemble", "export"])
        assert statuses(blocked) == [("assemble", "failed")]
        assert "3 entries await review" in blocked[0].error
        assert not ws.marker("assemble").exists()

        with ws.open_store() as store:
            for entry in store.entries(status="pending"):
                store.apply_verdict(entry.id, "accept", actor="tester")

        done = run_pipeline(cfg, ["assemble", "export"])
        assert statuses(done) == [("assemble", "ok"), ("export", "ok")]
        assert done[1].summary["total"] == 6
        assert done[1].summary["counts"] == {
            "mcq": {"train": 2, "validation": 0, "test": 0},
            "qa": {"train": 2, "validation": 0, "test": 0},
            "summarization": {"train": 2, "validation": 0, "test": 0},
        }

        splits = json.loads(ws.splits.read_text())
        assert splits["config_sha256"] == cfg.sha256
        provenance = json.loads((ws.bundle_dir / "provenance.json").read_text())
        assert provenance["config_sha256"] == cfg.sha256
        assert provenance["bundle_sha256"] == done[1].summary["bundle_sha256"]
        assert (ws.bundle_dir / "manifest.json").exists()
        assert (ws.reports_dir / "dataset_stats.csv").exists()
        assert (ws.reports_dir / "dataset_stats.png").exists()

    def test_judge_failure_keeps_batch_pending(self, tmp_path, server):
        replies = [
            '[{"name": "JCL"}]',
            GEN_REPLIES[1],
            GEN_REPLIES[2],
        ]
        install_llm(server, replies, judge_reply="Scores: [9]")  # 1 score, 2 entries
        cfg = write_config(tmp_path, server.base_url, seed=False, subtopic_count=1)
        results = run_pipeline(cfg, ["gen-topics", "gen-data", "judge"])
        assert [r.status for r in results] == ["ok"] * 3
        assert results[2].summary == {
            "scored": 0,
            "failed_batches": 1,
            "discarded": 0,
        }
        with Workspace(cfg.workspace).open_store() as store:
            pending = store.entries(status="pending")
            assert len(pending) == 2
            assert all(e.judge_score is None for e in pending)

    def test_gen_data_needs_topics_or_seeds(self, tmp_path, server):
        cfg = write_config(tmp_path, server.base_url, seed=False)
        results = run_pipeline(cfg, ["gen-data"])
        assert statuses(results) == [("gen-data", "failed")]
        assert "no topics file and no seed_path" in results[0].error


class TestReviewGate:
    def seed_store(self, cfg):
        ws = Workspace(cfg.workspace)
        ws.ensure()
        accepted = qa_entry("What is JES2?", "A job entry subsystem that schedules work.")
        pending = qa_entry(
            "What is a PDS?",
            "A partitioned dataset holding members.",
            Provenance("generated", model_name="m"),
        )
        with ws.open_store() as store:
            store.add([accepted, pending])
        return ws, accepted, pending

    def test_allow_pending_bypasses_gate(self, tmp_path):
        cfg = write_config(tmp_path, "http://unused.invalid")
        ws, accepted, pending = self.seed_store(cfg)
        results = run_pipeline(cfg, ["assemble"], allow_pending=True)
        assert statuses(results) == [("assemble", "ok")]
        assert results[0].summary["pending_bypassed"] == 1
        splits = json.loads(ws.splits.read_text())["splits"]
        exported_ids = [i for per in splits.values() for ids in per.values() for i in ids]
        assert exported_ids == [accepted.id]  # pending stays unexported

    def test_gate_reports_queue_size(self, tmp_path):
        cfg = write_config(tmp_path, "http://unused.invalid")
        self.seed_store(cfg)
        results = run_pipeline(cfg, ["assemble"])
        assert statuses(results) == [("assemble", "failed")]
        assert "1 entries await review" in results[0].error

    def test_export_requires_assemble(self, tmp_path):
        cfg = write_config(tmp_path, "http://unused.invalid")
        results = run_pipeline(cfg, ["export"])
        assert statuses(results) == [("export", "failed")]
        assert "assemble" in results[0].error


class TestRunEval:
    def mcq_dataset(self, tmp_path):
        rows = [
            {
                "id": f"q{i}",
                "question": f"Question number {i}?",
                "options": {"A": "right", "B": "wrong", "C": "wrong", "D": "wrong"},
                "answer": "A",
            }
            for i in range(2)
        ]
        path = tmp_path / "mcq_test.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
        return path

    def test_mcq_eval_round_trip(self, tmp_path, server):
        install_llm(server, ["The answer is A", "The answer is A"])
        cfg = write_config(tmp_path, server.base_url)
        dataset = self.mcq_dataset(tmp_path)
        report = run_eval(cfg, "mcq", dataset)
        assert report.metrics == {"accuracy": 100.0}
        assert report.model_name == "gen-model"
        assert report.protocol["config_sha256"] == cfg.sha256
        assert report.n_examples == 2
        assert report.n_flagged == 0

    def test_explicit_endpoint_overrides_config(self, tmp_path, server):
        install_llm(server, ["The answer is A", "The answer is A"])
        cfg = write_config(tmp_path, server.base_url)
        report = run_eval(cfg, "mcq", self.mcq_dataset(tmp_path), endpoint="gen")
        assert report.metrics["accuracy"] == 100.0

    def test_missing_endpoint_is_an_error(self, tmp_path):
        path = tmp_path / "forge.yaml"
        path.write_text("workspace: ws\n", encoding="utf-8")
        cfg = load_config(path)
        with pytest.raises(PipelineError, match="no eval endpoint"):
            run_eval(cfg, "mcq", self.mcq_dataset(tmp_path))
