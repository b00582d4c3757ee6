"""Command line behavior: exit codes, outputs, and rendered artifacts."""

import json

import pytest
from click.testing import CliRunner

from helpers import make_toy_checkpoint
from mockhttp import MockHttpServer

from forge.cli import main
from forge.entries import Provenance, qa_entry
from forge.evalharness import EvalReport
from forge.pipeline import Workspace
from test_pipeline import install_llm, write_config, write_corpus


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def server():
    with MockHttpServer() as s:
        yield s


def setup_workspace(tmp_path, url="http://unused.invalid"):
    write_corpus(tmp_path)
    cfg = write_config(tmp_path, url)
    return cfg, str(tmp_path / "forge.yaml")


class TestStageCommands:
    def test_help_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in (
            "ingest", "stats", "dedup", "extract-docs", "gen-topics", "gen-data",
            "judge", "filter-rules", "review-serve", "assemble", "export",
            "upscale", "eval",
        ):
            assert name in result.output

    def test_ingest_human_output(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["ingest", "-c", cfg_path])
        assert result.exit_code == 0
        assert "ingest: ok" in result.output
        assert "files_kept=4" in result.output

    def test_ingest_json_output(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["ingest", "-c", cfg_path, "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload[0]["stage"] == "ingest"
        assert payload[0]["status"] == "ok"
        assert payload[0]["summary"]["files_total"] == 5

    def test_rerun_reports_skip_and_force_reruns(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        assert runner.invoke(main, ["ingest", "-c", cfg_path]).exit_code == 0
        again = runner.invoke(main, ["ingest", "-c", cfg_path])
        assert "ingest: skipped" in again.output
        forced = runner.invoke(main, ["ingest", "-c", cfg_path, "--force"])
        assert "ingest: ok" in forced.output

    def test_failed_stage_exits_nonzero(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["dedup", "-c", cfg_path])
        assert result.exit_code == 1
        assert "dedup: failed" in result.output
        assert "ingest" in result.output

    def test_run_selected_stages_in_order(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(
            main, ["run", "-c", cfg_path, "--stage", "dedup", "--stage", "ingest"]
        )
        assert result.exit_code == 0
        assert result.output.index("ingest: ok") < result.output.index("dedup: ok")

    def test_run_rejects_unknown_stage(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["run", "-c", cfg_path, "--stage", "polish"])
        assert result.exit_code == 2

    def test_missing_config_is_a_clean_error(self, tmp_path, runner):
        result = runner.invoke(main, ["ingest", "-c", str(tmp_path / "nope.yaml")])
        assert result.exit_code == 1
        assert "not found" in result.output

    def test_source_dir_override(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        other = tmp_path / "other"
        other.mkdir()
        (other / "solo.cbl").write_text(
            "IDENTIFICATION DIVISION.\n" * 12, encoding="utf-8"
        )
        result = runner.invoke(
            main, ["ingest", "-c", cfg_path, "--source-dir", str(other), "--json"]
        )
        assert result.exit_code == 0
        assert json.loads(result.output)[0]["summary"]["files_total"] == 1


class TestStats:
    def test_renders_csv_and_png(self, tmp_path, runner):
        cfg, cfg_path = setup_workspace(tmp_path)
        runner.invoke(main, ["ingest", "-c", cfg_path])
        result = runner.invoke(main, ["stats", "-c", cfg_path])
        assert result.exit_code == 0
        assert "4/5 files kept" in result.output
        ws = Workspace(cfg.workspace)
        assert (ws.reports_dir / "corpus_stats.csv").exists()
        assert (ws.reports_dir / "corpus_stats.png").read_bytes()[:4] == b"\x89PNG"

    def test_includes_entry_store_when_present(self, tmp_path, runner):
        cfg, cfg_path = setup_workspace(tmp_path)
        runner.invoke(main, ["ingest", "-c", cfg_path])
        ws = Workspace(cfg.workspace)
        with ws.open_store() as store:
            store.add([qa_entry("What is SDSF?", "A spool display and search facility.")])
        result = runner.invoke(main, ["stats", "-c", cfg_path, "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["entries"]["by_status"] == {"accepted": 1}
        assert (ws.reports_dir / "entry_stats.csv").exists()
        assert (ws.reports_dir / "entry_stats.png").exists()

    def test_empty_workspace_errors(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["stats", "-c", cfg_path])
        assert result.exit_code == 1
        assert "nothing to report" in result.output


class TestReviewGateCommands:
    def test_assemble_gate_and_allow_pending(self, tmp_path, runner):
        cfg, cfg_path = setup_workspace(tmp_path)
        ws = Workspace(cfg.workspace)
        ws.ensure()
        with ws.open_store() as store:
            store.add(
                [
                    qa_entry(
                        "What is RACF?",
                        "The resource access control security product.",
                        Provenance("generated", model_name="m"),
                    )
                ]
            )
        blocked = runner.invoke(main, ["assemble", "-c", cfg_path])
        assert blocked.exit_code == 1
        assert "await review" in blocked.output
        allowed = runner.invoke(main, ["assemble", "-c", cfg_path, "--allow-pending"])
        assert allowed.exit_code == 0
        assert ws.splits.exists()

    def test_review_serve_needs_a_store(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(main, ["review-serve", "-c", cfg_path])
        assert result.exit_code == 1
        assert "gen-data" in result.output


class TestUpscaleCommands:
    def test_upscale_then_verify(self, tmp_path, runner):
        src = tmp_path / "model.ckpt"
        dst = tmp_path / "model_up.ckpt"
        make_toy_checkpoint(src, 4)
        result = runner.invoke(
            main, ["upscale", str(src), "--m", "1", "--out", str(dst)]
        )
        assert result.exit_code == 0
        assert "4 layers -> 6 layers" in result.output
        verify = runner.invoke(
            main, ["upscale-verify", str(src), str(dst), "--m", "1"]
        )
        assert verify.exit_code == 0
        assert "ok" in verify.output

    def test_verify_reports_violations(self, tmp_path, runner):
        src = tmp_path / "model.ckpt"
        dst = tmp_path / "model_up.ckpt"
        make_toy_checkpoint(src, 4)
        runner.invoke(main, ["upscale", str(src), "--m", "1", "--out", str(dst)])
        result = runner.invoke(
            main, ["upscale-verify", str(src), str(dst), "--m", "2", "--json"]
        )
        assert result.exit_code == 1
        payload = json.loads(result.output)
        assert payload["ok"] is False
        assert any("layer count" in v for v in payload["violations"])

    def test_upscale_json_lists_provenance(self, tmp_path, runner):
        src = tmp_path / "model.ckpt"
        make_toy_checkpoint(src, 4)
        result = runner.invoke(
            main,
            ["upscale", str(src), "--m", "1", "--out", str(tmp_path / "up.ckpt"), "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["out_layers"] == 6
        assert payload["provenance"] == [0, 1, 2, 1, 2, 3]

    def test_bad_m_is_a_clean_error(self, tmp_path, runner):
        src = tmp_path / "model.ckpt"
        make_toy_checkpoint(src, 4)
        result = runner.invoke(
            main, ["upscale", str(src), "--m", "9", "--out", str(tmp_path / "up.ckpt")]
        )
        assert result.exit_code == 1
        assert "m" in result.output


class TestEvalCommands:
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

    def test_eval_saves_report_and_renders_table(self, tmp_path, runner, server):
        install_llm(server, ["The answer is A", "The answer is A"])
        cfg, cfg_path = setup_workspace(tmp_path, url=server.base_url)
        dataset = self.mcq_dataset(tmp_path)
        result = runner.invoke(
            main, ["eval", "-c", cfg_path, "--task", "mcq", "--dataset", str(dataset)]
        )
        assert result.exit_code == 0, result.output
        assert "accuracy=100.0" in result.output
        ws = Workspace(cfg.workspace)
        report = json.loads((ws.reports_dir / "eval_mcq.json").read_text())
        assert report["metrics"] == {"accuracy": 100.0}
        assert (ws.reports_dir / "eval_mcq.csv").exists()
        assert (ws.reports_dir / "eval_mcq.png").read_bytes()[:4] == b"\x89PNG"

    def test_eval_table_combines_saved_reports(self, tmp_path, runner):
        paths = []
        for i, accuracy in enumerate((70.0, 90.0)):
            report = EvalReport(
                model_name=f"model-{i}",
                task="mcq",
                metrics={"accuracy": accuracy},
                protocol={},
                examples=[{"flagged": False}],
            )
            path = tmp_path / f"r{i}.json"
            report.save(path)
            paths.append(str(path))
        out_dir = tmp_path / "tables"
        result = runner.invoke(
            main, ["eval-table", *paths, "--out-dir", str(out_dir), "--json"]
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        csv_text = (out_dir / "eval_table.csv").read_text()
        assert "model-0" in csv_text and "model-1" in csv_text
        assert payload["png"].endswith("eval_table.png")
        assert (out_dir / "eval_table.png").exists()

    def test_eval_rejects_unknown_task(self, tmp_path, runner):
        _, cfg_path = setup_workspace(tmp_path)
        result = runner.invoke(
            main,
            ["eval", "-c", cfg_path, "--task", "poetry", "--dataset", cfg_path],
        )
        assert result.exit_code == 2
