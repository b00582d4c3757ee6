"""Stage runner: dependency order, completion markers, and a review gate.

Each stage reads and writes files under one workspace directory, and a
successful stage drops a marker recording the config hash it ran with.
Reruns skip marked stages until the config changes or force is set.
Assemble refuses to run while entries await review unless the caller
explicitly allows pending entries through.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import requests

from . import report
from .config import ForgeConfig
from .curate import SPLITS, apply_rule_filters, export_benchmark, split_dataset
from .dedup import cluster_json, dedup_corpus
from .docextract import extract_document
from .evalharness import EmbedClient, EvalReport, EvalTask, run_generation_task, run_mcq
from .ingest import IngestError, corpus_stats, ingest_tree, read_manifest, write_manifest
from .judge import BatchFailed, score_batch
from .providers import ChatClient, ProviderError, ProviderPool, ResponseCache
from .store import EntryStore
from .synthgen import (
    generate_from_seed,
    generate_from_subtopic,
    generate_mcq_from_subtopic,
    generate_subtopics,
    load_seed,
    load_subtopics,
)
from .textutil import content_id

__all__ = [
    "STAGES",
    "PipelineError",
    "StageFailed",
    "StageResult",
    "Workspace",
    "run_eval",
    "run_pipeline",
]

log = logging.getLogger(__name__)

STAGES = (
    "ingest",
    "dedup",
    "extract-docs",
    "gen-topics",
    "gen-data",
    "judge",
    "filter-rules",
    "assemble",
    "export",
)


class PipelineError(Exception):
    """A run could not start or a stage could not complete."""


class StageFailed(PipelineError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class StageResult:
    stage: str
    status: str  # ok | skipped | failed
    summary: dict = field(default_factory=dict)
    error: str | None = None


class Workspace:
    """Fixed artifact layout under one root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.manifest = self.root / "manifest.jsonl"
        self.corpus_stats = self.root / "corpus_stats.json"
        self.dedup_kept = self.root / "dedup_kept.json"
        self.dedup_clusters = self.root / "dedup_clusters.json"
        self.docs = self.root / "docs.jsonl"
        self.topics = self.root / "topics.jsonl"
        self.store_path = self.root / "entries.db"
        self.splits = self.root / "splits.json"
        self.bundle_dir = self.root / "bundle"
        self.reports_dir = self.root / "reports"
        self.markers_dir = self.root / "markers"
        self.cache_dir = self.root / "cache"

    def ensure(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.markers_dir.mkdir(exist_ok=True)

    def marker(self, stage: str) -> Path:
        return self.markers_dir / f"{stage}.done"

    def open_store(self, lease_s: float = 600.0) -> EntryStore:
        return EntryStore(self.store_path, lease_s=lease_s)


class _Run:
    """Per-invocation context: lazily built clients, shared session."""

    def __init__(
        self,
        config: ForgeConfig,
        ws: Workspace,
        session: requests.Session | None = None,
        allow_pending: bool = False,
    ):
        self.config = config
        self.ws = ws
        self.session = session
        self.allow_pending = allow_pending
        self._clients: dict[str, ChatClient] = {}

    def client(self, name: str) -> ChatClient:
        if name not in self._clients:
            cfg = self.config.provider(name)
            # cache per provider: same payload to a different backend
            # is a different request
            cache = ResponseCache(self.ws.cache_dir / cfg.name)
            self._clients[name] = ChatClient(cfg, session=self.session, cache=cache)
        return self._clients[name]

    def generation_pool(self) -> ProviderPool:
        configs = self.config.generation_providers()
        if not configs:
            raise StageFailed("gen-data", "no generation providers configured")
        return ProviderPool([self.client(c.name) for c in configs])

    def open_store(self) -> EntryStore:
        return self.ws.open_store(lease_s=self.config.review.lease_seconds)


def _require(path: Path, produced_by: str, stage: str) -> None:
    if not path.exists():
        raise StageFailed(stage, f"missing {path.name}; run the {produced_by} stage first")


def _source_dir(run: _Run, stage: str) -> Path:
    src = run.config.ingest.source_dir
    if src is None:
        raise StageFailed(stage, "no ingest.source_dir configured")
    src = Path(src)
    if not src.is_dir():
        raise StageFailed(stage, f"source dir not found: {src}")
    return src


def _stage_ingest(run: _Run) -> dict:
    src = _source_dir(run, "ingest")
    docs = ingest_tree(src, policy=run.config.filter_policy)
    write_manifest(docs, run.ws.manifest)
    stats = corpus_stats(docs).as_dict()
    run.ws.corpus_stats.write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return stats


def _kept_texts(run: _Run, stage: str) -> dict[str, str]:
    # the manifest lives in the workspace; contents stay in the source tree
    src = _source_dir(run, stage)
    texts: dict[str, str] = {}
    for record in read_manifest(run.ws.manifest):
        if record["filter_status"] != "kept":
            continue
        data = (src / record["path"]).read_bytes()
        if content_id(data) != record["id"]:
            raise IngestError(f"content hash mismatch for {record['path']}")
        texts[record["id"]] = data.decode("utf-8", errors="replace")
    return texts


def _stage_dedup(run: _Run) -> dict:
    _require(run.ws.manifest, "ingest", "dedup")
    texts = _kept_texts(run, "dedup")
    d = run.config.dedup
    kept, clusters = dedup_corpus(
        texts,
        k=d.k,
        num_hashes=d.num_hashes,
        seed=d.seed,
        p=d.lsh_params(),
        exact_verify=d.exact_verify,
    )
    run.ws.dedup_kept.write_text(
        json.dumps(sorted(kept), indent=2) + "\n", encoding="utf-8"
    )
    run.ws.dedup_clusters.write_text(
        json.dumps([cluster_json(c) for c in clusters], indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return {"docs_in": len(texts), "docs_kept": len(kept), "clusters": len(clusters)}


def _stage_extract_docs(run: _Run) -> dict:
    _require(run.ws.manifest, "ingest", "extract-docs")
    src = _source_dir(run, "extract-docs")
    rules = run.config.extraction_rules
    extracted = 0
    dropped = 0
    with open(run.ws.docs, "w", encoding="utf-8") as fh:
        for record in read_manifest(run.ws.manifest):
            if record["filter_status"] != "kept" or record["kind"] != "mainframe_doc":
                continue
            markup = (src / record["path"]).read_text(encoding="utf-8", errors="replace")
            doc = extract_document(markup, rules, path_or_url=record["path"])
            if doc.filter_status != "kept":
                dropped += 1
                continue
            fh.write(
                json.dumps(
                    {"id": doc.id, "path": record["path"], "text": doc.content},
                    ensure_ascii=False,
                )
                + "\n"
            )
            extracted += 1
    return {"docs_extracted": extracted, "docs_dropped": dropped}


def _stage_gen_topics(run: _Run) -> dict:
    pool = run.generation_pool()
    topics = generate_subtopics(
        pool.pick(), run.config.generation.subtopic_count, out_path=run.ws.topics
    )
    return {"topics": len(topics)}


def _stage_gen_data(run: _Run) -> dict:
    gen = run.config.generation
    with run.open_store() as store:
        seeds = []
        added_seed = 0
        if gen.seed_path is not None:
            seeds = load_seed(Path(gen.seed_path))
            added_seed = store.add(seeds)
        topics = load_subtopics(run.ws.topics) if run.ws.topics.exists() else []
        if not topics and not seeds:
            raise StageFailed(
                "gen-data", "nothing to expand: no topics file and no seed_path"
            )
        pool = run.generation_pool()
        generated = []
        for topic in topics:
            generated += generate_from_subtopic(
                topic, pool.pick(), max_entries=gen.entries_per_call
            )
            generated += generate_mcq_from_subtopic(
                topic, pool.pick(), max_entries=gen.entries_per_call
            )
        for seed in seeds:
            if seed.task == "summarization":
                generated += generate_from_seed(
                    seed, pool.pick(), max_entries=gen.entries_per_call
                )
        added = store.add(generated)
        return {
            "seed_entries": added_seed,
            "generated": added,
            "topics_used": len(topics),
        }


def _stage_judge(run: _Run) -> dict:
    jcfg = run.config.judge
    if not jcfg.provider:
        raise StageFailed("judge", "no judge.provider configured")
    client = run.client(jcfg.provider)
    with run.open_store() as store:
        pending = store.entries(status="pending")
        scored = 0
        failed_batches = 0
        for i in range(0, len(pending), jcfg.batch_size):
            batch = pending[i : i + jcfg.batch_size]
            try:
                scores = score_batch(batch, client)
            except (BatchFailed, ProviderError) as exc:
                # a failed batch stays unscored; its entries remain pending
                log.warning("judge batch of %d failed: %s", len(batch), exc)
                failed_batches += 1
                continue
            store.set_judge_scores(scores)
            scored += len(scores)
        discarded = 0
        for entry in store.entries(status="pending"):
            if entry.judge_score is not None and entry.judge_score < jcfg.min_score:
                store.discard(entry.id, "low_judge_score", actor="judge")
                discarded += 1
        return {
            "scored": scored,
            "failed_batches": failed_batches,
            "discarded": discarded,
        }


def _stage_filter_rules(run: _Run) -> dict:
    with run.open_store() as store:
        pending = store.entries(status="pending")
        kept, rejected = apply_rule_filters(pending, run.config.rules)
        for entry in rejected:
            store.discard(entry.id, entry.status_reason or "rule_violation", actor="rules")
        return {"checked": len(pending), "kept": len(kept), "rejected": len(rejected)}


def _stage_assemble(run: _Run) -> dict:
    with run.open_store() as store:
        pending = store.counts()["by_status"].get("pending", 0)
        if pending and not run.allow_pending:
            raise StageFailed(
                "assemble",
                f"{pending} entries await review; pass allow_pending to bypass",
            )
        final = store.entries(status="accepted") + store.entries(status="fixed")
        splits = split_dataset(final, run.config.split)
    ids = {
        task: {split: [e.id for e in splits[task][split]] for split in SPLITS}
        for task in splits
    }
    payload = {"config_sha256": run.config.sha256, "splits": ids}
    run.ws.splits.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {
        "pending_bypassed": pending,
        "counts": {
            task: {split: len(ids[task][split]) for split in SPLITS} for task in ids
        },
    }


def _stage_export(run: _Run) -> dict:
    _require(run.ws.splits, "assemble", "export")
    payload = json.loads(run.ws.splits.read_text(encoding="utf-8"))
    with run.open_store() as store:
        splits = {
            task: {
                split: [store.get(i) for i in id_list]
                for split, id_list in per_task.items()
            }
            for task, per_task in payload["splits"].items()
        }
    bundle = export_benchmark(splits, run.ws.bundle_dir)
    (run.ws.bundle_dir / "provenance.json").write_text(
        json.dumps(
            {
                "config_sha256": run.config.sha256,
                "bundle_sha256": bundle.manifest["bundle_sha256"],
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    by_task = {
        task: {split: len(per_task.get(split, [])) for split in SPLITS}
        for task, per_task in payload["splits"].items()
    }
    report.stats_table(
        by_task,
        run.ws.reports_dir,
        basename="dataset_stats",
        title="exported entries per split",
    )
    return {
        "total": bundle.manifest["total"],
        "bundle_sha256": bundle.manifest["bundle_sha256"],
        "counts": bundle.manifest["counts"],
    }


_STAGE_FNS = {
    "ingest": _stage_ingest,
    "dedup": _stage_dedup,
    "extract-docs": _stage_extract_docs,
    "gen-topics": _stage_gen_topics,
    "gen-data": _stage_gen_data,
    "judge": _stage_judge,
    "filter-rules": _stage_filter_rules,
    "assemble": _stage_assemble,
    "export": _stage_export,
}


def _marker_fresh(marker: Path, sha: str) -> dict | None:
    if not marker.exists():
        return None
    try:
        data = json.loads(marker.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    if data.get("config_sha256") != sha:
        return None
    return data


def run_pipeline(
    config: ForgeConfig,
    stages: Sequence[str] | None = None,
    *,
    force: bool = False,
    allow_pending: bool = False,
    session: requests.Session | None = None,
) -> list[StageResult]:
    """Run the requested stages (default: all) in dependency order.

    A completed stage whose marker matches the current config hash is
    skipped unless force is set.  The first failure stops the run;
    earlier results and partial outputs stay on disk.
    """
    names = list(stages) if stages is not None else list(STAGES)
    unknown = sorted(set(names) - set(STAGES))
    if unknown:
        raise PipelineError(f"unknown stages: {unknown}")
    names.sort(key=STAGES.index)

    ws = Workspace(config.workspace)
    ws.ensure()
    run = _Run(config, ws, session=session, allow_pending=allow_pending)
    results: list[StageResult] = []
    for name in names:
        marker = ws.marker(name)
        fresh = None if force else _marker_fresh(marker, config.sha256)
        if fresh is not None:
            results.append(StageResult(name, "skipped", fresh.get("summary", {})))
            continue
        log.info("stage %s starting", name)
        try:
            summary = _STAGE_FNS[name](run)
        except Exception as exc:  # stage boundary: report, stop downstream
            log.error("stage %s failed: %s", name, exc)
            results.append(StageResult(name, "failed", error=str(exc)))
            break
        marker.write_text(
            json.dumps(
                {
                    "stage": name,
                    "config_sha256": config.sha256,
                    "completed_at": time.time(),
                    "summary": summary,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n",
            encoding="utf-8",
        )
        results.append(StageResult(name, "ok", summary))
    return results


def run_eval(
    config: ForgeConfig,
    task_name: str,
    dataset_path: str | Path,
    endpoint: str | None = None,
    session: requests.Session | None = None,
) -> EvalReport:
    """Evaluate one dataset against a configured provider endpoint."""
    name = endpoint or config.eval.endpoint
    if not name:
        raise PipelineError("no eval endpoint configured")
    ws = Workspace(config.workspace)
    ws.ensure()
    run = _Run(config, ws, session=session)
    client = run.client(name)
    task = EvalTask(task=task_name, dataset_path=Path(dataset_path))
    if task_name == "mcq":
        result = run_mcq(client, task)
    else:
        embed = None
        if config.eval.embed_base_url:
            embed = EmbedClient(config.eval.embed_base_url, session=session)
        result = run_generation_task(client, task, embed=embed)
    result.protocol["config_sha256"] = config.sha256
    return result
