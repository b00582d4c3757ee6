"""Command line front end: pipeline stages, review server, and side tools.

Every subcommand takes -c/--config (default forge.yaml) and --json for
machine-readable output.  Stage subcommands honor completion markers;
--force reruns a stage whose marker is still fresh.
"""

from __future__ import annotations

import json as jsonlib
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import report as report_mod
from .config import ConfigError, ForgeConfig, load_config
from .evalharness import EVAL_TEMPLATES, EvalReport
from .pipeline import STAGES, PipelineError, Workspace, run_eval, run_pipeline
from .reviewapi import create_app
from .surgery import depth_upscale, load_manifest, plan_upscale, verify_upscaled

_CONFIG_OPT = click.option(
    "-c",
    "--config",
    "config_path",
    default="forge.yaml",
    show_default=True,
    type=click.Path(),
    help="Path to the run config file.",
)
_JSON_OPT = click.option(
    "--json", "as_json", is_flag=True, help="Emit machine-readable JSON."
)


def _common(fn):
    return _CONFIG_OPT(_JSON_OPT(fn))


def _load(config_path: str) -> ForgeConfig:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        raise click.ClickException(str(exc)) from exc


def _echo_json(payload) -> None:
    click.echo(jsonlib.dumps(payload, indent=2, sort_keys=True))


def _run_stages(
    cfg: ForgeConfig,
    stages: list[str],
    as_json: bool,
    force: bool = False,
    allow_pending: bool = False,
) -> None:
    try:
        results = run_pipeline(
            cfg, stages, force=force, allow_pending=allow_pending
        )
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    payload = [
        {"stage": r.stage, "status": r.status, "summary": r.summary, "error": r.error}
        for r in results
    ]
    if as_json:
        _echo_json(payload)
    else:
        for r in results:
            if r.status == "failed":
                click.echo(f"{r.stage}: failed ({r.error})")
            else:
                brief = " ".join(
                    f"{k}={v}" for k, v in r.summary.items() if not isinstance(v, dict)
                )
                click.echo(f"{r.stage}: {r.status} {brief}".rstrip())
    if any(r.status == "failed" for r in results):
        sys.exit(1)


def _stage_command(stage: str, help_text: str):
    @main.command(name=stage, help=help_text)
    @_common
    @click.option("--force", is_flag=True, help="Rerun even if already completed.")
    def _cmd(config_path, as_json, force):
        _run_stages(_load(config_path), [stage], as_json, force=force)

    return _cmd


@click.group()
@click.version_option(package_name="mainframe-forge")
def main():
    """Corpus, synthetic-data, review, up-scaling, and eval toolkit."""


@main.command()
@_common
@click.option(
    "--source-dir",
    type=click.Path(exists=True, file_okay=False),
    help="Ad-hoc override for ingest.source_dir (not part of the config hash).",
)
@click.option("--force", is_flag=True, help="Rerun even if already completed.")
def ingest(config_path, as_json, source_dir, force):
    """Walk the source tree, filter files, and write the corpus manifest."""
    cfg = _load(config_path)
    if source_dir:
        cfg = replace(cfg, ingest=replace(cfg.ingest, source_dir=Path(source_dir)))
    _run_stages(cfg, ["ingest"], as_json, force=force)


@main.command()
@_common
def stats(config_path, as_json):
    """Summarize the corpus and entry store; render CSV and PNG reports."""
    cfg = _load(config_path)
    ws = Workspace(cfg.workspace)
    payload: dict = {"reports": []}
    lines: list[str] = []

    if ws.corpus_stats.exists():
        corpus = jsonlib.loads(ws.corpus_stats.read_text(encoding="utf-8"))
        payload["corpus"] = corpus
        csv_path, png_path = report_mod.corpus_table(corpus, ws.reports_dir)
        payload["reports"] += [str(csv_path), str(png_path)]
        lines.append(
            f"corpus: {corpus['files_kept']}/{corpus['files_total']} files kept,"
            f" {corpus['loc_total']} lines, ~{corpus['tokens_total']} tokens"
        )
        lines.append(f"wrote {csv_path} and {png_path}")

    if ws.store_path.exists():
        with ws.open_store() as store:
            counts = store.counts()
        payload["entries"] = counts
        csv_path, png_path = report_mod.stats_table(
            counts["by_task"], ws.reports_dir, basename="entry_stats"
        )
        payload["reports"] += [str(csv_path), str(png_path)]
        lines.append(
            "entries: "
            + ", ".join(f"{k}={v}" for k, v in sorted(counts["by_status"].items()))
        )
        lines.append(f"wrote {csv_path} and {png_path}")

    if not payload.get("corpus") and not payload.get("entries"):
        raise click.ClickException(
            f"nothing to report under {ws.root}; run ingest or gen-data first"
        )
    if as_json:
        _echo_json(payload)
    else:
        for line in lines:
            click.echo(line)


_stage_command("dedup", "Collapse near-duplicate corpus files.")
_stage_command("extract-docs", "Extract main text from kept documentation pages.")
_stage_command("gen-topics", "Ask a generator model for domain sub-topics.")
_stage_command("gen-data", "Load seeds and expand topics/seeds into new entries.")
_stage_command("judge", "Score pending entries and drop those below min_score.")
_stage_command("filter-rules", "Apply deterministic content rules to pending entries.")
_stage_command("export", "Write the benchmark bundle from assembled splits.")


@main.command()
@_common
@click.option("--force", is_flag=True, help="Rerun even if already completed.")
@click.option(
    "--allow-pending",
    is_flag=True,
    help="Assemble even while entries still await review.",
)
def assemble(config_path, as_json, force, allow_pending):
    """Split finalized entries into train/validation/test."""
    _run_stages(
        _load(config_path),
        ["assemble"],
        as_json,
        force=force,
        allow_pending=allow_pending,
    )


@main.command()
@_common
@click.option("--stage", "stages", multiple=True, type=click.Choice(STAGES))
@click.option("--force", is_flag=True, help="Rerun completed stages too.")
@click.option(
    "--allow-pending",
    is_flag=True,
    help="Assemble even while entries still await review.",
)
def run(config_path, as_json, stages, force, allow_pending):
    """Run the whole pipeline, or just the chosen stages, in order."""
    _run_stages(
        _load(config_path),
        list(stages) or list(STAGES),
        as_json,
        force=force,
        allow_pending=allow_pending,
    )


@main.command("review-serve")
@_common
@click.option("--host", default=None, help="Bind address (default from config).")
@click.option("--port", type=int, default=None, help="Port (default from config).")
def review_serve(config_path, as_json, host, port):
    """Serve the review API (and web UI when configured) over HTTP."""
    import uvicorn

    cfg = _load(config_path)
    ws = Workspace(cfg.workspace)
    if not ws.store_path.exists():
        raise click.ClickException(
            f"no entry store at {ws.store_path}; run gen-data first"
        )
    store = ws.open_store(lease_s=cfg.review.lease_seconds)
    static = cfg.review.static_dir
    app = create_app(store, static_dir=str(static) if static else None)
    bind_host = host or cfg.review.host
    bind_port = port or cfg.review.port
    if as_json:
        _echo_json({"host": bind_host, "port": bind_port})
    else:
        click.echo(f"review API on http://{bind_host}:{bind_port}")
    uvicorn.run(app, host=bind_host, port=bind_port, log_level="warning")


@main.command()
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.option("--m", "m", type=int, required=True, help="Blocks copied twice at each end.")
@click.option("--out", "dst", type=click.Path(), required=True, help="Destination checkpoint.")
@_JSON_OPT
def upscale(src, m, dst, as_json):
    """Depth up-scale a checkpoint by duplicating edge layer blocks."""
    manifest = load_manifest(src)
    try:
        plan = plan_upscale(manifest.n_layers, m)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    depth_upscale(src, plan, dst)
    payload = {
        "src": src,
        "dst": dst,
        "n_layers": plan.n,
        "m": plan.m,
        "out_layers": plan.s,
        "provenance": list(plan.provenance),
    }
    if as_json:
        _echo_json(payload)
    else:
        click.echo(f"{plan.n} layers -> {plan.s} layers (m={plan.m})")
        click.echo(f"wrote {dst}")


@main.command("upscale-verify")
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.argument("dst", type=click.Path(exists=True, dir_okay=False))
@click.option("--m", "m", type=int, required=True, help="Blocks copied twice at each end.")
@_JSON_OPT
def upscale_verify(src, dst, m, as_json):
    """Check an up-scaled checkpoint byte-for-byte against its source."""
    violations = verify_upscaled(src, dst, m)
    if as_json:
        _echo_json({"ok": not violations, "violations": violations})
    elif violations:
        for v in violations:
            click.echo(v)
    else:
        click.echo("ok: every layer matches its source bytes")
    if violations:
        sys.exit(1)


@main.command("eval")
@_common
@click.option("--task", required=True, type=click.Choice(sorted(EVAL_TEMPLATES)))
@click.option(
    "--dataset", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--endpoint", default=None, help="Provider name (default: eval.endpoint).")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(config_path, as_json, task, dataset, endpoint, out_path):
    """Run one dataset against a model endpoint and save the report."""
    cfg = _load(config_path)
    ws = Workspace(cfg.workspace)
    try:
        result = run_eval(cfg, task, dataset, endpoint=endpoint)
    except PipelineError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(out_path) if out_path else ws.reports_dir / f"eval_{task}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    result.save(out)
    csv_path, png_path = report_mod.eval_table(
        [result], ws.reports_dir, basename=f"eval_{task}"
    )
    payload = {
        "report": str(out),
        "csv": str(csv_path),
        "png": str(png_path),
        "model": result.model_name,
        "metrics": result.metrics,
        "n_examples": result.n_examples,
        "n_flagged": result.n_flagged,
    }
    if as_json:
        _echo_json(payload)
    else:
        metrics = ", ".join(
            f"{k}={'n/a' if v is None else round(v, 4)}"
            for k, v in sorted(result.metrics.items())
        )
        click.echo(f"{result.model_name} on {task}: {metrics}")
        click.echo(f"wrote {out}, {csv_path}, {png_path}")


@main.command("eval-table")
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--basename", default="eval_table", show_default=True)
@_JSON_OPT
def eval_table_cmd(reports, out_dir, basename, as_json):
    """Tabulate saved eval reports side by side as CSV plus a PNG chart."""
    loaded = [EvalReport.load(p) for p in reports]
    csv_path, png_path = report_mod.eval_table(loaded, out_dir, basename=basename)
    if as_json:
        _echo_json({"csv": str(csv_path), "png": str(png_path)})
    else:
        click.echo(f"wrote {csv_path} and {png_path}")


if __name__ == "__main__":
    main()
