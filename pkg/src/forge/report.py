"""Delimited and graphical summaries of corpora, stores, and model evals.

Every render writes a CSV and a PNG with the same basename, so the
numbers stay greppable while the figure is ready to drop into a page.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")  # file output only, no display server
import matplotlib.pyplot as plt

__all__ = ["eval_table", "stats_table", "corpus_table", "write_csv"]

# columns in display order; absent metrics leave the cell empty
METRIC_COLUMNS = ("accuracy", "bleu4", "rougeL", "meteor", "map", "f1", "bertscore")

# metrics already on a 0..100 scale in reports
_PERCENT_METRICS = frozenset({"accuracy", "bleu4"})


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _as_report_dict(report) -> dict:
    return report.as_dict() if hasattr(report, "as_dict") else dict(report)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _save(fig, png_path: Path) -> None:
    png_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def eval_table(
    reports: Sequence, out_dir: str | Path, basename: str = "eval_table"
) -> tuple[Path, Path]:
    """Render a model x metric comparison as CSV plus a bar chart PNG.

    Accepts EvalReport objects or their as_dict form.  Bars share one
    0..100 scale: fraction-valued metrics are plotted x100 while the
    CSV keeps native scales.
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    dicts = [_as_report_dict(r) for r in reports]

    used = [m for m in METRIC_COLUMNS if any(m in d["metrics"] for d in dicts)]
    header = ["model", "task", "n_examples", "n_flagged", *used]
    rows = []
    for d in dicts:
        rows.append(
            [d["model_name"], d["task"], d["n_examples"], d["n_flagged"]]
            + [_fmt(d["metrics"].get(m)) for m in used]
        )
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{basename}.csv"
    png_path = out_dir / f"{basename}.png"
    write_csv(csv_path, header, rows)

    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(used)), 4.0))
    width = 0.8 / len(dicts)
    for i, d in enumerate(dicts):
        heights = []
        for m in used:
            value = d["metrics"].get(m)
            if value is None:
                heights.append(0.0)
            else:
                heights.append(value if m in _PERCENT_METRICS else value * 100.0)
        offsets = [x + i * width for x in range(len(used))]
        ax.bar(offsets, heights, width, label=f"{d['model_name']} ({d['task']})")
    ax.set_xticks([x + 0.4 - width / 2 for x in range(len(used))])
    ax.set_xticklabels(used)
    ax.set_ylabel("score (0-100)")
    ax.set_title("model comparison")
    ax.legend(fontsize="small")
    _save(fig, png_path)
    return csv_path, png_path


def stats_table(
    by_task: Mapping[str, Mapping[str, int]],
    out_dir: str | Path,
    basename: str = "dataset_stats",
    title: str = "entries by task and status",
) -> tuple[Path, Path]:
    """Render task x status (or task x split) counts as CSV plus PNG."""
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{basename}.csv"
    png_path = out_dir / f"{basename}.png"
    tasks = sorted(by_task)
    statuses = sorted({s for inner in by_task.values() for s in inner})
    rows = [
        [task, status, by_task[task].get(status, 0)]
        for task in tasks
        for status in statuses
    ]
    write_csv(csv_path, ["task", "status", "count"], rows)

    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * max(1, len(tasks))), 4.0))
    bottoms = [0] * len(tasks)
    for status in statuses:
        heights = [by_task[task].get(status, 0) for task in tasks]
        ax.bar(range(len(tasks)), heights, 0.6, bottom=bottoms, label=status)
        bottoms = [b + h for b, h in zip(bottoms, heights)]
    ax.set_xticks(range(len(tasks)))
    ax.set_xticklabels(tasks)
    ax.set_ylabel("entries")
    ax.set_title(title)
    if statuses:
        ax.legend(fontsize="small")
    _save(fig, png_path)
    return csv_path, png_path


def corpus_table(
    stats: Mapping, out_dir: str | Path, basename: str = "corpus_stats"
) -> tuple[Path, Path]:
    """Render flat corpus counters as key/value CSV plus a drop-reason PNG.

    Expects the shape corpus ingestion reports: scalar counters plus a
    drop_reasons mapping.
    """
    out_dir = Path(out_dir)
    csv_path = out_dir / f"{basename}.csv"
    png_path = out_dir / f"{basename}.png"
    rows = []
    for key in sorted(stats):
        value = stats[key]
        if isinstance(value, Mapping):
            for sub in sorted(value):
                rows.append([f"{key}.{sub}", value[sub]])
        else:
            rows.append([key, value])
    write_csv(csv_path, ["key", "value"], rows)

    bars = {"kept": stats.get("files_kept", 0)}
    for reason, count in sorted(dict(stats.get("drop_reasons", {})).items()):
        bars[reason] = count
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(bars)), 4.0))
    ax.bar(range(len(bars)), list(bars.values()), 0.6, color="#4878a8")
    ax.set_xticks(range(len(bars)))
    ax.set_xticklabels(list(bars), rotation=30, ha="right")
    ax.set_ylabel("files")
    ax.set_title("corpus filter outcomes")
    _save(fig, png_path)
    return csv_path, png_path
