"""Rule-based filtering, dataset splitting, and benchmark export.

Filters run before human review and mark failures deleted with the
rule name as the reason.  Splitting shuffles deterministically by
hashing seed + entry id, so membership is independent of input order
and reproducible across runs.  Export writes one JSON Lines file per
task and split plus a manifest of counts and content hashes; the test
split is the benchmark set.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .entries import (
    OPTION_LABELS,
    TASKS,
    InstructionEntry,
)
from .textutil import content_id, hash64, normalize_ws

SPLITS = ("train", "validation", "test")

# Any COBOL division header, a section header, or a sentence-initial
# paragraph label ends up matching; plain English prose does not.
DEFAULT_COBOL_MARKER = (
    r"\b(IDENTIFICATION|ENVIRONMENT|DATA|PROCEDURE)\s+DIVISION\b"
    r"|\b[A-Z][A-Z0-9-]*\s+SECTION\s*\."
    r"|(?m:^\s*[A-Z][A-Z0-9-]+\s*\.)"
)

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RuleConfig:
    min_field_chars: int = 2
    max_field_chars: int = 20000
    cobol_marker_regex: str = DEFAULT_COBOL_MARKER

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RuleConfig":
        known = {f: raw[f] for f in cls.__dataclass_fields__ if f in raw}
        return cls(**known)


def _text_fields(entry: InstructionEntry) -> list[tuple[str, str]]:
    """Free-text fields whose length the bounds rule applies to."""
    fields = []
    if entry.question is not None:
        fields.append(("question", entry.question))
    if entry.options is not None:
        for label in sorted(entry.options):
            fields.append((f"option {label}", entry.options[label]))
    if entry.task == "qa" and entry.answer is not None:
        fields.append(("answer", entry.answer))
    if entry.source is not None:
        fields.append(("source", entry.source))
    if entry.summary is not None:
        fields.append(("summary", entry.summary))
    return fields


def _normalized_text_hash(entry: InstructionEntry) -> str:
    parts = [entry.task]
    parts.extend(
        normalize_ws(value).lower() for _, value in _text_fields(entry)
    )
    if entry.task == "mcq":
        parts.append(str(entry.answer))
    return content_id("\x1f".join(parts))


def _violated_rule(entry: InstructionEntry, rules: RuleConfig, marker: re.Pattern) -> str | None:
    for _, value in _text_fields(entry):
        if len(value) < rules.min_field_chars:
            return "too_short"
        if len(value) > rules.max_field_chars:
            return "too_long"
    if entry.task == "mcq":
        if (
            not isinstance(entry.options, dict)
            or sorted(entry.options) != sorted(OPTION_LABELS)
            or entry.answer not in OPTION_LABELS
        ):
            return "invalid_label"
    if entry.task == "summarization":
        if not marker.search(entry.source or ""):
            return "not_cobol"
    return None


def apply_rule_filters(
    entries: Sequence[InstructionEntry],
    rules: RuleConfig | None = None,
) -> tuple[list[InstructionEntry], list[InstructionEntry]]:
    """Split entries into (kept, rejected-with-reason).

    Rules, first violation wins: exact duplicate of an earlier entry
    (normalized text hash), field length bounds, MCQ label validity,
    and a COBOL marker requirement on summarization sources.  Rejected
    entries come back status=deleted with the rule name as reason.
    """
    rules = rules or RuleConfig()
    marker = re.compile(rules.cobol_marker_regex)
    seen: set[str] = set()
    kept: list[InstructionEntry] = []
    rejected: list[InstructionEntry] = []
    for entry in entries:
        text_hash = _normalized_text_hash(entry)
        if text_hash in seen:
            reason = "duplicate"
        else:
            seen.add(text_hash)
            reason = _violated_rule(entry, rules, marker)
        if reason is not None:
            # no revalidation: rule-rejected entries may be invalid
            rejected.append(replace(entry, status="deleted", status_reason=reason))
        else:
            kept.append(entry)
    return kept, rejected


@dataclass(frozen=True)
class SplitSpec:
    """Either one global fraction triple or explicit per-task counts."""

    fractions: tuple[float, float, float] | None = None
    counts: Mapping[str, tuple[int, int, int]] | None = None
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if (self.fractions is None) == (self.counts is None):
            raise ValueError("give exactly one of fractions or counts")
        if self.fractions is not None:
            if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
                raise ValueError("fractions must be three non-negative numbers")
            if abs(sum(self.fractions) - 1.0) > 1e-9:
                raise ValueError("fractions must sum to 1")
        if self.counts is not None:
            for task, triple in self.counts.items():
                if task not in TASKS:
                    raise ValueError(f"unknown task {task!r} in counts")
                if len(triple) != 3 or any(n < 0 for n in triple):
                    raise ValueError("counts must be three non-negative integers")


def _shuffle_key(seed: int, entry_id: str) -> int:
    return hash64(entry_id, salt=seed.to_bytes(8, "little"))


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def split_dataset(
    entries: Iterable[InstructionEntry], spec: SplitSpec
) -> dict[str, dict[str, list[InstructionEntry]]]:
    """Partition finalized entries into train/validation/test per task.

    Membership depends only on (seed, entry id), never on input order.
    With fractions, train and validation sizes round half up and test
    takes the remainder; with counts, sizes must cover each per-task
    total exactly, and a task absent from counts goes entirely to
    train.
    """
    by_task: dict[str, list[InstructionEntry]] = {task: [] for task in TASKS}
    for entry in entries:
        if entry.status not in ("accepted", "fixed"):
            raise ValueError(
                f"entry {entry.id} is {entry.status}; splits take finalized entries"
            )
        by_task[entry.task].append(entry)
    result: dict[str, dict[str, list[InstructionEntry]]] = {}
    for task in TASKS:
        ordered = sorted(
            by_task[task], key=lambda e: (_shuffle_key(spec.shuffle_seed, e.id), e.id)
        )
        total = len(ordered)
        if spec.counts is not None:
            n_train, n_val, n_test = spec.counts.get(task, (total, 0, 0))
            if n_train + n_val + n_test != total:
                raise ValueError(
                    f"{task}: counts {n_train}+{n_val}+{n_test} != total {total}"
                )
        else:
            f_train, f_val, _ = spec.fractions
            n_train = min(total, _round_half_up(total * f_train))
            n_val = min(total - n_train, _round_half_up(total * f_val))
        result[task] = {
            "train": ordered[:n_train],
            "validation": ordered[n_train : n_train + n_val],
            "test": ordered[n_train + n_val :],
        }
    return result


def _export_record(entry: InstructionEntry) -> dict:
    if entry.task == "mcq":
        return {
            "id": entry.id,
            "question": entry.question,
            "options": {label: entry.options[label] for label in OPTION_LABELS},
            "answer": entry.answer,
        }
    if entry.task == "qa":
        return {"id": entry.id, "question": entry.question, "answer": entry.answer}
    return {"id": entry.id, "source": entry.source, "summary": entry.summary}


@dataclass(frozen=True)
class BenchmarkBundle:
    root: Path
    manifest: dict

    @property
    def bundle_sha256(self) -> str:
        return self.manifest["bundle_sha256"]


def export_benchmark(
    splits: Mapping[str, Mapping[str, Sequence[InstructionEntry]]],
    out_dir: str | Path,
) -> BenchmarkBundle:
    """Write nine JSON Lines files plus a manifest of counts and hashes.

    Files are written before the manifest, so a write failure leaves no
    manifest behind and the bundle reads as absent.  Identical inputs
    produce byte-identical files and therefore an identical bundle
    hash; the test split is the benchmark set.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, dict] = {}
    counts: dict[str, dict[str, int]] = {}
    for task in TASKS:
        counts[task] = {}
        for split in SPLITS:
            entries = splits.get(task, {}).get(split, [])
            name = f"{task}_{split}.jsonl"
            payload = "".join(
                json.dumps(_export_record(entry), ensure_ascii=False) + "\n"
                for entry in entries
            ).encode("utf-8")
            (out_dir / name).write_bytes(payload)
            files[name] = {
                "count": len(entries),
                "sha256": hashlib.sha256(payload).hexdigest(),
            }
            counts[task][split] = len(entries)
    digest = hashlib.sha256(
        "\n".join(f"{name} {files[name]['sha256']}" for name in sorted(files)).encode()
    ).hexdigest()
    manifest = {
        "counts": counts,
        "total": sum(sum(per.values()) for per in counts.values()),
        "files": files,
        "bundle_sha256": digest,
    }
    (out_dir / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return BenchmarkBundle(root=out_dir, manifest=manifest)


def load_bundle(out_dir: str | Path) -> dict[tuple[str, str], list[dict]]:
    """Read an exported bundle back, verifying manifest counts."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
    data: dict[tuple[str, str], list[dict]] = {}
    for task in TASKS:
        for split in SPLITS:
            name = f"{task}_{split}.jsonl"
            lines = (out_dir / name).read_text(encoding="utf-8").splitlines()
            records = [json.loads(line) for line in lines if line]
            if len(records) != manifest["files"][name]["count"]:
                raise ValueError(f"{name}: line count disagrees with manifest")
            data[(task, split)] = records
    return data
