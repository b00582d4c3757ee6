"""Synthetic instruction-data generation from seeds and sub-topics.

Flow: expert seed entries load from JSON Lines; a provider proposes
domain sub-topics; each sub-topic or summarization seed expands into
new entries through prompt templates shipped as plain-text files with
[sub-topic] / [source] / [summary] / [count] placeholders.  Provider
replies are free-form text, so parsing is defensive: the first
well-formed JSON array found anywhere in the reply (code fences
included) supplies the records, malformed records are skipped and
logged, and a reply without a usable array yields zero entries rather
than an abort.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .entries import EntryError, InstructionEntry, Provenance, qa_entry
from .entries import entry_from_record, entry_to_record, mcq_entry
from .entries import summarization_entry

log = logging.getLogger(__name__)

PARENT_DOMAIN = "Mainframe and COBOL"
DEFAULT_ENTRIES_PER_CALL = 10


@dataclass(frozen=True)
class SubTopic:
    name: str
    parent_domain: str = PARENT_DOMAIN

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("sub-topic name must be non-empty")


def load_prompt(name: str) -> str:
    """Read one prompt template shipped with the package."""
    return (
        resources.files("forge").joinpath("prompts", name).read_text(encoding="utf-8")
    )


def render_prompt(template: str, **placeholders: str) -> str:
    """Substitute [key] markers; unknown markers are left alone."""
    for key, value in placeholders.items():
        template = template.replace(f"[{key}]", value)
    return template


def parse_llm_json_list(raw: str) -> list[dict]:
    """Extract the object elements of the first JSON array in raw text.

    Total function: scans every '[' for a well-formed array (which
    covers arrays inside code fences), returns [] when none parses.
    Non-object elements of the found array are dropped.
    """
    decoder = json.JSONDecoder()
    for pos, ch in enumerate(raw):
        if ch != "[":
            continue
        try:
            value, _ = decoder.raw_decode(raw, pos)
        except ValueError:
            continue
        if isinstance(value, list):
            return [item for item in value if isinstance(item, dict)]
    log.debug("no JSON array found in provider reply: %r", raw[:200])
    return []


def load_seed(path: Path) -> list[InstructionEntry]:
    """Load expert seed entries from JSON Lines, one record per line."""
    entries: list[InstructionEntry] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                record.setdefault("provenance", "seed")
                if record["provenance"] != "seed":
                    raise EntryError("seed file entries must have provenance=seed")
                entry = entry_from_record(record)
            except (ValueError, EntryError) as exc:
                raise EntryError(f"{path}, line {lineno}: {exc}") from exc
            if entry.id in seen:
                raise EntryError(f"{path}, line {lineno}: duplicate id {entry.id}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def generate_subtopics(
    provider,
    count_target: int,
    *,
    out_path: Path | None = None,
    batch_size: int = 50,
    max_rounds: int = 10,
) -> list[SubTopic]:
    """Ask the provider for sub-topics until count_target are collected.

    Dedup is case-insensitive.  Rounds that contribute nothing new end
    the loop early, so a shortfall is reported (warning log plus a
    short return list) instead of spinning forever.
    """
    topics: list[SubTopic] = []
    seen: set[str] = set()
    if count_target > 0:
        template = load_prompt("topic_gen.txt")
        for _ in range(max_rounds):
            want = min(batch_size, count_target - len(topics))
            prompt = render_prompt(template, count=str(want))
            reply = provider.complete([{"role": "user", "content": prompt}])
            added = 0
            for record in parse_llm_json_list(reply):
                name = str(record.get("name", "")).strip()
                if not name or name.lower() in seen:
                    continue
                seen.add(name.lower())
                topics.append(SubTopic(name))
                added += 1
            if len(topics) >= count_target or added == 0:
                break
        if len(topics) < count_target:
            log.warning(
                "sub-topic shortfall: wanted %d, collected %d",
                count_target,
                len(topics),
            )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            for topic in topics:
                fh.write(
                    json.dumps(
                        {"name": topic.name, "parent_domain": topic.parent_domain}
                    )
                    + "\n"
                )
    return topics


def load_subtopics(path: Path) -> list[SubTopic]:
    topics = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                record = json.loads(line)
                topics.append(
                    SubTopic(record["name"], record.get("parent_domain", PARENT_DOMAIN))
                )
    return topics


def _generated(provider, sub_topic: str | None = None) -> Provenance:
    return Provenance(
        "generated", model_name=provider.config.model_id, sub_topic=sub_topic
    )


def generate_from_subtopic(
    topic: SubTopic,
    provider,
    *,
    max_entries: int = DEFAULT_ENTRIES_PER_CALL,
) -> list[InstructionEntry]:
    """Expand one sub-topic into pending QA entries."""
    prompt = render_prompt(load_prompt("subtopic_qa.txt"), **{"sub-topic": topic.name})
    reply = provider.complete([{"role": "user", "content": prompt}])
    provenance = _generated(provider, topic.name)
    entries = []
    for record in parse_llm_json_list(reply)[:max_entries]:
        try:
            entries.append(
                qa_entry(record.get("question"), record.get("answer"), provenance)
            )
        except EntryError as exc:
            log.info("skipping malformed qa record for %s: %s", topic.name, exc)
    return entries


def generate_mcq_from_subtopic(
    topic: SubTopic,
    provider,
    *,
    max_entries: int = DEFAULT_ENTRIES_PER_CALL,
) -> list[InstructionEntry]:
    """Expand one sub-topic into pending MCQ entries."""
    prompt = render_prompt(load_prompt("mcq_gen.txt"), **{"sub-topic": topic.name})
    reply = provider.complete([{"role": "user", "content": prompt}])
    provenance = _generated(provider, topic.name)
    entries = []
    for record in parse_llm_json_list(reply)[:max_entries]:
        try:
            entries.append(
                mcq_entry(
                    record.get("question"),
                    record.get("options") or {},
                    record.get("answer"),
                    provenance,
                )
            )
        except (ValueError, TypeError) as exc:
            log.info("skipping malformed mcq record for %s: %s", topic.name, exc)
    return entries


def generate_from_seed(
    seed: InstructionEntry,
    provider,
    *,
    max_entries: int = DEFAULT_ENTRIES_PER_CALL,
) -> list[InstructionEntry]:
    """Expand one summarization seed into pending source/summary pairs.

    Pairs textually identical to the seed are skipped as trivial
    copies.
    """
    if seed.task != "summarization":
        raise ValueError("seed expansion needs a summarization entry")
    prompt = render_prompt(
        load_prompt("seed_expand.txt"),
        source=seed.source or "",
        summary=seed.summary or "",
    )
    reply = provider.complete([{"role": "user", "content": prompt}])
    provenance = _generated(provider)
    entries = []
    for record in parse_llm_json_list(reply)[:max_entries]:
        source = record.get("source")
        summary = record.get("summary")
        if source == seed.source and summary == seed.summary:
            log.info("skipping verbatim copy of seed %s", seed.id)
            continue
        try:
            entries.append(summarization_entry(source, summary, provenance))
        except EntryError as exc:
            log.info("skipping malformed summarization record: %s", exc)
    return entries


def write_entries(entries: Iterable[InstructionEntry], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry_to_record(entry), ensure_ascii=False) + "\n")
