"""Quality judging of generated entries by a scoring model.

A batch of entries is serialized after the quality prompt; the judge
replies with free-form reasoning that must end in a bracketed integer
list, one score per entry in order.  Batches whose reply cannot be
aligned fail atomically: no partial scores are kept.

Pairwise ranking presents two entries in randomized order (the
permutation is recorded on the verdict) so a judge with position bias
cannot systematically favor either input entry.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass

from .entries import InstructionEntry, with_status
from .synthgen import load_prompt

DEFAULT_MIN_SCORE = 7
DEFAULT_BATCH_SIZE = 10

_BRACKET_RE = re.compile(r"\[([^\[\]]*)\]")
_FINAL_TOKEN_RE = re.compile(r"\b(A|B|TIE)\b", re.IGNORECASE)


class JudgeError(Exception):
    """Judging failed for a whole batch."""


class BatchFailed(JudgeError):
    """The judge reply could not be aligned with the batch entries."""


@dataclass(frozen=True)
class JudgeScore:
    entry_id: str
    score: int
    judge_model: str
    rationale_text: str | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.score <= 10:
            raise ValueError(f"score {self.score} outside 1..10")


@dataclass(frozen=True)
class PairwiseVerdict:
    entry_a: str
    entry_b: str
    winner: str  # a | b | tie
    judge_model: str
    swapped: bool = False
    flagged: bool = False

    def __post_init__(self) -> None:
        if self.entry_a == self.entry_b:
            raise ValueError("pairwise verdict needs two distinct entries")
        if self.winner not in ("a", "b", "tie"):
            raise ValueError(f"unknown winner {self.winner!r}")


def parse_trailing_int_list(text: str) -> list[int] | None:
    """Last bracketed comma-separated integer list, or None.

    Bracketed spans that are not integer lists are ignored; the last
    integer list decides, and any element outside 1..10 voids it.
    """
    found: list[int] | None = None
    for match in _BRACKET_RE.finditer(text):
        parts = match.group(1).split(",")
        try:
            values = [int(part.strip()) for part in parts]
        except ValueError:
            continue
        if values:
            found = values
    if found is None or any(not 1 <= v <= 10 for v in found):
        return None
    return found


def _entry_payload(entry: InstructionEntry) -> dict:
    if entry.task == "summarization":
        return {"source": entry.source, "summary": entry.summary}
    if entry.task == "mcq":
        return {
            "question": entry.question,
            "options": entry.options,
            "answer": entry.answer,
        }
    return {"question": entry.question, "answer": entry.answer}


def _serialize_batch(entries: list[InstructionEntry]) -> str:
    lines = []
    for i, entry in enumerate(entries, start=1):
        lines.append(f"{i}. {json.dumps(_entry_payload(entry), ensure_ascii=False)}")
    return "\n".join(lines)


def score_batch(entries: list[InstructionEntry], provider) -> list[JudgeScore]:
    """Score one batch; raises BatchFailed on any alignment problem."""
    if not entries:
        raise ValueError("score_batch needs a non-empty batch")
    prompt = load_prompt("quality_judge.txt") + "\n\n" + _serialize_batch(entries)
    reply = provider.complete(
        [{"role": "user", "content": prompt}], temperature=0.0
    )
    values = parse_trailing_int_list(reply)
    if values is None:
        raise BatchFailed(f"no trailing score list in judge reply: {reply[-120:]!r}")
    if len(values) != len(entries):
        raise BatchFailed(
            f"judge returned {len(values)} scores for {len(entries)} entries"
        )
    model = provider.config.model_id
    return [
        JudgeScore(entry_id=entry.id, score=score, judge_model=model)
        for entry, score in zip(entries, values)
    ]


def pairwise_rank(
    a: InstructionEntry,
    b: InstructionEntry,
    provider,
    *,
    rng: random.Random | None = None,
    swap: bool | None = None,
) -> PairwiseVerdict:
    """Compare two same-task entries with randomized presentation.

    The reply's final A/B/TIE token is read back through the recorded
    permutation; an unparseable reply counts as a flagged tie.
    """
    if a.task != b.task:
        raise ValueError("pairwise ranking needs entries of the same task")
    if swap is None:
        swap = (rng or random).random() < 0.5
    first, second = (b, a) if swap else (a, b)
    prompt = (
        load_prompt("pairwise_judge.txt")
        + "\n\nEntry A:\n"
        + json.dumps(_entry_payload(first), ensure_ascii=False)
        + "\n\nEntry B:\n"
        + json.dumps(_entry_payload(second), ensure_ascii=False)
    )
    reply = provider.complete(
        [{"role": "user", "content": prompt}], temperature=0.0
    )
    tokens = _FINAL_TOKEN_RE.findall(reply)
    model = provider.config.model_id
    if not tokens:
        return PairwiseVerdict(a.id, b.id, "tie", model, swapped=swap, flagged=True)
    token = tokens[-1].upper()
    if token == "TIE":
        winner = "tie"
    elif token == "A":
        winner = "b" if swap else "a"
    else:
        winner = "a" if swap else "b"
    return PairwiseVerdict(a.id, b.id, winner, model, swapped=swap)


def apply_score_filter(
    entries: list[InstructionEntry],
    scores: list[JudgeScore],
    min_score: int = DEFAULT_MIN_SCORE,
) -> tuple[list[InstructionEntry], list[InstructionEntry]]:
    """Split entries into (kept, rejected) by judge score.

    Every entry must be scored; rejected entries come back with
    status=deleted and reason=low_judge_score, kept ones carry their
    score unchanged in status.
    """
    by_id = {score.entry_id: score.score for score in scores}
    missing = [entry.id for entry in entries if entry.id not in by_id]
    if missing:
        raise JudgeError(f"entries missing judge scores: {missing}")
    kept, rejected = [], []
    for entry in entries:
        entry.judge_score = by_id[entry.id]
        if entry.judge_score >= min_score:
            kept.append(entry)
        else:
            rejected.append(with_status(entry, "deleted", "low_judge_score"))
    return kept, rejected
