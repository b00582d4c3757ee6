"""Zero-shot benchmark evaluation against a chat-completion endpoint.

Each example is prompted individually at temperature 0; MCQ replies go
through extract_choice, generation replies are scored token-wise with
the metric suite.  Endpoint failures flag the example and score it as
wrong (MCQ) or 0 (generation) rather than dropping it, so headline
numbers never silently shrink their denominator.

Reports are self-contained: per-example records carry everything
needed to recompute the aggregates, and the prompt template hash pins
the protocol.  MAP and token F1 are harness-defined rules, flagged as
such in the report.  BERTScore needs an embedding endpoint and reports
null (unavailable) without one.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Callable, Mapping, Sequence

import requests

from . import metrics as m
from .entries import OPTION_LABELS
from .providers import ProviderError
from .synthgen import load_prompt, render_prompt
from .textutil import tokenize

log = logging.getLogger(__name__)

GENERATION_METRICS = ("map", "f1", "bertscore", "rougeL", "meteor", "bleu4")
MCQ_METRICS = ("accuracy",)
HARNESS_DEFINED = ("map", "f1")

EVAL_TEMPLATES = {
    "mcq": "eval_mcq.txt",
    "qa": "eval_qa.txt",
    "summarization": "eval_summ.txt",
}

_METRIC_FNS: Mapping[str, Callable] = {
    "map": m.map_score,
    "f1": m.token_f1,
    "rougeL": m.rouge_l,
    "meteor": m.meteor,
    "bleu4": m.bleu4,
}

_CHOICE_RE = re.compile(r"\b([A-D])\b")
_ANSWER_IS_RE = re.compile(r"answer\s+is\s*:?\s*\(?([a-d])\)?", re.IGNORECASE)


class EvalError(Exception):
    """The evaluation run cannot proceed (bad dataset or task)."""


@dataclass(frozen=True)
class EvalTask:
    task: str  # mcq | qa | summarization
    dataset_path: Path
    prompt_template: str | None = None  # None: packaged default for the task
    metrics: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.task not in EVAL_TEMPLATES:
            raise EvalError(f"unknown task {self.task!r}")
        allowed = MCQ_METRICS if self.task == "mcq" else GENERATION_METRICS
        chosen = self.metrics or allowed
        bad = set(chosen) - set(allowed)
        if bad:
            raise EvalError(f"metrics {sorted(bad)} not valid for task {self.task}")
        object.__setattr__(self, "metrics", tuple(chosen))


@dataclass
class EvalReport:
    model_name: str
    task: str
    metrics: dict
    protocol: dict
    examples: list[dict] = field(default_factory=list)

    @property
    def n_examples(self) -> int:
        return len(self.examples)

    @property
    def n_flagged(self) -> int:
        return sum(1 for ex in self.examples if ex["flagged"])

    def as_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "task": self.task,
            "n_examples": self.n_examples,
            "n_flagged": self.n_flagged,
            "metrics": self.metrics,
            "protocol": self.protocol,
            "examples": self.examples,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.as_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "EvalReport":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return EvalReport(
            model_name=raw["model_name"],
            task=raw["task"],
            metrics=raw["metrics"],
            protocol=raw["protocol"],
            examples=raw["examples"],
        )


def extract_choice(raw_output: str) -> str | None:
    """Pull an A-D label out of a free-form reply.

    Priority: first standalone uppercase letter A-D, then an
    "answer is x" phrase in any case.  None when neither matches.
    """
    match = _CHOICE_RE.search(raw_output)
    if match:
        return match.group(1)
    match = _ANSWER_IS_RE.search(raw_output)
    if match:
        return match.group(1).upper()
    return None


def load_eval_dataset(path: str | Path, task: str) -> list[dict]:
    """Read a benchmark JSONL file, checking the task's schema."""
    required = {
        "mcq": ("id", "question", "options", "answer"),
        "qa": ("id", "question", "answer"),
        "summarization": ("id", "source", "summary"),
    }[task]
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            missing = [name for name in required if name not in record]
            if missing:
                raise EvalError(f"{path}, line {lineno}: missing fields {missing}")
            records.append(record)
    return records


def _template_for(task: EvalTask) -> str:
    if task.prompt_template is not None:
        return task.prompt_template
    return load_prompt(EVAL_TEMPLATES[task.task])


def _protocol(template: str) -> dict:
    return {
        "temperature": 0.0,
        "zero_shot": True,
        "template_sha256": hashlib.sha256(template.encode("utf-8")).hexdigest(),
        "harness_defined_metrics": list(HARNESS_DEFINED),
    }


def _render_options(options: Mapping[str, str]) -> str:
    return "\n".join(f"{label}. {options[label]}" for label in OPTION_LABELS)


def _ask(endpoint, prompt: str) -> tuple[str | None, bool]:
    """One zero-shot completion; a provider failure flags the example."""
    try:
        return endpoint.complete(
            [{"role": "user", "content": prompt}], temperature=0.0
        ), False
    except ProviderError:
        return None, True


def mcq_accuracy(examples: Sequence[Mapping]) -> float:
    """Percent of examples whose extracted label equals gold."""
    if not examples:
        return 0.0
    return 100.0 * sum(1 for ex in examples if ex["correct"]) / len(examples)


def run_mcq(endpoint, task: EvalTask) -> EvalReport:
    if task.task != "mcq":
        raise EvalError("run_mcq needs an mcq task")
    template = _template_for(task)
    records = load_eval_dataset(task.dataset_path, "mcq")
    examples = []
    for record in records:
        prompt = render_prompt(
            template,
            question=record["question"],
            options=_render_options(record["options"]),
        )
        raw, flagged = _ask(endpoint, prompt)
        extracted = extract_choice(raw) if raw is not None else None
        examples.append(
            {
                "id": record["id"],
                "prompt": prompt,
                "raw_output": raw,
                "extracted": extracted,
                "gold": record["answer"],
                "correct": extracted == record["answer"],
                "flagged": flagged or extracted is None,
            }
        )
    return EvalReport(
        model_name=endpoint.config.model_id,
        task="mcq",
        metrics={"accuracy": mcq_accuracy(examples)},
        protocol=_protocol(template),
        examples=examples,
    )


def generation_aggregates(
    metric_names: Sequence[str], examples: Sequence[Mapping]
) -> dict:
    """Mean per metric; bertscore stays null while unavailable."""
    aggregates: dict = {}
    for name in metric_names:
        values = [ex["values"].get(name) for ex in examples]
        if name == "bertscore" and any(v is None for v in values):
            aggregates[name] = None
        else:
            aggregates[name] = fmean(values) if values else 0.0
    return aggregates


def _score_generation(
    metric_names: Sequence[str],
    hyp_text: str | None,
    ref_text: str,
    embed,
) -> dict:
    hyp = tokenize(hyp_text) if hyp_text else []
    ref = tokenize(ref_text)
    values: dict = {}
    for name in metric_names:
        if name == "bertscore":
            try:
                values[name] = m.bert_score(hyp, ref, embed)
            except ProviderError as exc:
                log.warning("embedding endpoint failed, bertscore unavailable: %s", exc)
                values[name] = None
        else:
            values[name] = _METRIC_FNS[name](hyp, ref)
    return values


def run_generation_task(endpoint, task: EvalTask, embed=None) -> EvalReport:
    if task.task not in ("qa", "summarization"):
        raise EvalError("run_generation_task needs a qa or summarization task")
    template = _template_for(task)
    records = load_eval_dataset(task.dataset_path, task.task)
    examples = []
    for record in records:
        if task.task == "qa":
            prompt = render_prompt(template, question=record["question"])
            reference = record["answer"]
        else:
            prompt = render_prompt(template, source=record["source"])
            reference = record["summary"]
        raw, flagged = _ask(endpoint, prompt)
        values = _score_generation(task.metrics, raw, reference, embed)
        examples.append(
            {
                "id": record["id"],
                "prompt": prompt,
                "raw_output": raw,
                "reference": reference,
                "values": values,
                "flagged": flagged,
            }
        )
    return EvalReport(
        model_name=endpoint.config.model_id,
        task=task.task,
        metrics=generation_aggregates(task.metrics, examples),
        protocol=_protocol(template),
        examples=examples,
    )


def recompute_metrics(report: EvalReport) -> dict:
    """Re-derive the headline numbers from the per-example records.

    The audit invariant: this must reproduce report.metrics exactly.
    """
    if report.task == "mcq":
        return {"accuracy": mcq_accuracy(report.examples)}
    return generation_aggregates(list(report.metrics), report.examples)


class EmbedClient:
    """Optional per-token embedding endpoint for BERTScore.

    Wire shape: POST {base_url}/embeddings {"tokens": [...]} returning
    {"vectors": [[...], ...]}, one vector per token, order preserved.
    """

    def __init__(self, base_url: str, session=None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.session = session or requests.Session()
        self.timeout = timeout

    def __call__(self, tokens: list[str]) -> list[list[float]]:
        resp = self.session.post(
            self.base_url + "/embeddings",
            json={"tokens": tokens},
            timeout=self.timeout,
        )
        if resp.status_code != 200:
            raise ProviderError(f"embedding endpoint: {resp.status_code}")
        vectors = resp.json()["vectors"]
        if len(vectors) != len(tokens):
            raise ProviderError(
                f"embedding endpoint returned {len(vectors)} vectors"
                f" for {len(tokens)} tokens"
            )
        return vectors
