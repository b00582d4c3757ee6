"""Run configuration loaded from one YAML file.

The file holds no secrets: provider keys come from the environment
variable each provider names (auth_env_var).  Every artifact a run
produces records the config hash, so stale outputs are detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import yaml

from .curate import RuleConfig, SplitSpec
from .dedup import (
    DEFAULT_BANDS,
    DEFAULT_HASHES,
    DEFAULT_K,
    DEFAULT_ROWS,
    DEFAULT_SEED,
    DEFAULT_THRESHOLD,
    LshParams,
)
from .docextract import ExtractionRules
from .ingest import FilterPolicy
from .judge import DEFAULT_BATCH_SIZE, DEFAULT_MIN_SCORE
from .providers import ProviderConfig
from .synthgen import DEFAULT_ENTRIES_PER_CALL

__all__ = [
    "ConfigError",
    "DedupSettings",
    "EvalSettings",
    "ForgeConfig",
    "GenerationSettings",
    "IngestSettings",
    "JudgeSettings",
    "ReviewSettings",
    "config_sha256",
    "load_config",
]


class ConfigError(Exception):
    """The config file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class IngestSettings:
    source_dir: Path | None = None
    query: str = ""
    repo_limit: int = 50

    def __post_init__(self) -> None:
        if self.repo_limit < 1:
            raise ValueError("repo_limit must be >= 1")


@dataclass(frozen=True)
class DedupSettings:
    k: int = DEFAULT_K
    num_hashes: int = DEFAULT_HASHES
    seed: int = DEFAULT_SEED
    bands: int = DEFAULT_BANDS
    rows: int = DEFAULT_ROWS
    threshold: float = DEFAULT_THRESHOLD
    exact_verify: bool = False

    def __post_init__(self) -> None:
        # constructs eagerly so a bad layout fails at load time
        self.lsh_params()

    def lsh_params(self) -> LshParams:
        p = LshParams(self.bands, self.rows, self.threshold)
        if p.num_hashes != self.num_hashes:
            raise ValueError(
                f"bands*rows = {p.num_hashes} but num_hashes = {self.num_hashes}"
            )
        return p


@dataclass(frozen=True)
class GenerationSettings:
    seed_path: Path | None = None
    subtopic_count: int = 10
    entries_per_call: int = DEFAULT_ENTRIES_PER_CALL
    providers: tuple[str, ...] = ()  # empty: every non-judge provider

    def __post_init__(self) -> None:
        if self.subtopic_count < 0:
            raise ValueError("subtopic_count must be >= 0")
        if self.entries_per_call < 1:
            raise ValueError("entries_per_call must be >= 1")


@dataclass(frozen=True)
class JudgeSettings:
    provider: str = ""
    min_score: int = DEFAULT_MIN_SCORE
    batch_size: int = DEFAULT_BATCH_SIZE

    def __post_init__(self) -> None:
        if not 1 <= self.min_score <= 10:
            raise ValueError("min_score must be in 1..10")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class EvalSettings:
    endpoint: str = ""  # provider name of the model under test
    embed_base_url: str | None = None  # similarity scoring stays off without it


@dataclass(frozen=True)
class ReviewSettings:
    host: str = "127.0.0.1"
    port: int = 8800
    lease_seconds: float = 600.0
    static_dir: Path | None = None  # built web UI, served when present

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError("port must be in 1..65535")
        if self.lease_seconds <= 0:
            raise ValueError("lease_seconds must be positive")


_SECTIONS = {
    "workspace",
    "providers",
    "ingest",
    "filter_policy",
    "extraction_rules",
    "dedup",
    "generation",
    "judge",
    "rules",
    "split",
    "eval",
    "review",
}


@dataclass(frozen=True)
class ForgeConfig:
    workspace: Path
    providers: tuple[ProviderConfig, ...] = ()
    ingest: IngestSettings = field(default_factory=IngestSettings)
    filter_policy: FilterPolicy = field(default_factory=FilterPolicy)
    extraction_rules: ExtractionRules = field(default_factory=ExtractionRules)
    dedup: DedupSettings = field(default_factory=DedupSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    rules: RuleConfig = field(default_factory=RuleConfig)
    split: SplitSpec = field(
        default_factory=lambda: SplitSpec(fractions=(0.8, 0.1, 0.1))
    )
    eval: EvalSettings = field(default_factory=EvalSettings)
    review: ReviewSettings = field(default_factory=ReviewSettings)
    sha256: str = ""

    def __post_init__(self) -> None:
        names = [p.name for p in self.providers]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise ConfigError(f"duplicate provider names: {dupes}")
        for label, name in (
            ("judge.provider", self.judge.provider),
            ("eval.endpoint", self.eval.endpoint),
            *(("generation.providers", n) for n in self.generation.providers),
        ):
            if name and name not in names:
                raise ConfigError(f"{label} references unknown provider {name!r}")

    def provider(self, name: str) -> ProviderConfig:
        for p in self.providers:
            if p.name == name:
                return p
        raise ConfigError(f"no provider named {name!r}")

    def generation_providers(self) -> tuple[ProviderConfig, ...]:
        """Configured generator subset, or every non-judge provider."""
        if self.generation.providers:
            return tuple(self.provider(n) for n in self.generation.providers)
        rest = tuple(p for p in self.providers if p.name != self.judge.provider)
        return rest or self.providers


def config_sha256(raw: Mapping) -> str:
    """Hash of the parsed mapping, stable under comment and key-order edits."""
    canon = json.dumps(raw, sort_keys=True, ensure_ascii=True, default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _build(section: str, cls, raw: Mapping):
    if not isinstance(raw, Mapping):
        raise ConfigError(f"section {section!r} must be a mapping")
    try:
        if hasattr(cls, "from_dict"):
            return cls.from_dict(raw)
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {section!r}: {exc}") from exc


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path: str | Path) -> ForgeConfig:
    """Parse and cross-validate a YAML config file.

    Relative paths inside the file resolve against the file's own
    directory, so runs behave the same from any working directory.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {unknown}")

    base = path.resolve().parent
    workspace = _resolve(base, raw.get("workspace", "workspace"))

    providers = []
    for i, entry in enumerate(raw.get("providers", []) or []):
        providers.append(_build(f"providers[{i}]", ProviderConfig, entry))

    ingest = _build("ingest", IngestSettings, raw.get("ingest", {}))
    ingest = replace(ingest, source_dir=_resolve(base, ingest.source_dir))

    generation = _build("generation", GenerationSettings, raw.get("generation", {}))
    generation = replace(
        generation,
        seed_path=_resolve(base, generation.seed_path),
        providers=tuple(generation.providers),
    )

    review = _build("review", ReviewSettings, raw.get("review", {}))
    review = replace(review, static_dir=_resolve(base, review.static_dir))

    split_raw = dict(raw.get("split", {"fractions": [0.8, 0.1, 0.1]}))
    if "fractions" in split_raw and split_raw["fractions"] is not None:
        split_raw["fractions"] = tuple(split_raw["fractions"])
    if "counts" in split_raw and split_raw["counts"] is not None:
        split_raw["counts"] = {
            task: tuple(triple) for task, triple in split_raw["counts"].items()
        }
    split = _build("split", SplitSpec, split_raw)

    return ForgeConfig(
        workspace=workspace,
        providers=tuple(providers),
        ingest=ingest,
        filter_policy=_build("filter_policy", FilterPolicy, raw.get("filter_policy", {})),
        extraction_rules=_build(
            "extraction_rules", ExtractionRules, raw.get("extraction_rules", {})
        ),
        dedup=_build("dedup", DedupSettings, raw.get("dedup", {})),
        generation=generation,
        judge=_build("judge", JudgeSettings, raw.get("judge", {})),
        rules=_build("rules", RuleConfig, raw.get("rules", {})),
        split=split,
        eval=_build("eval", EvalSettings, raw.get("eval", {})),
        review=review,
        sha256=config_sha256(raw),
    )
