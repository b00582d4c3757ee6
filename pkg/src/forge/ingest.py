"""Corpus acquisition: repository discovery, file classification, filtering.

Repositories are found through a GitHub-style HTTP search API and fetched
as tarballs at a pinned revision so runs are reproducible.  Every file in
an archive becomes a Document: classified as COBOL source, a mainframe
document (markup routed through docextract), or excluded, then passed
through size/line/character-composition filters.  All per-file decisions
are pure functions so ingestion can run in any per-file order or worker
pool without changing the result.

The corpus on disk is a raw file tree plus a JSON Lines manifest, one
Document record per line with the content referenced by relative path
and content hash rather than inlined.
"""

from __future__ import annotations

import io
import json
import os
import tarfile
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import requests

from .textutil import content_id, tokenize

TOKEN_ENV_VAR = "FORGE_GH_TOKEN"

DEFAULT_COBOL_EXTENSIONS = frozenset({".cbl", ".cob", ".cpy", ".cobol"})
DEFAULT_DOC_EXTENSIONS = frozenset(
    {".html", ".htm", ".md", ".markdown", ".txt", ".rst", ".adoc"}
)
DEFAULT_EXCLUDED_EXTENSIONS = frozenset(
    {
        ".json",
        ".xml",
        ".png",
        ".jpg",
        ".jpeg",
        ".gif",
        ".ico",
        ".pdf",
        ".zip",
        ".tar",
        ".gz",
        ".jar",
        ".class",
        ".exe",
        ".dll",
        ".so",
        ".bin",
        ".dat",
        ".lock",
    }
)
DEFAULT_PATH_FRAGMENTS = frozenset({"node_modules", ".git/", "vendor/bundle"})


class IngestError(Exception):
    """Base error for acquisition failures."""


class CredentialError(IngestError):
    """The code host rejected our credentials."""


class RetryAfterError(IngestError):
    """The code host rate-limited us; retry_after is seconds to wait."""

    def __init__(self, message: str, retry_after: float):
        super().__init__(message)
        self.retry_after = retry_after


@dataclass(frozen=True)
class RepoRef:
    """One repository at a pinned revision."""

    host_url: str
    owner: str
    name: str
    revision: str
    license_tag: str | None = None

    def __post_init__(self) -> None:
        if not self.owner or not self.name:
            raise ValueError("owner and name must be non-empty")


@dataclass
class Document:
    """One ingested source unit with provenance and filter outcome."""

    id: str
    origin: str  # repo_file | web_page | book
    path_or_url: str
    kind: str  # cobol | mainframe_doc | excluded
    content: str
    loc: int
    approx_tokens: int
    filter_status: str  # kept | dropped
    drop_reason: str | None = None


@dataclass(frozen=True)
class Verdict:
    """Filter outcome: kept, or dropped with a reason code."""

    kept: bool
    reason: str | None = None


KEEP = Verdict(True)


def drop(reason: str) -> Verdict:
    if not reason:
        raise ValueError("drop reason must be non-empty")
    return Verdict(False, reason)


@dataclass(frozen=True)
class FilterPolicy:
    """Thresholds and exclusion lists applied to every ingested file."""

    min_file_bytes: int = 64
    min_file_lines: int = 10
    min_alnum_fraction: float = 0.25
    excluded_extensions: frozenset[str] = DEFAULT_EXCLUDED_EXTENSIONS
    excluded_path_fragments: frozenset[str] = DEFAULT_PATH_FRAGMENTS
    max_file_bytes: int = 1 << 20

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_alnum_fraction <= 1.0:
            raise ValueError("min_alnum_fraction must be in [0, 1]")
        if self.min_file_bytes >= self.max_file_bytes:
            raise ValueError("min_file_bytes must be below max_file_bytes")

    @staticmethod
    def from_dict(raw: Mapping) -> "FilterPolicy":
        kwargs = dict(raw)
        for key in ("excluded_extensions", "excluded_path_fragments"):
            if key in kwargs:
                kwargs[key] = frozenset(kwargs[key])
        return FilterPolicy(**kwargs)


@dataclass
class CorpusStats:
    """Counters over one ingestion pass; merges as a commutative monoid.

    loc_total and tokens_total sum over kept documents only, since they
    describe the corpus that survives filtering.
    """

    files_total: int = 0
    files_kept: int = 0
    loc_total: int = 0
    tokens_total: int = 0
    drop_reasons: Counter = field(default_factory=Counter)

    def __add__(self, other: "CorpusStats") -> "CorpusStats":
        return CorpusStats(
            files_total=self.files_total + other.files_total,
            files_kept=self.files_kept + other.files_kept,
            loc_total=self.loc_total + other.loc_total,
            tokens_total=self.tokens_total + other.tokens_total,
            drop_reasons=self.drop_reasons + other.drop_reasons,
        )

    def as_dict(self) -> dict:
        return {
            "files_total": self.files_total,
            "files_kept": self.files_kept,
            "loc_total": self.loc_total,
            "tokens_total": self.tokens_total,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
        }


def _extension(path: str) -> str:
    return Path(path).suffix.lower()


def classify_file(
    path: str,
    content: bytes,
    policy: FilterPolicy | None = None,
    cobol_extensions: frozenset[str] = DEFAULT_COBOL_EXTENSIONS,
) -> str:
    """Route a file to cobol, mainframe_doc, or excluded.

    NUL-bearing content, excluded extensions and excluded path fragments
    win over everything; unrecognized extensions are excluded rather
    than guessed at.
    """
    policy = policy or FilterPolicy()
    if b"\x00" in content:
        return "excluded"
    normalized = path.replace("\\", "/").lower()
    if any(fragment in normalized for fragment in policy.excluded_path_fragments):
        return "excluded"
    ext = _extension(path)
    if ext in policy.excluded_extensions:
        return "excluded"
    if ext in cobol_extensions:
        return "cobol"
    if ext in DEFAULT_DOC_EXTENSIONS:
        return "mainframe_doc"
    return "excluded"


def filter_file(doc: Document, policy: FilterPolicy | None = None) -> Verdict:
    """Apply the quality policy to one classified document.

    Byte-size checks use the UTF-8 length of the decoded text.  Reason
    precedence, first match wins: excluded_kind, binary, too_short,
    too_long, low_alnum_fraction.
    """
    policy = policy or FilterPolicy()
    if doc.kind == "excluded":
        return drop("excluded_kind")
    if "\x00" in doc.content:
        return drop("binary")
    size = len(doc.content.encode("utf-8"))
    if size < policy.min_file_bytes or doc.loc < policy.min_file_lines:
        return drop("too_short")
    if size > policy.max_file_bytes:
        return drop("too_long")
    alnum = sum(1 for ch in doc.content if ch.isalnum())
    if alnum / len(doc.content) < policy.min_alnum_fraction:
        return drop("low_alnum_fraction")
    return KEEP


def make_document(
    path_or_url: str,
    data: bytes,
    origin: str = "repo_file",
    policy: FilterPolicy | None = None,
    cobol_extensions: frozenset[str] = DEFAULT_COBOL_EXTENSIONS,
) -> Document:
    """Classify, decode, measure and filter one raw file."""
    policy = policy or FilterPolicy()
    kind = classify_file(path_or_url, data, policy, cobol_extensions)
    text = data.decode("utf-8", errors="replace")
    doc = Document(
        id=content_id(data),
        origin=origin,
        path_or_url=path_or_url,
        kind=kind,
        content=text,
        loc=len(text.splitlines()),
        approx_tokens=len(tokenize(text)),
        filter_status="kept",
    )
    verdict = filter_file(doc, policy)
    if not verdict.kept:
        doc.filter_status = "dropped"
        doc.drop_reason = verdict.reason
    return doc


def corpus_stats(docs: Iterable[Document]) -> CorpusStats:
    """Single-pass exact counters; kept docs feed loc/token totals."""
    stats = CorpusStats()
    for doc in docs:
        stats.files_total += 1
        if doc.filter_status == "kept":
            stats.files_kept += 1
            stats.loc_total += doc.loc
            stats.tokens_total += doc.approx_tokens
        else:
            stats.drop_reasons[doc.drop_reason or "unknown"] += 1
    return stats


class CodeHostClient:
    """GitHub-style HTTP client: repository search and tarball download.

    The base URL is overridable so tests can point at a local fixture
    server; auth comes from the FORGE_GH_TOKEN environment variable
    unless a token is passed explicitly.
    """

    def __init__(
        self,
        base_url: str,
        token: str | None = None,
        session: requests.Session | None = None,
        timeout: float = 30.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV_VAR)
        self.session = session or requests.Session()
        self.timeout = timeout

    def _get(self, path: str, params: Mapping | None = None) -> requests.Response:
        headers = {"Accept": "application/vnd.github+json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        resp = self.session.get(
            self.base_url + path, params=params, headers=headers, timeout=self.timeout
        )
        if resp.status_code == 401:
            raise CredentialError(f"authentication rejected for {path}")
        if resp.status_code in (403, 429):
            retry_after = _retry_delay(resp)
            if retry_after is not None:
                raise RetryAfterError(
                    f"rate limited on {path}; retry after {retry_after:.0f}s",
                    retry_after,
                )
            raise CredentialError(f"access forbidden for {path}")
        resp.raise_for_status()
        return resp

    def search(self, query: str, per_page: int = 100, page: int = 1) -> list[dict]:
        resp = self._get(
            "/search/repositories",
            params={"q": query, "per_page": per_page, "page": page},
        )
        return resp.json().get("items", [])

    def fetch_archive(self, ref: RepoRef, dest_dir: Path) -> Path:
        """Download and safely extract one repository tarball.

        Returns the extraction root (the archive's single top directory
        when present, else dest_dir).  Hostile member paths abort the
        extraction; symlinks and devices are skipped.
        """
        resp = self._get(f"/repos/{ref.owner}/{ref.name}/tarball/{ref.revision}")
        dest_dir = Path(dest_dir)
        dest_dir.mkdir(parents=True, exist_ok=True)
        top_levels: set[str] = set()
        with tarfile.open(fileobj=io.BytesIO(resp.content), mode="r:*") as archive:
            for member in archive.getmembers():
                parts = Path(member.name).parts
                if member.name.startswith("/") or ".." in parts:
                    raise IngestError(
                        f"archive member escapes extraction root: {member.name!r}"
                    )
                if parts:
                    top_levels.add(parts[0])
                if member.isdir():
                    (dest_dir / member.name).mkdir(parents=True, exist_ok=True)
                elif member.isfile():
                    target = dest_dir / member.name
                    target.parent.mkdir(parents=True, exist_ok=True)
                    extracted = archive.extractfile(member)
                    assert extracted is not None
                    target.write_bytes(extracted.read())
        if len(top_levels) == 1:
            return dest_dir / top_levels.pop()
        return dest_dir


def _retry_delay(resp: requests.Response) -> float | None:
    retry_after = resp.headers.get("Retry-After")
    if retry_after is not None:
        try:
            return float(retry_after)
        except ValueError:
            return 30.0
    reset = resp.headers.get("X-RateLimit-Reset")
    remaining = resp.headers.get("X-RateLimit-Remaining")
    if reset is not None and remaining == "0":
        try:
            return max(0.0, float(reset) - time.time())
        except ValueError:
            return 30.0
    if resp.status_code == 429:
        return 30.0
    return None


def discover_repos(query: str, api: CodeHostClient, limit: int) -> list[RepoRef]:
    """Search the code host, deduplicating results by (owner, name)."""
    if limit <= 0:
        return []
    refs: list[RepoRef] = []
    seen: set[tuple[str, str]] = set()
    page = 1
    per_page = min(100, limit)
    while len(refs) < limit:
        items = api.search(query, per_page=per_page, page=page)
        for item in items:
            owner, _, name = item.get("full_name", "").partition("/")
            if not owner or not name or (owner, name) in seen:
                continue
            seen.add((owner, name))
            license_obj = item.get("license") or {}
            refs.append(
                RepoRef(
                    host_url=api.base_url,
                    owner=owner,
                    name=name,
                    revision=item.get("default_branch") or "HEAD",
                    license_tag=license_obj.get("spdx_id"),
                )
            )
            if len(refs) == limit:
                break
        if len(items) < per_page:
            break
        page += 1
    return refs


def ingest_tree(
    root: Path,
    origin: str = "repo_file",
    policy: FilterPolicy | None = None,
    cobol_extensions: frozenset[str] = DEFAULT_COBOL_EXTENSIONS,
    prefix: str = "",
) -> list[Document]:
    """Walk a file tree in sorted order and document every regular file.

    Paths in the returned documents are POSIX-relative to root, with
    prefix prepended (used to keep multi-repo corpora disjoint).
    """
    root = Path(root)
    docs = []
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if prefix:
            rel = f"{prefix.rstrip('/')}/{rel}"
        docs.append(
            make_document(rel, path.read_bytes(), origin, policy, cobol_extensions)
        )
    return docs


MANIFEST_NAME = "manifest.jsonl"

_MANIFEST_FIELDS = (
    "id",
    "origin",
    "path",
    "kind",
    "loc",
    "approx_tokens",
    "filter_status",
    "drop_reason",
)


def write_manifest(docs: Iterable[Document], path: Path) -> None:
    """One Document record per line; content stays in the file tree."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "id": doc.id,
                "origin": doc.origin,
                "path": doc.path_or_url,
                "kind": doc.kind,
                "loc": doc.loc,
                "approx_tokens": doc.approx_tokens,
                "filter_status": doc.filter_status,
                "drop_reason": doc.drop_reason,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_manifest(path: Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            missing = [key for key in _MANIFEST_FIELDS if key not in record]
            if missing:
                raise IngestError(f"manifest record missing fields: {missing}")
            records.append(record)
    return records


def load_kept_texts(corpus_dir: Path, manifest: str = MANIFEST_NAME) -> dict[str, str]:
    """Map document id to text for every kept manifest entry."""
    corpus_dir = Path(corpus_dir)
    texts: dict[str, str] = {}
    for record in read_manifest(corpus_dir / manifest):
        if record["filter_status"] != "kept":
            continue
        data = (corpus_dir / record["path"]).read_bytes()
        if content_id(data) != record["id"]:
            raise IngestError(f"content hash mismatch for {record['path']}")
        texts[record["id"]] = data.decode("utf-8", errors="replace")
    return texts
