"""Shared text helpers: tokenization, normalization, stable content hashing.

One tokenization rule is used everywhere token counts or token overlap
matter (corpus statistics, shingling, every evaluation metric), because
cross-run and cross-model comparability depends on it: lowercase the text,
then emit maximal alphanumeric/underscore runs and single punctuation
characters, splitting on Unicode whitespace.
"""

from __future__ import annotations

import hashlib
import re

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_WS_RE = re.compile(r"\s+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


def normalize_ws(text: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return _WS_RE.sub(" ", text).strip()


def content_id(data: bytes | str) -> str:
    """Stable hex id for a blob of content (sha256)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def hash64(data: bytes | str, salt: bytes = b"") -> int:
    """Documented 64-bit hash: little-endian blake2b-8 of salt + data.

    Used for shingle fingerprints and seed-derived hash parameters so
    signatures are portable across runs, machines and Python versions.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    return int.from_bytes(hashlib.blake2b(salt + data, digest_size=8).digest(), "little")
