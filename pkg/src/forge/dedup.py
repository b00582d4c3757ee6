"""Near-duplicate detection over a document corpus.

The pipeline is the classic shingle / MinHash / LSH stack:

1. Each document becomes a set of 64-bit shingle fingerprints: the
   document is tokenized (``textutil.tokenize``), every window of ``k``
   consecutive tokens is joined with single spaces, and the joined
   window is hashed with ``textutil.hash64``.
2. A MinHash signature compresses the shingle set to ``H`` minima.  The
   i-th hash is the affine map ``(a_i * x + b_i) mod 2**64`` where
   ``a_i`` (forced odd, hence a bijection) and ``b_i`` are read from
   ``blake2b(seed_le8 + i_le4, digest_size=16)``.  The derivation is
   part of the format: signatures are reproducible across runs,
   machines, and Python versions.
3. LSH banding groups signatures into ``bands`` bands of ``rows`` rows;
   two documents are candidates when any band matches exactly.
   Candidates are verified against a Jaccard threshold and merged into
   clusters with union-find.

Documents shorter than ``k`` tokens have no shingles; their signatures
are all-sentinel (``2**64 - 1``) and therefore identical, so such
documents cluster together.  Upstream length filters are expected to
keep trivially short documents out of the corpus.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .textutil import hash64, tokenize

DEFAULT_K = 5
DEFAULT_HASHES = 256
DEFAULT_BANDS = 32
DEFAULT_ROWS = 8
DEFAULT_THRESHOLD = 0.8
DEFAULT_SEED = 0

EMPTY_SLOT = 2**64 - 1

Normalizer = Callable[[str], Sequence[str]]

# Shingle blocks are hashed in chunks to bound the (chunk x H) temporary.
_CHUNK = 4096


@dataclass(frozen=True)
class ShingleSet:
    """Set of 64-bit fingerprints of the k-token windows of one document."""

    doc_id: str
    k: int
    shingles: frozenset[int]


@dataclass(frozen=True, eq=False)
class MinHashSignature:
    """H per-permutation minima for one document's shingle set."""

    doc_id: str
    num_hashes: int
    seed: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != self.num_hashes:
            raise ValueError(
                f"signature has {len(self.values)} values, expected {self.num_hashes}"
            )


@dataclass(frozen=True)
class LshParams:
    """Banding layout. bands * rows must equal the signature length."""

    bands: int
    rows: int
    threshold: float

    def __post_init__(self) -> None:
        if self.bands < 1 or self.rows < 1:
            raise ValueError("bands and rows must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")

    @property
    def num_hashes(self) -> int:
        return self.bands * self.rows


@dataclass(frozen=True)
class DuplicateCluster:
    """Group of mutually-near-duplicate documents; one member survives."""

    member_ids: frozenset[str]
    representative_id: str

    def __post_init__(self) -> None:
        if len(self.member_ids) < 2:
            raise ValueError("a duplicate cluster needs at least two members")
        if self.representative_id not in self.member_ids:
            raise ValueError("representative must be a cluster member")


def shingle(
    text: str,
    k: int,
    normalizer: Normalizer | None = None,
    *,
    doc_id: str = "",
) -> ShingleSet:
    """Fingerprint every k-token window of text.

    Texts with fewer than k tokens yield the empty set.  The default
    normalizer lowercases and splits on whitespace/punctuation, so
    shingles are insensitive to case and whitespace layout.
    """
    if k < 1:
        raise ValueError("shingle width k must be >= 1")
    tokens = (normalizer or tokenize)(text)
    hashes = frozenset(
        hash64(" ".join(tokens[i : i + k])) for i in range(len(tokens) - k + 1)
    )
    return ShingleSet(doc_id=doc_id, k=k, shingles=hashes)


@lru_cache(maxsize=64)
def _perm_params(seed: int, num_hashes: int) -> tuple[np.ndarray, np.ndarray]:
    """Derive the H affine-permutation parameter pairs for a seed."""
    raw = bytearray()
    seed_bytes = (seed & EMPTY_SLOT).to_bytes(8, "little")
    for i in range(num_hashes):
        raw += hashlib.blake2b(
            seed_bytes + i.to_bytes(4, "little"), digest_size=16
        ).digest()
    pairs = np.frombuffer(bytes(raw), dtype="<u8").reshape(num_hashes, 2)
    mult = pairs[:, 0] | np.uint64(1)
    add = pairs[:, 1].copy()
    mult.setflags(write=False)
    add.setflags(write=False)
    return mult, add


def minhash_signature(s: ShingleSet, num_hashes: int, seed: int) -> MinHashSignature:
    """Compress a shingle set to its H per-permutation minima.

    The empty set maps to the all-sentinel signature, so two empty
    documents compare as identical.
    """
    if num_hashes < 1:
        raise ValueError("num_hashes must be >= 1")
    mult, add = _perm_params(seed, num_hashes)
    values = np.full(num_hashes, EMPTY_SLOT, dtype=np.uint64)
    if s.shingles:
        flat = np.fromiter(s.shingles, dtype=np.uint64, count=len(s.shingles))
        for start in range(0, len(flat), _CHUNK):
            block = flat[start : start + _CHUNK, None]
            # uint64 arithmetic wraps mod 2**64, which is exactly the map.
            hashed = block * mult[None, :] + add[None, :]
            np.minimum(values, hashed.min(axis=0), out=values)
    values.setflags(write=False)
    return MinHashSignature(
        doc_id=s.doc_id, num_hashes=num_hashes, seed=seed, values=values
    )


def estimate_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of agreeing signature positions; estimates set Jaccard."""
    if a.num_hashes != b.num_hashes:
        raise ValueError(
            f"signature lengths differ: {a.num_hashes} vs {b.num_hashes}"
        )
    if a.seed != b.seed:
        raise ValueError(f"signature seeds differ: {a.seed} vs {b.seed}")
    return int(np.count_nonzero(a.values == b.values)) / a.num_hashes


def lsh_candidates(
    sigs: Iterable[MinHashSignature], p: LshParams
) -> set[tuple[str, str]]:
    """Pairs of doc ids whose signatures agree on every row of some band.

    Pairs are returned in sorted order (low id first) with no self-pairs.
    """
    buckets: dict[tuple[int, bytes], list[str]] = {}
    for sig in sigs:
        if sig.num_hashes != p.num_hashes:
            raise ValueError(
                f"signature for {sig.doc_id!r} has {sig.num_hashes} hashes, "
                f"LSH layout needs {p.num_hashes}"
            )
        for band in range(p.bands):
            key = (band, sig.values[band * p.rows : (band + 1) * p.rows].tobytes())
            buckets.setdefault(key, []).append(sig.doc_id)
    pairs: set[tuple[str, str]] = set()
    for ids in buckets.values():
        if len(ids) < 2:
            continue
        distinct = sorted(set(ids))
        for i, low in enumerate(distinct):
            for high in distinct[i + 1 :]:
                pairs.add((low, high))
    return pairs


def exact_jaccard(a: ShingleSet, b: ShingleSet) -> float:
    """True Jaccard of two shingle sets; two empty sets count as identical."""
    if not a.shingles and not b.shingles:
        return 1.0
    union = len(a.shingles | b.shingles)
    return len(a.shingles & b.shingles) / union


class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, item: str) -> str:
        root = item
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(item, item) != item:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Smaller id wins so roots are order-independent.
            low, high = sorted((ra, rb))
            self.parent[high] = low


def dedup_corpus(
    docs: Mapping[str, str],
    k: int = DEFAULT_K,
    num_hashes: int = DEFAULT_HASHES,
    seed: int = DEFAULT_SEED,
    p: LshParams | None = None,
    *,
    exact_verify: bool = False,
    normalizer: Normalizer | None = None,
) -> tuple[list[str], list[DuplicateCluster]]:
    """Collapse near-duplicates; return (kept ids, clusters).

    Candidate pairs from LSH are verified against p.threshold, by
    signature estimate by default or by true shingle Jaccard when
    exact_verify is set.  Verified pairs are union-found into clusters
    and each cluster keeps its lexicographically smallest id.  The
    result depends only on (docs, k, num_hashes, seed, p), not on the
    mapping's iteration order.
    """
    if p is None:
        p = LshParams(DEFAULT_BANDS, DEFAULT_ROWS, DEFAULT_THRESHOLD)
    if p.num_hashes != num_hashes:
        raise ValueError(
            f"LSH layout {p.bands}x{p.rows} needs {p.num_hashes} hashes, "
            f"got num_hashes={num_hashes}"
        )
    shingle_sets = {
        doc_id: shingle(text, k, normalizer, doc_id=doc_id)
        for doc_id, text in docs.items()
    }
    sigs = {
        doc_id: minhash_signature(ss, num_hashes, seed)
        for doc_id, ss in shingle_sets.items()
    }
    uf = _UnionFind()
    for low, high in sorted(lsh_candidates(sigs.values(), p)):
        if exact_verify:
            score = exact_jaccard(shingle_sets[low], shingle_sets[high])
        else:
            score = estimate_jaccard(sigs[low], sigs[high])
        if score >= p.threshold:
            uf.union(low, high)
    groups: dict[str, set[str]] = {}
    for doc_id in docs:
        groups.setdefault(uf.find(doc_id), set()).add(doc_id)
    clusters = [
        DuplicateCluster(member_ids=frozenset(members), representative_id=min(members))
        for members in groups.values()
        if len(members) >= 2
    ]
    clusters.sort(key=lambda c: c.representative_id)
    removed = {
        member
        for cluster in clusters
        for member in cluster.member_ids
        if member != cluster.representative_id
    }
    kept = sorted(set(docs) - removed)
    return kept, clusters


def cluster_json(cluster: DuplicateCluster) -> dict:
    """JSON-serializable form used by the clusters.jsonl artifact."""
    return {
        "representative_id": cluster.representative_id,
        "member_ids": sorted(cluster.member_ids),
    }
