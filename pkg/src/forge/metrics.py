"""Text-generation metrics used by the evaluation harness.

All metrics operate on token lists produced by :func:`forge.textutil.tokenize`
so scores are comparable across models. Everything except BLEU and accuracy
is on a 0-1 scale; BLEU is reported 0-100.

The free-form MAP and token-level F1 here are harness-defined rules (treating
the hypothesis as a ranked retrieval of reference tokens, and multiset token
overlap respectively); reports flag them as such.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Callable, Optional, Sequence

from .stem import stem

Tokens = Sequence[str]

# Alignment-metric parameters: harmonic-mean weight, chunk-penalty exponent
# and scale. Exact + stem matching only, no synonym dictionary.
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hyp: Tokens, ref: Tokens) -> float:
    """Sentence-level BLEU-4 on a 0-100 scale.

    Geometric mean of modified n-gram precisions for n=1..4, add-one
    smoothing on zero match counts for n >= 2, times the brevity penalty.
    An empty hypothesis or zero unigram overlap scores 0.
    """
    if not hyp:
        return 0.0
    precisions = []
    for n in range(1, 5):
        hyp_ngrams = _ngram_counts(hyp, n)
        ref_ngrams = _ngram_counts(ref, n)
        total = sum(hyp_ngrams.values())
        matched = sum(min(c, ref_ngrams[g]) for g, c in hyp_ngrams.items())
        if n == 1:
            if matched == 0:
                return 0.0
            precisions.append(matched / total)
        elif matched == 0:
            precisions.append((matched + 1) / (total + 1))
        else:
            precisions.append(matched / total)
    geo_mean = math.exp(sum(math.log(p) for p in precisions) / 4)
    if len(hyp) >= len(ref):
        bp = 1.0
    else:
        bp = math.exp(1 - len(ref) / len(hyp))
    return geo_mean * bp * 100.0


def _lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(hyp: Tokens, ref: Tokens) -> float:
    """LCS-based F-score: P = LCS/|hyp|, R = LCS/|ref|, F = 2PR/(P+R)."""
    if not hyp or not ref:
        return 0.0
    lcs = _lcs_length(hyp, ref)
    p = lcs / len(hyp)
    r = lcs / len(ref)
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def _align(hyp: Tokens, ref: Tokens) -> list[tuple[int, int]]:
    """Unigram alignment, exact matches first then stem matches.

    Within each stage the match is greedy: hypothesis positions in order
    take the first still-unmatched reference position with the same key.
    Returns (hyp_index, ref_index) pairs.
    """
    pairs: list[tuple[int, int]] = []
    hyp_free = [True] * len(hyp)
    ref_free = [True] * len(ref)
    for key in (lambda t: t, stem):
        ref_keys = [key(t) for t in ref]
        for i, tok in enumerate(hyp):
            if not hyp_free[i]:
                continue
            hk = key(tok)
            for j, rk in enumerate(ref_keys):
                if ref_free[j] and hk == rk:
                    pairs.append((i, j))
                    hyp_free[i] = False
                    ref_free[j] = False
                    break
    pairs.sort()
    return pairs


def _chunk_count(pairs: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(hyp: Tokens, ref: Tokens) -> float:
    """Alignment metric with exact + stem unigram matching.

    F_mean = P*R / (alpha*P + (1-alpha)*R); penalty = gamma*(chunks/matches)^beta;
    score = F_mean * (1 - penalty). Zero matches score 0.
    """
    if not hyp or not ref:
        return 0.0
    pairs = _align(hyp, ref)
    matches = len(pairs)
    if matches == 0:
        return 0.0
    p = matches / len(hyp)
    r = matches / len(ref)
    f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    penalty = METEOR_GAMMA * (_chunk_count(pairs) / matches) ** METEOR_BETA
    return f_mean * (1 - penalty)


def token_f1(hyp: Tokens, ref: Tokens) -> float:
    """Multiset token overlap F1. Depends only on the two token multisets."""
    if not hyp and not ref:
        return 1.0
    if not hyp or not ref:
        return 0.0
    overlap = sum((Counter(hyp) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    p = overlap / len(hyp)
    r = overlap / len(ref)
    return 2 * p * r / (p + r)


def map_score(hyp: Tokens, ref: Tokens) -> float:
    """Average precision treating hypothesis tokens in order as a ranked
    retrieval over the reference token multiset.

    Position k is relevant if its token still matches an unconsumed
    reference token; AP is the mean of precision@k over relevant positions.
    """
    if not hyp or not ref:
        return 0.0
    remaining = Counter(ref)
    hits = 0
    precisions = []
    for k, tok in enumerate(hyp, 1):
        if remaining[tok] > 0:
            remaining[tok] -= 1
            hits += 1
            precisions.append(hits / k)
    if not precisions:
        return 0.0
    return sum(precisions) / len(precisions)


EmbedFn = Callable[[Sequence[str]], Sequence[Sequence[float]]]


def _cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def bert_score(hyp: Tokens, ref: Tokens, embed: Optional[EmbedFn]) -> Optional[float]:
    """Greedy-cosine-matching F over per-token contextual vectors.

    Returns None ("unavailable") when no embedding endpoint is configured;
    the underlying encoder is deliberately external to this package.
    """
    if embed is None:
        return None
    if not hyp or not ref:
        return 0.0
    hyp_vecs = embed(list(hyp))
    ref_vecs = embed(list(ref))
    sims = [[_cosine(h, r) for r in ref_vecs] for h in hyp_vecs]
    precision = sum(max(row) for row in sims) / len(hyp_vecs)
    recall = sum(max(sims[i][j] for i in range(len(hyp_vecs))) for j in range(len(ref_vecs))) / len(ref_vecs)
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)
