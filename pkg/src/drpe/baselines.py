"""Overlap baselines: ROUGE-1/2/L recall and smoothed sentence-level BLEU.

All metrics share one tokenizer (lowercase, Unicode word characters,
punctuation and underscores dropped) so their correlations are comparable.
Inputs are pre-tokenized sequences; use :func:`tokenize` to produce them.
"""

from __future__ import annotations

import math
import re
from collections import Counter

from .errors import UndefinedMetricError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase word tokens; deterministic across runs and platforms."""
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: list[str], reference: list[str], n: int) -> float:
    """Clipped n-gram recall against the reference (n = 1 or 2)."""
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n=1 or n=2, got {n}")
    ref_ngrams = _ngrams(reference, n)
    total = sum(ref_ngrams.values())
    if total == 0:
        raise UndefinedMetricError(f"reference has fewer than {n} tokens")
    cand_ngrams = _ngrams(candidate, n)
    clipped = sum(min(count, cand_ngrams[gram]) for gram, count in ref_ngrams.items())
    return clipped / total


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """Longest-common-subsequence length over the reference length."""
    if not reference:
        raise UndefinedMetricError("reference is empty")
    if not candidate:
        return 0.0
    # Two-row LCS dynamic program.
    previous = [0] * (len(reference) + 1)
    for cand_tok in candidate:
        current = [0]
        for j, ref_tok in enumerate(reference, 1):
            if cand_tok == ref_tok:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1] / len(reference)


def sent_bleu(candidate: list[str], reference: list[str], max_n: int = 4) -> float:
    """Smoothed sentence-level BLEU.

    Geometric mean of clipped n-gram precisions for n = 1..max_n, with
    add-one smoothing for n >= 2 (a candidate shorter than n counts as
    precision 1 under the smoothing) and the brevity penalty
    exp(1 - |ref|/|cand|) applied only when the candidate is shorter.
    """
    if not candidate or not reference:
        raise UndefinedMetricError("candidate and reference must be non-empty")
    log_precisions = []
    for n in range(1, max_n + 1):
        cand_ngrams = _ngrams(candidate, n)
        ref_ngrams = _ngrams(reference, n)
        total = sum(cand_ngrams.values())
        clipped = sum(min(count, ref_ngrams[gram]) for gram, count in cand_ngrams.items())
        if n == 1:
            if clipped == 0:
                return 0.0
            precision = clipped / total
        else:
            precision = (clipped + 1) / (total + 1)
        log_precisions.append(math.log(precision))
    brevity = 1.0
    if len(candidate) < len(reference):
        brevity = math.exp(1.0 - len(reference) / len(candidate))
    return brevity * math.exp(sum(log_precisions) / max_n)
