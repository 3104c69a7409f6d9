"""Corpus BLEU-1..4 and ROUGE-L over token sequences (single reference)."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from . import kernels


@dataclass
class ScoreReport:
    bleu: tuple[float, float, float, float]
    rouge_l: float
    n_samples: int

    def to_json(self) -> dict:
        b = self.bleu
        return {
            "bleu1": b[0],
            "bleu2": b[1],
            "bleu3": b[2],
            "bleu4": b[3],
            "rouge_l": self.rouge_l,
            "n": self.n_samples,
        }

    def as_percent(self) -> dict:
        return {k: (v * 100 if k != "n" else v) for k, v in self.to_json().items()}


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def ngram_stats(candidates, references, max_n: int = 4):
    """Clipped matches and candidate n-gram totals per order, summed over the corpus."""
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, ref in zip(candidates, references):
        cand, ref = list(cand), list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c, r = ngrams(cand, n), ngrams(ref, n)
            matches[n - 1] += sum(min(v, r[g]) for g, v in c.items())
            totals[n - 1] += max(len(cand) - n + 1, 0)
    return matches, totals, cand_len, ref_len


def bleu(candidates, references, max_n: int = 4, smooth: bool = True) -> list[float]:
    """BLEU-1..max_n. With ``smooth`` orders n >= 2 use (m + 1) / (c + 1)."""
    candidates, references = list(candidates), list(references)
    if len(candidates) != len(references):
        raise ValueError("candidate and reference lists differ in length")
    if not candidates:
        raise ValueError("bleu needs at least one pair")
    matches, totals, c, r = ngram_stats(candidates, references, max_n)
    if c == 0:
        return [0.0] * max_n
    bp = 1.0 if c > r else math.exp(1.0 - r / c)

    log_p = []
    for n in range(max_n):
        m, t = matches[n], totals[n]
        if smooth and n >= 1:
            p = (m + 1) / (t + 1)
        else:
            p = m / t if t > 0 else 0.0
        log_p.append(math.log(p) if p > 0 else -math.inf)

    scores = []
    for n in range(1, max_n + 1):
        s = sum(log_p[:n]) / n
        scores.append(bp * math.exp(s) if s > -math.inf else 0.0)
    return scores


def rouge_l_pair(candidate, reference) -> float:
    cand, ref = list(candidate), list(reference)
    if not ref:
        raise ValueError("rouge_l needs a non-empty reference")
    lcs = kernels.lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p = lcs / len(cand)
    r = lcs / len(ref)
    return 2 * p * r / (p + r)


def rouge_l(candidates, references) -> float:
    candidates, references = list(candidates), list(references)
    if len(candidates) != len(references) or not candidates:
        raise ValueError("rouge_l needs equal-length, non-empty lists")
    return sum(rouge_l_pair(c, r) for c, r in zip(candidates, references)) / len(candidates)


def score_corpus(candidates, references, smooth: bool = True) -> ScoreReport:
    b = bleu(candidates, references, 4, smooth)
    return ScoreReport(tuple(b), rouge_l(candidates, references), len(candidates))

