"""Thresholded naturalness and content rewards and their harmonic-mean combination."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .corpus import Sentence

REWARD_MODES = ("both", "classifier", "content")


@dataclass
class RewardConfig:
    sigma_t: float = 0.5
    sigma_c: float = 0.85
    beta: float = 0.5
    mode: str = "both"  # "classifier" and "content" are the single-reward ablations
    content_scorer: str = "chrf"

    def validate(self) -> None:
        for name in ("sigma_t", "sigma_c"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.mode not in REWARD_MODES:
            raise ValueError(f"mode must be one of {REWARD_MODES}")
        if self.content_scorer not in CONTENT_SCORERS:
            raise ValueError(f"unknown content scorer {self.content_scorer!r}")


def naturalness_reward(p: float, sigma_t: float = 0.5) -> float:
    """Classifier probability of the preferred class, or 0 below the threshold."""
    return 0.0 if p < sigma_t else p


def content_reward(c: float, sigma_c: float = 0.85) -> float:
    return 0.0 if c < sigma_c else c


def overall_reward(r_t: float, r_c: float) -> float:
    """Harmonic mean of the two rewards; zero if either is zero."""
    if r_t == 0 or r_c == 0:
        return 0.0
    return 2.0 / (1.0 / r_t + 1.0 / r_c)


harmonic_mean = overall_reward


@dataclass(frozen=True)
class RewardBreakdown:
    r_t: float
    r_c: float
    r: float
    p_natural: float
    content: float


def compute_reward(p_natural: float, content: float, cfg: RewardConfig) -> RewardBreakdown:
    r_t = naturalness_reward(p_natural, cfg.sigma_t)
    r_c = content_reward(content, cfg.sigma_c)
    if cfg.mode == "classifier":
        r = r_t
    elif cfg.mode == "content":
        r = r_c
    else:
        r = overall_reward(r_t, r_c)
    return RewardBreakdown(r_t, r_c, r, p_natural, content)


class ContentScorer(Protocol):
    def __call__(self, x: Sentence, y: Sentence, y_hat: Sentence) -> float: ...


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(hypothesis: str, reference: str, max_order: int = 6, beta: float = 1.0) -> float:
    """Character n-gram F-score with whitespace removed.

    Precision and recall are averaged over the orders for which either string
    has at least one n-gram, then combined as an F-beta score.
    """
    hyp = "".join(hypothesis.split())
    ref = "".join(reference.split())
    precisions, recalls = [], []
    for n in range(1, max_order + 1):
        h, r = _char_ngrams(hyp, n), _char_ngrams(ref, n)
        h_total, r_total = sum(h.values()), sum(r.values())
        if not h_total and not r_total:
            continue
        match = sum((h & r).values())
        precisions.append(match / h_total if h_total else 0.0)
        recalls.append(match / r_total if r_total else 0.0)
    if not precisions:
        return 1.0 if hyp == ref else 0.0
    p, r = sum(precisions) / len(precisions), sum(recalls) / len(recalls)
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return min(1.0, max(0.0, (1 + b2) * p * r / (b2 * p + r)))


class CharFScorer:
    """Reference-based content scorer; the source sentence is ignored."""

    def __init__(self, max_order: int = 6, beta: float = 1.0):
        self.max_order = max_order
        self.beta = beta

    def __call__(self, x: Sentence | None, y: Sentence, y_hat: Sentence) -> float:
        if not y.tokens:
            raise ValueError("reference must be non-empty")
        return chrf(" ".join(y_hat.tokens), " ".join(y.tokens), self.max_order, self.beta)


CONTENT_SCORERS = {"chrf": CharFScorer}


def make_scorer(name: str = "chrf") -> ContentScorer:
    return CONTENT_SCORERS[name]()


def calibrate_content_threshold(scores: Sequence[float], percentile: float = 60.0) -> float:
    """Content threshold at the given percentile of base-model content scores."""
    if len(scores) == 0:
        raise ValueError("need at least one score to calibrate")
    return float(np.clip(np.percentile(np.asarray(scores, dtype=np.float64), percentile), 0.0, 1.0))
