"""Lexical-diversity and translation-accuracy metrics."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Tokens = Sequence[str]


class MetricError(ValueError):
    pass


def ttr(text: Tokens) -> float:
    if not text:
        raise MetricError("TTR of an empty text is undefined")
    return len(set(text)) / len(text)


def yules_i(text: Tokens) -> float:
    """V^2 / (sum_i i^2 f(i) - V), where f(i) counts the types seen exactly i times.

    The sum runs over every observed frequency. Returns NaN when the denominator
    is zero, i.e. when every token is distinct.
    """
    if len(text) < 2:
        raise MetricError("Yule's I needs at least two tokens")
    freqs = Counter(text)
    v = len(freqs)
    spectrum = Counter(freqs.values())
    m2 = sum(i * i * fi for i, fi in spectrum.items())
    if m2 == v:
        return math.nan
    return v * v / (m2 - v)


def _mtld_pass(text: Tokens, threshold: float) -> float:
    factors = 0.0
    types: set[str] = set()
    count = 0
    for tok in text:
        types.add(tok)
        count += 1
        if len(types) / count < threshold:
            factors += 1
            types, count = set(), 0
    if count:
        factors += (1 - len(types) / count) / (1 - threshold)
    if factors == 0:
        return float(len(text))
    return len(text) / factors


def mtld(text: Tokens, threshold: float = 0.72) -> float:
    """Mean of the forward and backward MTLD passes, with partial final factors.

    A pass that completes no factor at all (zero factor count) is defined as the
    text length.
    """
    if not text:
        raise MetricError("MTLD of an empty text is undefined")
    return 0.5 * (_mtld_pass(text, threshold) + _mtld_pass(list(reversed(text)), threshold))


def top_words(corpus: Iterable[Tokens], n: int = 1000) -> list[str]:
    """The ``n`` most frequent words, ties broken lexicographically."""
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(sent)
    return sorted(counts, key=lambda w: (-counts[w], w))[:n]


def b1(text: Tokens, top1000: Iterable[str]) -> float:
    top = set(top1000)
    if not top:
        raise MetricError("the frequent-word list is empty")
    if not text:
        raise MetricError("B1 of an empty text is undefined")
    return sum(tok in top for tok in text) / len(text)


# --------------------------------------------------------------------------
# translation options

@dataclass
class LexicalTranslationTable:
    """Translation options per source word, estimated by EM word alignment.

    ``options[e][f]`` counts how often target word ``f`` was aligned to source
    word ``e`` with posterior at least ``floor``; ``probs[e][f]`` is the lexical
    translation probability t(f | e) after the EM rounds.
    """

    options: dict[str, dict[str, int]]
    probs: dict[str, dict[str, float]]
    source_freq: dict[str, int]
    min_source_freq: int = 10
    min_options: int = 2
    floor: float = 0.1

    def is_relevant(self, word: str) -> bool:
        return (self.source_freq.get(word, 0) >= self.min_source_freq
                and len(self.options.get(word, {})) >= self.min_options)

    @property
    def relevant(self) -> list[str]:
        return sorted(w for w in self.options if self.is_relevant(w))

    def most_frequent_option(self, word: str) -> str:
        opts = self.options[word]
        return min(opts, key=lambda f: (-opts[f], f))

    def option_list(self, word: str) -> list[str]:
        opts = self.options[word]
        return sorted(opts, key=lambda f: (-opts[f], f))


def _alignment_posteriors(src: Tokens, tgt: Tokens, t: dict) -> list[list[float]]:
    """post[j][i] = P(target j aligned to source i)."""
    post = []
    for f in tgt:
        row = [t[e].get(f, 0.0) for e in src]
        z = sum(row)
        post.append([v / z for v in row] if z > 0 else [1.0 / len(src)] * len(src))
    return post


def build_translation_table(pairs: Sequence[tuple[Tokens, Tokens]], iters: int = 5,
                            floor: float = 0.1, min_source_freq: int = 10,
                            min_options: int = 2) -> LexicalTranslationTable:
    """Lexical EM alignment from a uniform start, then posterior-floored option counts."""
    pairs = [(list(s), list(t)) for s, t in pairs if s and t]
    if not pairs:
        raise MetricError("cannot build a translation table from an empty corpus")
    tgt_vocab = sorted({f for _, tgt in pairs for f in tgt})
    uniform = 1.0 / len(tgt_vocab)
    t: dict[str, dict[str, float]] = defaultdict(dict)
    for src, tgt in pairs:
        for e in src:
            for f in tgt:
                t[e][f] = uniform

    for _ in range(iters):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        for src, tgt in pairs:
            post = _alignment_posteriors(src, tgt, t)
            for j, f in enumerate(tgt):
                for i, e in enumerate(src):
                    counts[e][f] += post[j][i]
        t = defaultdict(dict)
        for e, row in counts.items():
            z = sum(row.values())
            t[e] = {f: c / z for f, c in row.items()}

    options: dict[str, dict[str, int]] = defaultdict(dict)
    source_freq: Counter[str] = Counter()
    for src, tgt in pairs:
        source_freq.update(src)
        post = _alignment_posteriors(src, tgt, t)
        for i, e in enumerate(src):
            for j, f in enumerate(tgt):
                if post[j][i] >= floor:
                    options[e][f] = options[e].get(f, 0) + 1
    return LexicalTranslationTable(dict(options), {e: dict(r) for e, r in t.items()},
                                   dict(source_freq), min_source_freq, min_options, floor)


def _chosen_options(outputs: Sequence[tuple[Tokens, Tokens]], table: LexicalTranslationTable):
    """For every relevant source word: Counter of options chosen in the outputs.

    The chosen option for one occurrence is the table option present in the
    output sentence with the highest t(f | e); occurrences whose output holds no
    option are skipped.
    """
    chosen: dict[str, Counter] = {}
    for src, out in outputs:
        present = set(out)
        for e in src:
            if not table.is_relevant(e):
                continue
            cands = [f for f in table.options[e] if f in present]
            if not cands:
                continue
            probs = table.probs.get(e, {})
            best = min(cands, key=lambda f: (-probs.get(f, 0.0), f))
            chosen.setdefault(e, Counter())[best] += 1
    if not chosen:
        raise MetricError("no relevant source word was observed in the outputs")
    return chosen


def ptf(outputs: Sequence[tuple[Tokens, Tokens]], table: LexicalTranslationTable) -> float:
    """Average rate at which each relevant source word gets its most frequent option."""
    chosen = _chosen_options(outputs, table)
    rates = [c[table.most_frequent_option(e)] / sum(c.values()) for e, c in sorted(chosen.items())]
    return sum(rates) / len(rates)


def cosine_to_uniform(counts: Sequence[float]) -> float:
    norm = math.sqrt(sum(c * c for c in counts))
    if norm == 0:
        raise MetricError("zero option-count vector")
    return sum(counts) / (norm * math.sqrt(len(counts)))


def cdu(outputs: Sequence[tuple[Tokens, Tokens]], table: LexicalTranslationTable) -> float:
    """Average cosine between each relevant word's option-count vector and the uniform vector."""
    chosen = _chosen_options(outputs, table)
    sims = [cosine_to_uniform([c[f] for f in table.option_list(e)]) for e, c in sorted(chosen.items())]
    return sum(sims) / len(sims)


# --------------------------------------------------------------------------
# BLEU

def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@dataclass
class BleuStats:
    correct: list[int] = field(default_factory=lambda: [0] * 4)
    total: list[int] = field(default_factory=lambda: [0] * 4)
    sys_len: int = 0
    ref_len: int = 0


def bleu_stats(hypotheses: Sequence[Tokens], references: Sequence[Tokens], max_order: int = 4) -> BleuStats:
    if len(hypotheses) != len(references):
        raise MetricError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    st = BleuStats([0] * max_order, [0] * max_order)
    for hyp, ref in zip(hypotheses, references):
        st.sys_len += len(hyp)
        st.ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            st.correct[n - 1] += sum((h & r).values())
            st.total[n - 1] += sum(h.values())
    return st


def bleu(hypotheses: Sequence[Tokens], references: Sequence[Tokens], max_order: int = 4) -> float:
    """Corpus BLEU in [0, 100] with exponential smoothing of zero match counts.

    A zero-match order n gets precision 1 / (2^k * total_n), k counting the
    zero-match orders so far. An order with no hypothesis n-grams at all makes
    the score 0.
    """
    if not references:
        raise MetricError("references must be non-empty")
    st = bleu_stats(hypotheses, references, max_order)
    if st.sys_len == 0:
        return 0.0
    log_p = 0.0
    smooth = 1.0
    for n in range(max_order):
        if st.total[n] == 0:
            return 0.0
        if st.correct[n] == 0:
            smooth *= 2
            log_p += math.log(1.0 / (smooth * st.total[n]))
        else:
            log_p += math.log(st.correct[n] / st.total[n])
    bp = 1.0 if st.sys_len >= st.ref_len else math.exp(1 - st.ref_len / st.sys_len)
    return min(100.0, 100.0 * bp * math.exp(log_p / max_order))
