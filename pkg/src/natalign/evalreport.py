"""Post-processing, system-level evaluation and report/curve files."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import metrics
from .classifier import THRESHOLD, NaturalnessClassifier
from .corpus import ParallelPair, Perspective, Sentence, tokenize_text
from .reward import CharFScorer, ContentScorer, harmonic_mean

DEFAULT_PUNCT = ".,!?;:…-"


def postprocess_output(raw: str, punct: str = DEFAULT_PUNCT) -> str:
    """Collapse runs of the same punctuation character to a single one."""
    if not punct:
        return raw
    return re.sub(f"([{re.escape(punct)}])\\1+", r"\1", raw)


def postprocess_sentence(s: Sentence, punct: str = DEFAULT_PUNCT) -> Sentence:
    raw = postprocess_output(s.raw, punct)
    return Sentence(tokenize_text(raw), raw)


@dataclass
class SystemOutput:
    name: str
    books: dict[str, list[tuple[Sentence, Sentence]]]  # book -> [(source, output)]
    settings: dict = field(default_factory=dict)

    def outputs(self, book: str | None = None) -> list[Sentence]:
        books = [book] if book else list(self.books)
        return [o for b in books for _, o in self.books[b]]


def translate_pairs(model, pairs: Sequence[ParallelPair], name: str = "system", beam: int = 5,
                    postprocess: bool = True, punct: str = DEFAULT_PUNCT) -> SystemOutput:
    from .seq2seq import greedy_batch, translate

    sources = [p.source for p in pairs]
    if beam == 1:
        hyps = greedy_batch(model, sources)
    else:
        hyps = [translate(model, s, beam=beam) for s in sources]
    if postprocess:
        hyps = [postprocess_sentence(h, punct) for h in hyps]
    books: dict[str, list[tuple[Sentence, Sentence]]] = {}
    for p, h in zip(pairs, hyps):
        books.setdefault(p.book_id, []).append((p.source, h))
    return SystemOutput(name, books, {"beam": beam, "postprocess": postprocess})


def references_by_book(pairs: Sequence[ParallelPair]) -> dict[str, list[Sentence]]:
    refs: dict[str, list[Sentence]] = {}
    for p in pairs:
        refs.setdefault(p.book_id, []).append(p.target)
    return refs


def human_system(pairs: Sequence[ParallelPair], name: str = "Human Translation") -> SystemOutput:
    books: dict[str, list[tuple[Sentence, Sentence]]] = {}
    for p in pairs:
        books.setdefault(p.book_id, []).append((p.source, p.target))
    return SystemOutput(name, books, {"reference": True})


def _rate(clf: NaturalnessClassifier, sents: Sequence[Sentence], target: int) -> float:
    pred = clf.predict(sents, THRESHOLD)
    return 100.0 * float(np.mean(pred == target))


def classification_rate(clf: NaturalnessClassifier, outputs: SystemOutput | Sequence[Sentence],
                        target_aspect=None) -> float:
    """Percentage of outputs predicted as the target aspect, per book then averaged.

    ``target_aspect`` defaults to the classifier's preferred class; pass the other
    provenance label to count the opposite.
    """
    target = 1
    if target_aspect is not None:
        label = getattr(target_aspect, "value", target_aspect)
        if label == clf.perspective.preferred.value:
            target = 1
        elif label == clf.perspective.other.value:
            target = 0
        else:
            raise ValueError(f"{label!r} is not a class of {clf.perspective.value}")
    if isinstance(outputs, SystemOutput):
        books = [outputs.outputs(b) for b in outputs.books]
    else:
        books = [list(outputs)]
    books = [b for b in books if b]
    if not books:
        raise ValueError("no outputs to classify")
    return float(np.mean([_rate(clf, b, target) for b in books]))


# --------------------------------------------------------------------------
# reports

ACCURACY_COLS = ("BLEU", "content(chrF)")
CLASS_COLS = tuple(p.value for p in Perspective)
DIVERSITY_COLS = ("TTR", "Yule's I", "MTLD", "B1↓", "PTF↓", "CDU↓")
COLUMNS = ACCURACY_COLS + CLASS_COLS + DIVERSITY_COLS
LOWER_IS_BETTER = frozenset({"B1↓", "PTF↓", "CDU↓"})


@dataclass
class EvalConfig:
    top1000: Sequence[str] = ()
    mtld_threshold: float = 0.72
    scorer: ContentScorer = field(default_factory=CharFScorer)


@dataclass
class MetricReport:
    system: str
    books: dict[str, dict[str, float | None]]

    @property
    def average(self) -> dict[str, float | None]:
        avg: dict[str, float | None] = {}
        for col in COLUMNS:
            vals = [row[col] for row in self.books.values()]
            avg[col] = None if any(v is None for v in vals) else float(np.mean(vals))
        return avg

    def rows(self) -> list[tuple[str, dict[str, float | None]]]:
        return list(self.books.items()) + [("avg", self.average)]


def _safe(fn, *args):
    try:
        return fn(*args)
    except metrics.MetricError:
        return math.nan


def evaluate_book(outputs: Sequence[tuple[Sentence, Sentence]], references: Sequence[Sentence] | None,
                  classifiers: Mapping[Perspective, NaturalnessClassifier],
                  table: metrics.LexicalTranslationTable | None, config: EvalConfig) -> dict:
    hyps = [o for _, o in outputs]
    row: dict[str, float | None] = dict.fromkeys(COLUMNS)
    if references is not None:
        if len(references) != len(hyps):
            raise ValueError(f"{len(hyps)} outputs vs {len(references)} references")
        row["BLEU"] = metrics.bleu([h.tokens for h in hyps], [r.tokens for r in references])
        row["content(chrF)"] = float(np.mean([config.scorer(None, r, h) for h, r in zip(hyps, references)]))
    for persp, clf in classifiers.items():
        row[persp.value] = _rate(clf, hyps, 1)
    tokens = [t for h in hyps for t in h.tokens]
    row["TTR"] = _safe(metrics.ttr, tokens)
    row["Yule's I"] = _safe(metrics.yules_i, tokens)
    row["MTLD"] = _safe(metrics.mtld, tokens, config.mtld_threshold)
    if config.top1000:
        row["B1↓"] = _safe(metrics.b1, tokens, config.top1000)
    if table is not None:
        aligned = [(s.tokens, o.tokens) for s, o in outputs]
        row["PTF↓"] = _safe(metrics.ptf, aligned, table)
        row["CDU↓"] = _safe(metrics.cdu, aligned, table)
    return row


def evaluate_system(outputs: SystemOutput, references: Mapping[str, Sequence[Sentence]] | None,
                    classifiers: Mapping[Perspective, NaturalnessClassifier],
                    table: metrics.LexicalTranslationTable | None = None,
                    config: EvalConfig | None = None) -> MetricReport:
    config = config or EvalConfig()
    if references is not None:
        missing = sorted(set(references) - set(outputs.books))
        if missing:
            raise KeyError(f"system {outputs.name!r} has no output for book(s): {', '.join(missing)}")
    books = {}
    for book in sorted(references if references is not None else outputs.books):
        refs = None if references is None else references[book]
        books[book] = evaluate_book(outputs.books[book], refs, classifiers, table, config)
    return MetricReport(outputs.name, books)


def evaluate_with_human(outputs: Sequence[SystemOutput], pairs: Sequence[ParallelPair],
                        classifiers, table=None, config=None) -> list[MetricReport]:
    """Reports for a human-reference row followed by every system."""
    refs = references_by_book(pairs)
    human = evaluate_system(human_system(pairs), None, classifiers, table, config)
    return [human] + [evaluate_system(o, refs, classifiers, table, config) for o in outputs]


def _fmt(v: float | None) -> str:
    if v is None:
        return "-"
    if isinstance(v, float) and math.isnan(v):
        return "undefined"
    return f"{v:.4f}"


def format_report(reports: Sequence[MetricReport]) -> str:
    lines = ["system\tbook\t" + "\t".join(COLUMNS)]
    for rep in reports:
        for book, row in rep.rows():
            lines.append(f"{rep.system}\t{book}\t" + "\t".join(_fmt(row[c]) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def write_report(reports: Sequence[MetricReport], path: str | Path) -> None:
    Path(path).write_text(format_report(reports), encoding="utf-8")


# --------------------------------------------------------------------------
# training curves

CURVE_HEADER = ("step", "ht_or", "mt_ht", "mt_or", "mtld", "content", "hm")


@dataclass
class CurvePoint:
    step: int
    rates: dict[Perspective, float]  # fractions in [0, 1]
    mtld: float
    content: float
    perspective: Perspective = Perspective.MT_HT

    @property
    def classification_rate(self) -> float:
        return self.rates.get(self.perspective, math.nan)

    @property
    def hm(self) -> float:
        return harmonic_mean(self.classification_rate, self.content)


def evaluate_checkpoint(model, pairs: Sequence[ParallelPair],
                        classifiers: Mapping[Perspective, NaturalnessClassifier],
                        perspective: Perspective, step: int, scorer: ContentScorer | None = None,
                        beam: int = 1, postprocess: bool = True) -> CurvePoint:
    scorer = scorer or CharFScorer()
    out = translate_pairs(model, pairs, beam=beam, postprocess=postprocess)
    hyps = out.outputs()
    rates = {p: _rate(clf, hyps, 1) / 100.0 for p, clf in classifiers.items()}
    tokens = [t for h in hyps for t in h.tokens]
    content = float(np.mean([scorer(p.source, p.target, h) for p, h in zip(pairs, hyps)]))
    return CurvePoint(step, rates, _safe(metrics.mtld, tokens), content, perspective)


def emit_curves(points: Sequence[CurvePoint], path: str | Path) -> None:
    lines = ["\t".join(CURVE_HEADER)]
    for pt in sorted(points, key=lambda p: p.step):
        rates = [pt.rates.get(p) for p in Perspective]
        vals = [_fmt(r) for r in rates] + [_fmt(pt.mtld), _fmt(pt.content), _fmt(pt.hm)]
        lines.append(f"{pt.step}\t" + "\t".join(vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
