import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from natalign.classifier import FeatureSpec, NaturalnessClassifier, _bucket
from natalign.corpus import ParallelPair, Perspective, Sentence, tokenize
from natalign.evalreport import (
    COLUMNS, DEFAULT_PUNCT, CurvePoint, EvalConfig, SystemOutput, classification_rate, emit_curves,
    evaluate_system, evaluate_with_human, format_report, human_system, postprocess_output,
    postprocess_sentence, references_by_book, write_report,
)

SPEC = FeatureSpec(char_orders=(), word_unigrams=True, hash_bits=10)
ALPHABET = "ab .,!?;:…-xé "


def _clf(perspective=Perspective.MT_HT, word=None, bias=0.0):
    w = np.zeros(SPEC.dim)
    if word:
        w[_bucket(f"w:{word}", SPEC.hash_bits)] = 10.0
    return NaturalnessClassifier(w, bias, perspective, SPEC)


# --------------------------------------------------------------------------
# post-processing

def test_long_period_run_collapses():
    raw = "…verlaten dingen............."
    assert postprocess_output(raw) == "…verlaten dingen."
    assert postprocess_output(raw).encode("utf-8") == "…verlaten dingen.".encode("utf-8")
    assert postprocess_output("dingen.............") == "dingen."


def test_postprocess_examples():
    assert postprocess_output("Hello!!") == "Hello!"
    assert postprocess_output("a.b.c") == "a.b.c"
    assert postprocess_output("wat?!?!") == "wat?!?!"
    assert postprocess_output("aa  bb") == "aa  bb"
    assert postprocess_output("x...", punct="") == "x..."


def _strip_runs(s):
    """Reference implementation: drop a punctuation char equal to its predecessor."""
    out = []
    for ch in s:
        if out and ch in DEFAULT_PUNCT and out[-1] == ch:
            continue
        out.append(ch)
    return "".join(out)


def test_postprocess_on_random_strings():
    rng = random.Random(0)
    for _ in range(1000):
        s = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(0, 30)))
        once = postprocess_output(s)
        assert postprocess_output(once) == once
        assert once == _strip_runs(s)
        keep = lambda t: "".join(c for c in t if c not in DEFAULT_PUNCT)
        assert keep(once) == keep(s)


@given(st.text(ALPHABET, max_size=40))
def test_postprocess_idempotent(s):
    assert postprocess_output(postprocess_output(s)) == postprocess_output(s)


def test_postprocess_sentence_retokenizes():
    s = postprocess_sentence(Sentence(tokenize("ja . . .").tokens, "ja..."))
    assert s.raw == "ja." and s.tokens == ("ja", ".")


# --------------------------------------------------------------------------
# classification rates

def _system(books):
    return SystemOutput("sys", {b: [(tokenize("s"), tokenize(t)) for t in ts] for b, ts in books.items()})


def test_classification_rate_counts():
    clf = _clf(word="heel", bias=-5.0)
    out = _system({"b1": ["heel mooi", "zeer mooi"], "b2": ["heel", "heel", "zeer", "zeer"]})
    assert classification_rate(clf, out) == 50.0
    out = _system({"b1": ["heel mooi", "zeer mooi", "zeer"], "b2": ["heel"]})
    # per book then averaged: (1/3 + 1) / 2
    assert classification_rate(clf, out) == pytest.approx(100 * (1 / 3 + 1) / 2)
    assert classification_rate(clf, out, "MT") == pytest.approx(100 * (2 / 3 + 0) / 2)
    assert classification_rate(clf, [tokenize("heel")] * 3) == 100.0
    with pytest.raises(ValueError):
        classification_rate(clf, out, "OR")
    with pytest.raises(ValueError):
        classification_rate(clf, [])


def test_constant_classifier_rate_follows_boundary():
    out = _system({"b": ["een", "twee"]})
    assert classification_rate(_clf(), out) == 100.0
    assert classification_rate(_clf(), out, Perspective.MT_HT.other) == 0.0


# --------------------------------------------------------------------------
# reports

def _pairs():
    return [ParallelPair(tokenize(f"s{i} s{i + 1}"), tokenize(f"t{i} t{i + 1} heel ."), f"book{i % 2}")
            for i in range(6)]


def test_references_against_themselves():
    pairs = _pairs()
    refs = references_by_book(pairs)
    rep = evaluate_system(human_system(pairs), refs, {Perspective.MT_HT: _clf(word="heel", bias=-5)})
    for _, row in rep.rows():
        assert row["BLEU"] == pytest.approx(100.0)
        assert row["content(chrF)"] == 1.0
        assert row["MT-HT"] == 100.0


def test_single_book_average_equals_book_row():
    pairs = [p for p in _pairs() if p.book_id == "book0"]
    rep = evaluate_system(human_system(pairs), references_by_book(pairs), {},
                          config=EvalConfig(top1000=["heel"]))
    (book, row), (name, avg) = rep.rows()
    assert name == "avg"
    for col in COLUMNS:
        a, b = row[col], avg[col]
        assert (a is None and b is None) or (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b)


def test_average_is_mean_of_books():
    rep = evaluate_system(human_system(_pairs()), None, {}, config=EvalConfig(top1000=["heel", "."]))
    for col in ("TTR", "MTLD", "B1↓"):
        vals = [row[col] for row in rep.books.values()]
        assert rep.average[col] == pytest.approx(sum(vals) / len(vals), abs=1e-9)


def test_missing_book_is_named():
    pairs = _pairs()
    partial = human_system([p for p in pairs if p.book_id == "book0"])
    with pytest.raises(KeyError, match="book1"):
        evaluate_system(partial, references_by_book(pairs), {})


def test_report_format(tmp_path):
    pairs = _pairs()
    sys_a = human_system(pairs, name="A")
    reports = evaluate_with_human([sys_a], pairs, {Perspective.MT_HT: _clf()})
    text = format_report(reports)
    lines = text.splitlines()
    assert lines[0] == ("system\tbook\tBLEU\tcontent(chrF)\tHT-OR\tMT-HT\tMT-OR\tTTR\tYule's I\tMTLD"
                        "\tB1↓\tPTF↓\tCDU↓")
    assert [l.split("\t")[:2] for l in lines[1:]] == [
        ["Human Translation", "book0"], ["Human Translation", "book1"], ["Human Translation", "avg"],
        ["A", "book0"], ["A", "book1"], ["A", "avg"]]
    # human row carries no accuracy columns and unused classifiers are blank
    human_avg = lines[3].split("\t")
    assert human_avg[2] == "-" and human_avg[4] == "-" and human_avg[5] == "100.0000"
    write_report(reports, tmp_path / "r.tsv")
    assert (tmp_path / "r.tsv").read_text(encoding="utf-8") == text


# --------------------------------------------------------------------------
# curves

def test_curve_point_hm():
    assert CurvePoint(0, {Perspective.MT_HT: 0.6}, 10.0, 0.8).hm == pytest.approx(0.685714, abs=1e-6)
    assert CurvePoint(0, {Perspective.MT_HT: 0.0}, 10.0, 0.8).hm == 0.0


def test_emit_curves(tmp_path):
    emit_curves([CurvePoint(0, {Perspective.MT_HT: 0.25}, 12.5, 0.5)], tmp_path / "c.tsv")
    assert (tmp_path / "c.tsv").read_text().splitlines() == [
        "step\tht_or\tmt_ht\tmt_or\tmtld\tcontent\thm",
        "0\t-\t0.2500\t-\t12.5000\t0.5000\t0.3333"]
