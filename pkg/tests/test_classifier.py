import numpy as np
import pytest
from hypothesis import given, strategies as st

from natalign.classifier import (
    FeatureSpec, NaturalnessClassifier, _bucket, confusion_matrix, cross_perspective_grid, featurize,
    score_naturalness, train_classifier, write_confusion, write_grid,
)
from natalign.corpus import LabeledText, Perspective, Provenance, tokenize

SMALL = FeatureSpec(hash_bits=12)


def _constant(perspective=Perspective.MT_HT, bias=0.0, spec=SMALL):
    return NaturalnessClassifier(np.zeros(spec.dim), bias, perspective, spec)


def _two_clusters(n=40):
    """MT side always says 'zeer', HT side always says 'heel'."""
    rng = np.random.default_rng(0)
    data = []
    for i in range(n):
        words = " ".join(f"t{rng.integers(20)}" for _ in range(rng.integers(3, 7)))
        data.append(LabeledText(tokenize(f"{words} heel ."), Provenance.HT, 1))
        data.append(LabeledText(tokenize(f"{words} zeer ."), Provenance.MT, 0))
    return data


def test_featurize_single_bigram():
    spec = FeatureSpec(char_orders=(2,), word_unigrams=False, hash_bits=12)
    assert featurize("ab", spec) == {_bucket("c2:ab", 12): 1.0}


def test_featurize_is_normalized_and_order_sensitive():
    fv = featurize("de kat zit", SMALL)
    assert sum(v * v for v in fv.values()) == pytest.approx(1.0)
    assert featurize("", SMALL) == {}
    assert featurize("ab", SMALL) != featurize("ba", SMALL)


def test_featurize_matches_on_raw_and_tokenized_text():
    assert featurize("Hallo, wereld!", SMALL) == featurize(tokenize("Hallo , wereld !"), SMALL)


def test_separable_data_is_learned():
    data = _two_clusters()
    clf = train_classifier(data, reg=1e-4, spec=SMALL)
    assert clf.perspective is Perspective.MT_HT
    assert clf.train_accuracy >= 0.99


def test_training_is_deterministic():
    data = _two_clusters(15)
    a = train_classifier(data, spec=SMALL, seed=3)
    b = train_classifier(data, spec=SMALL, seed=3)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_strong_regularization_gives_flat_scores():
    clf = train_classifier(_two_clusters(15), reg=1e6, spec=SMALL)
    assert np.abs(clf.weights).max() < 1e-5
    # balanced data: the unpenalized bias stays at zero as well
    assert clf.score("t1 heel .") == pytest.approx(0.5, abs=1e-4)


def test_single_class_data_is_rejected():
    data = [d for d in _two_clusters(5) if d.label == 1]
    with pytest.raises(ValueError, match="both labels"):
        train_classifier(data, spec=SMALL)


def test_zero_weight_classifier_scores_half():
    clf = _constant()
    assert clf.score("iets") == 0.5
    assert score_naturalness(clf, tokenize("nog iets")) == 0.5


@given(st.text(max_size=30), st.floats(-5, 5))
def test_scores_are_probabilities(text, bias):
    clf = _constant(bias=bias)
    s = clf.score(text)
    assert 0.0 < s < 1.0
    assert s + clf.complement(text) == 1.0


def test_aligned_weight_mass_raises_score():
    spec = FeatureSpec(char_orders=(), word_unigrams=True, hash_bits=12)
    clf = _constant(spec=spec)
    before = clf.score("heel")
    clf.weights[_bucket("w:heel", 12)] += 0.5
    middle = clf.score("heel")
    clf.weights[_bucket("w:heel", 12)] += 0.5
    assert before < middle < clf.score("heel")
    assert clf.score("zeer") == before


def test_save_load_round_trip(tmp_path):
    clf = train_classifier(_two_clusters(10), spec=SMALL)
    clf.save(tmp_path / "c.clf")
    again = NaturalnessClassifier.load(tmp_path / "c.clf")
    assert np.array_equal(clf.weights, again.weights) and again.bias == clf.bias
    assert again.perspective is clf.perspective and again.spec == clf.spec
    assert again.train_accuracy == clf.train_accuracy
    (tmp_path / "bad.clf").write_bytes(b"junk")
    with pytest.raises(ValueError):
        NaturalnessClassifier.load(tmp_path / "bad.clf")


def test_confusion_matrix_perfect_and_constant():
    data = _two_clusters(10)
    clf = train_classifier(data, spec=SMALL)
    cm = confusion_matrix(clf, data)
    assert cm.counts.tolist() == [[10, 0], [0, 10]] and cm.accuracy == 1.0
    # 0.5 counts as t1
    cm = confusion_matrix(_constant(), data)
    assert cm.counts.tolist() == [[0, 10], [0, 10]] and cm.accuracy == 0.5
    assert confusion_matrix(clf, data).counts.tolist() == [[10, 0], [0, 10]]
    with pytest.raises(ValueError):
        confusion_matrix(clf, [])


def test_cross_perspective_grid(tmp_path):
    data = _two_clusters(10)
    clf = train_classifier(data, spec=SMALL)
    flipped = [LabeledText(d.sentence, d.provenance, 1 - d.label) for d in data]
    grid = cross_perspective_grid({Perspective.MT_HT: clf, Perspective.MT_OR: _constant(Perspective.MT_OR)},
                                  {Perspective.MT_HT: data, Perspective.MT_OR: flipped})
    assert grid[Perspective.MT_HT] == {Perspective.MT_HT: 1.0, Perspective.MT_OR: 0.0}
    assert grid[Perspective.MT_OR] == {Perspective.MT_HT: 0.5, Perspective.MT_OR: 0.5}
    write_grid(grid, tmp_path / "grid.tsv")
    assert (tmp_path / "grid.tsv").read_text().splitlines() == [
        "classifier\tMT-HT\tMT-OR", "MT-HT\t1.0000\t0.0000", "MT-OR\t0.5000\t0.5000"]
    write_confusion(confusion_matrix(clf, data), Perspective.MT_HT, tmp_path / "cm.tsv")
    assert (tmp_path / "cm.tsv").read_text().splitlines()[0] == "true\\pred\tMT\tHT"
