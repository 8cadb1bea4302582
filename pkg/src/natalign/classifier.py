"""Hashed n-gram logistic-regression classifiers over the three provenance perspectives."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit

from .corpus import LabeledText, Perspective, Sentence, detokenize, tokenize_text

MAGIC = b"NATCLF\x00\x00"
FORMAT_VERSION = 1
THRESHOLD = 0.5


@dataclass(frozen=True)
class FeatureSpec:
    char_orders: tuple[int, ...] = (1, 2, 3, 4)
    word_unigrams: bool = True
    hash_bits: int = 18
    lowercase: bool = True

    @property
    def dim(self) -> int:
        return 1 << self.hash_bits


@lru_cache(maxsize=1 << 20)
def _bucket(feature: str, bits: int) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << bits) - 1)


def _surface(s: Sentence | str) -> str:
    # canonical spacing so raw corpus lines and decoded model outputs featurize alike
    if isinstance(s, Sentence):
        return detokenize(s.tokens)
    return detokenize(tokenize_text(s))


def featurize(s: Sentence | str, spec: FeatureSpec = FeatureSpec()) -> dict[int, float]:
    """L2-normalized hashed counts of character n-grams and word unigrams."""
    text = _surface(s)
    if spec.lowercase:
        text = text.lower()
    counts: dict[int, float] = {}
    for n in spec.char_orders:
        for i in range(len(text) - n + 1):
            b = _bucket(f"c{n}:{text[i:i + n]}", spec.hash_bits)
            counts[b] = counts.get(b, 0.0) + 1.0
    if spec.word_unigrams:
        for tok in tokenize_text(text):
            b = _bucket(f"w:{tok}", spec.hash_bits)
            counts[b] = counts.get(b, 0.0) + 1.0
    norm = sum(v * v for v in counts.values()) ** 0.5
    return {k: v / norm for k, v in counts.items()} if norm else {}


def feature_matrix(sents: Sequence[Sentence | str], spec: FeatureSpec) -> sparse.csr_matrix:
    indptr, indices, data = [0], [], []
    for s in sents:
        fv = featurize(s, spec)
        keys = sorted(fv)
        indices.extend(keys)
        data.extend(fv[k] for k in keys)
        indptr.append(len(indices))
    return sparse.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                              np.asarray(indptr, dtype=np.int64)), shape=(len(sents), spec.dim))


@dataclass
class NaturalnessClassifier:
    """p(t1 | text) = sigmoid(w . f(text) + b); t1 is the perspective's preferred class."""

    weights: np.ndarray
    bias: float
    perspective: Perspective
    spec: FeatureSpec = field(default_factory=FeatureSpec)
    train_accuracy: float = float("nan")

    def logits(self, sents: Sequence[Sentence | str]) -> np.ndarray:
        return feature_matrix(sents, self.spec) @ self.weights + self.bias

    def scores(self, sents: Sequence[Sentence | str]) -> np.ndarray:
        return expit(self.logits(sents))

    def score(self, s: Sentence | str) -> float:
        return float(self.scores([s])[0])

    def complement(self, s: Sentence | str) -> float:
        return 1.0 - self.score(s)

    def predict(self, sents: Sequence[Sentence | str], threshold: float = THRESHOLD) -> np.ndarray:
        return (self.scores(sents) >= threshold).astype(np.int64)

    # ------------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        nz = np.flatnonzero(self.weights)
        header = {
            "perspective": self.perspective.value,
            "spec": asdict(self.spec),
            "bias": self.bias,
            "train_accuracy": None if np.isnan(self.train_accuracy) else self.train_accuracy,
            "nnz": int(nz.size),
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
            fh.write(head)
            fh.write(nz.astype("<u4").tobytes())
            fh.write(self.weights[nz].astype("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "NaturalnessClassifier":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise ValueError(f"{path}: not a classifier file")
        version, hlen = struct.unpack_from("<IQ", data, 8)
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported classifier format version {version}")
        off = 8 + struct.calcsize("<IQ")
        header = json.loads(data[off : off + hlen])
        off += hlen
        spec_d = header["spec"]
        spec = FeatureSpec(tuple(spec_d["char_orders"]), spec_d["word_unigrams"],
                           spec_d["hash_bits"], spec_d["lowercase"])
        nnz = header["nnz"]
        idx = np.frombuffer(data, "<u4", nnz, off)
        vals = np.frombuffer(data, "<f8", nnz, off + 4 * nnz)
        w = np.zeros(spec.dim)
        w[idx] = vals
        acc = header["train_accuracy"]
        return cls(w, header["bias"], Perspective.parse(header["perspective"]), spec,
                   float("nan") if acc is None else acc)


def score_naturalness(clf: NaturalnessClassifier, s: Sentence | str) -> float:
    return clf.score(s)


def train_classifier(data: Sequence[LabeledText], reg: float = 1e-4, seed: int = 0,
                     spec: FeatureSpec | None = None, perspective: Perspective | str | None = None,
                     max_iter: int = 500) -> NaturalnessClassifier:
    """Minimize mean logistic loss + reg/2 * |w|^2 with L-BFGS from a zero start.

    The bias is not penalized. The optimizer is deterministic; ``seed`` only
    fixes the row order, which does not change the optimum.
    """
    spec = spec or FeatureSpec()
    labels = np.array([d.label for d in data], dtype=np.float64)
    if len(set(labels.tolist())) < 2:
        raise ValueError("training data must contain both labels")
    if perspective is None:
        perspective = _infer_perspective(data)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    X = feature_matrix([data[i].sentence for i in order], spec)
    y = labels[order]
    n, dim = X.shape

    def objective(theta):
        w, b = theta[:dim], theta[dim]
        z = X @ w + b
        # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0
        loss = np.logaddexp(0.0, np.where(y > 0, -z, z)).mean() + 0.5 * reg * w @ w
        g = (expit(z) - y) / n
        grad = np.empty_like(theta)
        grad[:dim] = X.T @ g + reg * w
        grad[dim] = g.sum()
        return loss, grad

    res = optimize.minimize(objective, np.zeros(dim + 1), jac=True, method="L-BFGS-B",
                            options={"maxiter": max_iter, "gtol": 1e-8})
    clf = NaturalnessClassifier(res.x[:dim].copy(), float(res.x[dim]), Perspective.parse(perspective), spec)
    clf.train_accuracy = float((clf.predict([d.sentence for d in data]) == labels).mean())
    return clf


def _infer_perspective(data: Sequence[LabeledText]) -> Perspective:
    pos = {d.provenance for d in data if d.label == 1}
    neg = {d.provenance for d in data if d.label == 0}
    for p in Perspective:
        if pos == {p.preferred} and neg == {p.other}:
            return p
    raise ValueError("cannot infer the perspective from the data; pass it explicitly")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true label, cols: predicted label; index 1 = t1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())


def confusion_matrix(clf: NaturalnessClassifier, test: Sequence[LabeledText],
                     threshold: float = THRESHOLD) -> ConfusionMatrix:
    """Scores at or above ``threshold`` predict t1."""
    if not test:
        raise ValueError("cannot evaluate on an empty test set")
    pred = clf.predict([t.sentence for t in test], threshold)
    counts = np.zeros((2, 2), dtype=np.int64)
    for true, p in zip((t.label for t in test), pred):
        counts[true, p] += 1
    return ConfusionMatrix(counts)


def cross_perspective_grid(classifiers: Mapping[Perspective, NaturalnessClassifier],
                           test_sets: Mapping[Perspective, Sequence[LabeledText]]) -> dict:
    """Accuracy of every classifier (row) on every perspective's test set (column)."""
    grid: dict[Perspective, dict[Perspective, float]] = {}
    for row, clf in classifiers.items():
        grid[row] = {col: confusion_matrix(clf, ts).accuracy for col, ts in test_sets.items()}
    return grid


def write_grid(grid: Mapping[Perspective, Mapping[Perspective, float]], path: str | Path) -> None:
    cols = list(next(iter(grid.values())).keys()) if grid else []
    lines = ["classifier\t" + "\t".join(c.value for c in cols)]
    for row, vals in grid.items():
        lines.append(row.value + "\t" + "\t".join(f"{vals[c]:.4f}" for c in cols))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_confusion(cm: ConfusionMatrix, perspective: Perspective, path: str | Path) -> None:
    t1, t0 = perspective.preferred.value, perspective.other.value
    c = cm.counts
    lines = [
        f"true\\pred\t{t0}\t{t1}",
        f"{t0}\t{c[0, 0]}\t{c[0, 1]}",
        f"{t1}\t{c[1, 0]}\t{c[1, 1]}",
        f"accuracy\t{cm.accuracy:.6f}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
