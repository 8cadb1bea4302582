"""Synthetic corpora for sanity checks and small-scale reproduction runs.

``style_task`` builds a toy bilingual corpus where every source has two valid
renderings that differ only in one register marker word: a bland marker used
most of the time and a natural one. Sources that start with a *cue* symbol take
the natural register often (though still below one half); the rest almost
never do. A mode-seeking base model therefore always emits the bland register.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import ParallelPair, Sentence

BLAND_MARKER = "zeer"
NATURAL_MARKER = "heel"


def copy_task(n: int, n_symbols: int = 20, min_len: int = 3, max_len: int = 10,
              seed: int = 0, book_size: int | None = None) -> list[ParallelPair]:
    """Identity translation over ``n_symbols`` word types."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        toks = tuple(f"w{rng.randrange(n_symbols)}" for _ in range(rng.randint(min_len, max_len)))
        book = f"book{i // book_size}" if book_size else "book0"
        out.append(ParallelPair(Sentence.from_tokens(toks), Sentence.from_tokens(toks), book))
    return out


@dataclass
class StyleTask:
    train: list[ParallelPair]
    valid: list[ParallelPair]
    test: list[ParallelPair]
    # classifier data: natural ("human") renderings of fresh sources; the MT side
    # comes from translating the same sources with the base model
    classifier_train: list[ParallelPair]
    classifier_test: list[ParallelPair]
    cue_symbols: frozenset[str]

    def is_cue(self, source: Sentence) -> bool:
        return source.tokens[0] in self.cue_symbols


def render(source: tuple[str, ...], natural: bool) -> Sentence:
    words = tuple("t" + tok[1:] for tok in source)
    return Sentence.from_tokens(words + (NATURAL_MARKER if natural else BLAND_MARKER, "."))


def style_task(n_train: int = 6000, n_valid: int = 200, n_test: int = 200, n_pool: int = 600,
               n_symbols: int = 20, n_cue: int = 4, p_cue: float = 0.45, natural_rate: float = 0.10,
               min_len: int = 4, max_len: int = 8, n_books: int = 4, seed: int = 0) -> StyleTask:
    """Generate the register task; overall the natural register appears ``natural_rate`` of the time."""
    frac = n_cue / n_symbols
    p_plain = (natural_rate - frac * p_cue) / (1 - frac)
    if not 0 <= p_plain <= 1:
        raise ValueError("cue settings are inconsistent with the overall natural rate")
    rng = random.Random(seed)
    cue = frozenset(f"s{i}" for i in range(n_cue))

    def source() -> tuple[str, ...]:
        return tuple(f"s{rng.randrange(n_symbols)}" for _ in range(rng.randint(min_len, max_len)))

    def pairs(n: int, prefix: str, always_natural: bool = False) -> list[ParallelPair]:
        out = []
        for i in range(n):
            src = source()
            p = 1.0 if always_natural else (p_cue if src[0] in cue else p_plain)
            book = f"{prefix}{i * n_books // n}"
            out.append(ParallelPair(Sentence.from_tokens(src), render(src, rng.random() < p), book))
        return out

    train = pairs(n_train, "train")
    valid = pairs(n_valid, "valid")
    test = pairs(n_test, "book")
    clf_train = pairs(n_pool, "clf", always_natural=True)
    clf_test = pairs(n_test, "clftest", always_natural=True)
    return StyleTask(train, valid, test, clf_train, clf_test, cue)


def write_corpus(task: StyleTask, directory: str | Path, n_original: int | None = None,
                 seed: int = 0) -> Path:
    """Write ``task`` as a manifest plus one file per book side; returns the manifest path.

    Train/valid/test books become parallel HT entries. Original target-language
    text (OR) is made of natural renderings of fresh sources, one document per
    split for train and valid.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = ["id\tpaths\tlanguage\tprovenance\tsplit"]

    def dump(name: str, sents) -> str:
        (directory / name).write_text("".join(s.raw + "\n" for s in sents), encoding="utf-8")
        return name

    for split, pairs in (("train", task.train), ("valid", task.valid), ("test", task.test)):
        books: dict[str, list[ParallelPair]] = {}
        for p in pairs:
            books.setdefault(p.book_id, []).append(p)
        for book, bp in books.items():
            src = dump(f"{book}.src", [p.source for p in bp])
            tgt = dump(f"{book}.tgt", [p.target for p in bp])
            rows.append(f"{book}\t{src},{tgt}\tsrc-tgt\tHT\t{split}")
    rng = random.Random(seed)
    pools = {"train": task.classifier_train, "valid": task.classifier_test}
    for split, pool in pools.items():
        sents = [p.target for p in pool]
        if n_original is not None:
            sents = rng.sample(sents, min(n_original, len(sents)))
        rows.append(f"orig_{split}\t{dump(f'orig_{split}.txt', sents)}\ttgt\tOR\t{split}")
    manifest = directory / "manifest.tsv"
    manifest.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest
