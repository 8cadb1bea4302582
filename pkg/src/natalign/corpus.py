"""Corpus ingestion: tokenization, vocabularies, manifests and classifier datasets."""

from __future__ import annotations

import enum
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

PAD, BOS, EOS, UNK, ORIG_TAG, TRAN_TAG = "<pad>", "<s>", "</s>", "<unk>", "<orig>", "<tran>"
SPECIALS = (PAD, BOS, EOS, UNK, ORIG_TAG, TRAN_TAG)


class Provenance(str, enum.Enum):
    OR = "OR"
    HT = "HT"
    MT = "MT"

    @classmethod
    def parse(cls, label: str) -> "Provenance":
        try:
            return cls(label.strip().upper())
        except ValueError:
            raise CorpusError(f"unknown provenance label {label!r} (expected OR, HT or MT)") from None


class Perspective(str, enum.Enum):
    """Which provenance pair a binary classifier separates.

    ``preferred`` is the more natural class (t1), ``other`` is t0.
    """

    HT_OR = "HT-OR"
    MT_HT = "MT-HT"
    MT_OR = "MT-OR"

    @classmethod
    def parse(cls, value: "str | Perspective") -> "Perspective":
        if isinstance(value, Perspective):
            return value
        try:
            return cls(value.strip().upper().replace("_", "-"))
        except ValueError:
            raise ValueError(f"unknown perspective {value!r}") from None

    @property
    def preferred(self) -> Provenance:
        return Provenance.HT if self is Perspective.MT_HT else Provenance.OR

    @property
    def other(self) -> Provenance:
        return Provenance.HT if self is Perspective.HT_OR else Provenance.MT

    @property
    def slug(self) -> str:
        return self.value.lower().replace("-", "_")


class CorpusError(ValueError):
    pass


def tokenize_text(raw: str, lowercase: bool = False) -> tuple[str, ...]:
    if lowercase:
        raw = raw.lower()
    return tuple(_TOKEN_RE.findall(raw))


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens with spaces, attaching punctuation to the preceding token."""
    out: list[str] = []
    for tok in tokens:
        if out and not (tok[0].isalnum() or tok[0] == "_"):
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    raw: str

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Sentence":
        tokens = tuple(tokens)
        return cls(tokens, detokenize(tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return self.raw


def tokenize(raw: str, lowercase: bool = False) -> Sentence:
    """Split ``raw`` on whitespace and detach every punctuation character.

    >>> tokenize("Hello, world!", lowercase=True).tokens
    ('hello', ',', 'world', '!')
    """
    return Sentence(tokenize_text(raw, lowercase), raw)


@dataclass(frozen=True)
class Document:
    id: str
    language: str
    provenance: Provenance
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class ParallelPair:
    source: Sentence
    target: Sentence
    book_id: str = ""

    def __post_init__(self):
        if not self.source.tokens or not self.target.tokens:
            raise CorpusError(f"empty side in parallel pair from book {self.book_id!r}")


@dataclass(frozen=True)
class LabeledText:
    sentence: Sentence
    provenance: Provenance
    label: int  # 1 = preferred class (t1)


class Vocabulary:
    """Bijective token <-> id map with the six specials pinned at ids 0..5."""

    pad_id, bos_id, eos_id, unk_id, orig_id, tran_id = range(6)

    def __init__(self, tokens: Iterable[str] = ()):
        self.id_to_token: list[str] = list(SPECIALS)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(SPECIALS)}
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.id_to_token)
                self.id_to_token.append(tok)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def encode(self, tokens: Iterable[str]) -> list[int]:
        unk = self.unk_id
        return [self.token_to_id.get(t, unk) for t in tokens]

    def decode(self, ids: Iterable[int], strip_specials: bool = True) -> list[str]:
        toks = [self.id_to_token[i] for i in ids]
        if strip_specials:
            toks = [t for t in toks if t not in SPECIALS]
        return toks

    def to_list(self) -> list[str]:
        return list(self.id_to_token[len(SPECIALS):])

    @classmethod
    def from_list(cls, tokens: Sequence[str]) -> "Vocabulary":
        return cls(tokens)


def build_vocab(corpus: Iterable[Sentence | Sequence[str]], min_freq: int = 2) -> Vocabulary:
    """Keep tokens seen at least ``min_freq`` times, most frequent first (ties lexicographic)."""
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    for item in corpus:
        counts.update(item.tokens if isinstance(item, Sentence) else item)
    kept = [t for t, c in counts.items() if c >= min_freq and t not in SPECIALS]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept)


# --------------------------------------------------------------------------
# manifests

SPLITS = ("train", "valid", "test")


@dataclass
class ManifestEntry:
    id: str
    paths: tuple[str, ...]
    language: str
    provenance: Provenance
    split: str

    @property
    def is_parallel(self) -> bool:
        return len(self.paths) == 2


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    splits: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.splits:
            self.splits = {s: [] for s in SPLITS}
            for e in self.entries:
                self.splits[e.split].append(e.id)

    @property
    def counts(self) -> dict[str, int]:
        return {s: len(ids) for s, ids in self.splits.items()}

    def entry(self, id: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == id:
                return e
        raise KeyError(id)


@dataclass
class LoadedCorpus:
    manifest: CorpusManifest
    documents: dict[str, Document]
    pairs: dict[str, list[ParallelPair]]

    def parallel(self, split: str) -> list[ParallelPair]:
        return [p for i in self.manifest.splits[split] if i in self.pairs for p in self.pairs[i]]

    def monolingual(self, split: str, provenance: Provenance) -> list[Document]:
        return [
            self.documents[i]
            for i in self.manifest.splits[split]
            if i not in self.pairs and self.documents[i].provenance is provenance
        ]


def read_manifest(path: str | Path) -> CorpusManifest:
    """Parse a tab-separated manifest: ``id, path[s], language, provenance, split``.

    Two comma-separated paths mark a parallel entry (source, target); the
    provenance then describes the target side. Blank lines, ``#`` comments and
    a header row starting with ``id`` are skipped.
    """
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        if lineno == 1 and cols[0].strip().lower() == "id":
            continue
        if len(cols) != 5:
            raise CorpusError(f"{path}:{lineno}: expected 5 tab-separated columns, got {len(cols)}")
        id_, paths, language, prov, split = (c.strip() for c in cols)
        if id_ in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate id {id_!r}")
        if split not in SPLITS:
            raise CorpusError(f"{path}:{lineno}: unknown split {split!r}")
        file_paths = tuple(p.strip() for p in paths.split(",") if p.strip())
        if len(file_paths) not in (1, 2):
            raise CorpusError(f"{path}:{lineno}: expected one or two paths, got {len(file_paths)}")
        seen.add(id_)
        entries.append(ManifestEntry(id_, file_paths, language, Provenance.parse(prov), split))
    return CorpusManifest(entries)


def _read_lines(path: Path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [line.rstrip("\r\n") for line in fh]


def load_corpus(manifest_path: str | Path, data_dir: str | Path | None = None,
                lowercase: bool = False) -> LoadedCorpus:
    manifest_path = Path(manifest_path)
    data_dir = Path(data_dir) if data_dir is not None else manifest_path.parent
    manifest = read_manifest(manifest_path)
    documents: dict[str, Document] = {}
    pairs: dict[str, list[ParallelPair]] = {}
    for e in manifest.entries:
        if e.is_parallel:
            src_path, tgt_path = (data_dir / p for p in e.paths)
            src, tgt = _read_lines(src_path), _read_lines(tgt_path)
            if len(src) != len(tgt):
                raise CorpusError(
                    f"line-count mismatch for {e.id!r}: {src_path} has {len(src)} lines, "
                    f"{tgt_path} has {len(tgt)}"
                )
            book: list[ParallelPair] = []
            for s, t in zip(src, tgt):
                s_sent, t_sent = tokenize(s, lowercase), tokenize(t, lowercase)
                if s_sent.tokens and t_sent.tokens:
                    book.append(ParallelPair(s_sent, t_sent, e.id))
            pairs[e.id] = book
            tgt_lang = e.language.split("-")[-1]
            documents[e.id] = Document(e.id, tgt_lang, e.provenance, tuple(p.target for p in book))
        else:
            lines = _read_lines(data_dir / e.paths[0])
            sents = tuple(s for s in (tokenize(l, lowercase) for l in lines) if s.tokens)
            documents[e.id] = Document(e.id, e.language, e.provenance, sents)
    return LoadedCorpus(manifest, documents, pairs)


# --------------------------------------------------------------------------
# classifier data

def make_classifier_dataset(
    perspective: Perspective | str,
    pools: Mapping[Provenance | str, Sequence[Sentence | Document]],
    seed: int = 0,
) -> list[LabeledText]:
    """Balanced binary dataset for one perspective, larger pool down-sampled."""
    perspective = Perspective.parse(perspective)
    flat: dict[Provenance, list[Sentence]] = {}
    for key, items in pools.items():
        prov = Provenance.parse(key) if isinstance(key, str) else key
        sents: list[Sentence] = []
        for it in items:
            sents.extend(it.sentences if isinstance(it, Document) else [it])
        flat[prov] = sents

    chosen = {}
    for prov in (perspective.preferred, perspective.other):
        if not flat.get(prov):
            raise CorpusError(f"{perspective.value} needs a non-empty {prov.value} pool")
        chosen[prov] = flat[prov]
    n = min(len(v) for v in chosen.values())
    rng = random.Random(seed)
    out: list[LabeledText] = []
    for prov, sents in chosen.items():
        idx = list(range(len(sents)))
        rng.shuffle(idx)
        label = int(prov is perspective.preferred)
        out.extend(LabeledText(sents[i], prov, label) for i in sorted(idx[:n]))
    return out


def synthesize_mt_corpus(pairs: Sequence[ParallelPair], model, beam: int = 5) -> list[Document]:
    """Translate every source with ``model`` and keep outputs that differ from the human target.

    One MT document is produced per book.
    """
    from .seq2seq import translate

    if not getattr(model, "trained", False):
        raise RuntimeError("refusing to synthesize MT data with an untrained model")
    by_book: dict[str, list[Sentence]] = {}
    order: list[str] = []
    for pair in pairs:
        hyp = translate(model, pair.source, beam=beam)
        if pair.book_id not in by_book:
            by_book[pair.book_id] = []
            order.append(pair.book_id)
        if hyp.tokens != pair.target.tokens and hyp.tokens:
            by_book[pair.book_id].append(hyp)
    lang = ""
    return [Document(f"{b}.mt", lang, Provenance.MT, tuple(by_book[b])) for b in order]
