"""Command-line pipeline: ``natalign <subcommand> [--config FILE] [--set k=v] [--seed N]``.

Every subcommand works inside ``paths.out_dir`` and writes only its own
artifacts there:

==================  ==========================================================
ingest              ingest/summary.tsv
train-base          base/model.ckpt, base/train_log.tsv
synth-mt            mt/<split>/<book>.txt
train-classifier    classifiers/<perspective>.clf, confusion_*.tsv, grid.tsv
align               align/step_<n>.ckpt, steps.tsv, curves.tsv, selected.ckpt
translate           systems/<name>/<book>.txt
rerank              systems/rerank/<book>.txt
evaluate            report.tsv, top_words.txt
curves              curves.tsv
==================  ==========================================================

Each run also echoes its resolved configuration to ``<subcommand>.config``.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import random
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import metrics
from .align import align_train, pick_most_natural, select_checkpoint, write_step_logs
from .classifier import (NaturalnessClassifier, confusion_matrix, cross_perspective_grid,
                         train_classifier, write_confusion, write_grid)
from .config import CONFIG_ENV, ConfigError, RunConfig, load_config
from .corpus import (CorpusError, LoadedCorpus, ParallelPair, Perspective, Provenance, Sentence,
                     load_corpus, make_classifier_dataset, synthesize_mt_corpus, tokenize)
from .evalreport import (CurvePoint, EvalConfig, SystemOutput, emit_curves, evaluate_checkpoint,
                         evaluate_with_human, postprocess_sentence, translate_pairs, write_report)
from .reward import calibrate_content_threshold, make_scorer
from .seq2seq import Checkpoint, build_model, greedy_batch, sample_batch, train_supervised, translate

SUBCOMMANDS = ("ingest", "train-base", "synth-mt", "train-classifier", "align", "translate",
               "rerank", "evaluate", "curves")


class StageError(RuntimeError):
    """A missing prerequisite or unusable input; reported without a traceback."""


# --------------------------------------------------------------------------
# shared helpers

def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


@contextlib.contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise StageError(f"output directory {out_dir} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_lines(path: Path, lines: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def _read_sentences(path: Path, lowercase: bool = False) -> list[Sentence]:
    return [tokenize(l, lowercase) for l in path.read_text(encoding="utf-8").splitlines()]


class Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.paths.out_dir)
        self._corpus: LoadedCorpus | None = None

    @property
    def corpus(self) -> LoadedCorpus:
        if self._corpus is None:
            manifest = self.cfg.require_manifest()
            data_dir = self.cfg.paths.data_dir or None
            self._corpus = load_corpus(manifest, data_dir, self.cfg.corpus.lowercase)
        return self._corpus

    def parallel(self, split: str) -> list[ParallelPair]:
        pairs = self.corpus.parallel(split)
        if not pairs:
            raise StageError(f"the manifest has no parallel data in the {split} split")
        return pairs

    @property
    def base_path(self) -> Path:
        return self.out / "base" / "model.ckpt"

    def base_model(self):
        if not self.base_path.is_file():
            raise StageError(f"base checkpoint missing ({self.base_path}); run train-base first")
        return Checkpoint.load(self.base_path).to_model()

    def classifier_path(self, p: Perspective) -> Path:
        return self.out / "classifiers" / f"{p.slug}.clf"

    def classifier(self, p: Perspective) -> NaturalnessClassifier:
        path = self.classifier_path(p)
        if not path.is_file():
            raise StageError(f"classifier checkpoint missing for {p.value} ({path}); "
                             "run train-classifier first")
        return NaturalnessClassifier.load(path)

    def classifiers(self) -> dict[Perspective, NaturalnessClassifier]:
        return {p: NaturalnessClassifier.load(self.classifier_path(p))
                for p in Perspective if self.classifier_path(p).is_file()}

    def model_from(self, which: str):
        if which == "base":
            return self.base_model()
        if which == "aligned":
            path = self.out / "align" / "selected.ckpt"
            if not path.is_file():
                raise StageError(f"aligned checkpoint missing ({path}); run align first")
            return Checkpoint.load(path).to_model()
        path = Path(which)
        if not path.is_file():
            raise StageError(f"checkpoint not found: {path}")
        return Checkpoint.load(path).to_model()

    def write_system(self, system: SystemOutput) -> Path:
        sdir = self.out / "systems" / system.name
        for book, rows in system.books.items():
            _write_lines(sdir / f"{book}.txt", [o.raw for _, o in rows])
        return sdir


# --------------------------------------------------------------------------
# stages

def cmd_ingest(run: Run, args) -> None:
    corpus = run.corpus
    lines = ["id\tsplit\tprovenance\tlanguage\tsentences\ttokens"]
    for e in corpus.manifest.entries:
        doc = corpus.documents[e.id]
        n_tok = sum(len(s.tokens) for s in doc.sentences)
        lines.append(f"{e.id}\t{e.split}\t{e.provenance.value}\t{e.language}\t{len(doc.sentences)}\t{n_tok}")
    _write_lines(run.out / "ingest" / "summary.tsv", lines)


def cmd_train_base(run: Run, args) -> None:
    cfg = run.cfg
    train, valid = run.parallel("train"), run.parallel("valid")
    model = build_model(train, cfg.model, cfg.corpus.min_freq, cfg.seed)
    history: list[dict] = []
    ckpt = train_supervised(model, train, valid, cfg.train_config(), history)
    ckpt.save(run.base_path)
    rows = ["step\tlr\ttrain_loss\tvalid_loss"]
    for h in history:
        vl = h.get("valid_loss")
        rows.append(f"{h['step']}\t{h['lr']!r}\t{h['train_loss']!r}\t{'' if vl is None else repr(vl)}")
    _write_lines(run.out / "base" / "train_log.tsv", rows)


def cmd_synth_mt(run: Run, args) -> None:
    model = run.base_model()
    for split in ("train", "valid", "test"):
        pairs = run.corpus.parallel(split)
        if not pairs:
            continue
        for doc in synthesize_mt_corpus(pairs, model, beam=run.cfg.decode.beam):
            _write_lines(run.out / "mt" / split / f"{doc.id}.txt", [s.raw for s in doc.sentences])


def _pools(run: Run, split: str) -> dict[Provenance, list[Sentence]]:
    corpus = run.corpus
    pools: dict[Provenance, list[Sentence]] = {p: [] for p in Provenance}
    for id_ in corpus.manifest.splits[split]:
        doc = corpus.documents[id_]
        pools[doc.provenance].extend(doc.sentences)
    mt_dir = run.out / "mt" / split
    if mt_dir.is_dir():
        for f in sorted(mt_dir.glob("*.txt")):
            pools[Provenance.MT].extend(_read_sentences(f, run.cfg.corpus.lowercase))
    return pools


def cmd_train_classifier(run: Run, args) -> None:
    cfg = run.cfg
    train_pools, test_pools = _pools(run, "train"), _pools(run, "valid")
    out = run.out / "classifiers"
    out.mkdir(parents=True, exist_ok=True)
    trained: dict[Perspective, NaturalnessClassifier] = {}
    tests = {}
    for p in cfg.classifier.parsed():
        if not (train_pools[p.preferred] and train_pools[p.other]):
            print(f"skipping {p.value}: no {p.preferred.value} or {p.other.value} training data",
                  file=sys.stderr)
            continue
        data = make_classifier_dataset(p, train_pools, cfg.seed)
        clf = train_classifier(data, cfg.classifier.reg, cfg.seed, perspective=p,
                               max_iter=cfg.classifier.max_iter)
        clf.save(run.classifier_path(p))
        trained[p] = clf
        if test_pools[p.preferred] and test_pools[p.other]:
            tests[p] = make_classifier_dataset(p, test_pools, cfg.seed)
            write_confusion(confusion_matrix(clf, tests[p]), p, out / f"confusion_{p.slug}.tsv")
    if not trained:
        raise StageError("no classifier could be trained; check the OR/HT/MT pools")
    if tests:
        write_grid(cross_perspective_grid(trained, tests), out / "grid.tsv")


def _calibrate_sigma_c(run: Run, model, valid: list[ParallelPair]) -> float:
    scorer = make_scorer(run.cfg.reward.content_scorer)
    if run.cfg.decode.beam == 1:
        hyps = greedy_batch(model, [p.source for p in valid])
    else:
        hyps = [translate(model, p.source, beam=run.cfg.decode.beam) for p in valid]
    scores = [scorer(p.source, p.target, h) for p, h in zip(valid, hyps)]
    return calibrate_content_threshold(scores, run.cfg.reward.percentile)


def cmd_align(run: Run, args) -> None:
    cfg = run.cfg
    base = run.base_model()
    perspective = Perspective.parse(cfg.align.perspective)
    clf = run.classifier(perspective)
    train, valid = run.parallel("train"), run.parallel("valid")
    sigma_c = _calibrate_sigma_c(run, base, valid) if cfg.reward.auto_sigma_c else None
    acfg = cfg.align_config(sigma_c)
    if sigma_c is not None:
        cfg.reward.sigma_c = repr(sigma_c)
        (run.out / "align.config").write_text(cfg.echo(), encoding="utf-8")
    scorer = make_scorer(cfg.reward.content_scorer)
    classifiers = run.classifiers()
    out = run.out / "align"

    def evaluate(model, step: int) -> CurvePoint:
        return evaluate_checkpoint(model, valid, classifiers, perspective, step, scorer,
                                   beam=cfg.decode.beam, postprocess=cfg.decode.postprocess)

    result = align_train(base, train, clf, scorer, acfg, evaluate=evaluate, out_dir=out)
    write_step_logs(result.logs, out / "steps.tsv")
    emit_curves(list(result.evals.values()), out / "curves.tsv")
    chosen = select_checkpoint(result.checkpoints, cfg.select.criterion, result.evals, cfg.select.step)
    chosen.save(out / "selected.ckpt")
    _write_lines(out / "selected.txt", [f"step\t{chosen.step}", f"sigma_c\t{acfg.reward.sigma_c!r}"])


def cmd_translate(run: Run, args) -> None:
    model = run.model_from(args.model)
    name = args.name or Path(args.model).stem
    system = translate_pairs(model, run.parallel(args.split), name, run.cfg.decode.beam,
                             run.cfg.decode.postprocess, run.cfg.decode.punct)
    run.write_system(system)


def cmd_rerank(run: Run, args) -> None:
    cfg = run.cfg
    model = run.model_from(args.model)
    clf = run.classifier(Perspective.parse(cfg.align.perspective))
    gen = torch.Generator().manual_seed(cfg.seed)
    books: dict[str, list[tuple[Sentence, Sentence]]] = {}
    for pair in run.parallel(args.split):
        cands = sample_batch(model, [pair.source] * cfg.decode.rerank_k, 1.0, gen, top_k=cfg.decode.top_k)
        out = pick_most_natural(cands, clf).sentence
        if cfg.decode.postprocess:
            out = postprocess_sentence(out, cfg.decode.punct)
        books.setdefault(pair.book_id, []).append((pair.source, out))
    run.write_system(SystemOutput(args.name or "rerank", books))


def _load_system(run: Run, name_or_path: str, pairs: list[ParallelPair]) -> SystemOutput:
    sdir = Path(name_or_path)
    if not sdir.is_dir():
        sdir = run.out / "systems" / name_or_path
    if not sdir.is_dir():
        raise StageError(f"system output directory not found: {name_or_path}")
    by_book: dict[str, list[ParallelPair]] = {}
    for p in pairs:
        by_book.setdefault(p.book_id, []).append(p)
    books = {}
    for book, bpairs in by_book.items():
        f = sdir / f"{book}.txt"
        if not f.is_file():
            raise StageError(f"system {sdir.name!r} has no output for book {book!r} ({f})")
        outs = _read_sentences(f, run.cfg.corpus.lowercase)
        if len(outs) != len(bpairs):
            raise StageError(f"{f}: {len(outs)} lines for {len(bpairs)} source sentences")
        books[book] = [(p.source, o) for p, o in zip(bpairs, outs)]
    return SystemOutput(sdir.name, books)


def cmd_evaluate(run: Run, args) -> None:
    cfg = run.cfg
    test = run.parallel(args.split)
    names = args.systems
    if not names:
        sys_root = run.out / "systems"
        names = sorted(d.name for d in sys_root.iterdir() if d.is_dir()) if sys_root.is_dir() else []
    if not names:
        raise StageError("no system outputs to evaluate; run translate or rerank first")
    systems = [_load_system(run, n, test) for n in names]

    train = run.parallel("train")
    target_text = [p.target.tokens for p in train]
    for id_ in run.corpus.manifest.splits["train"]:
        doc = run.corpus.documents[id_]
        if id_ not in run.corpus.pairs and doc.provenance is Provenance.OR:
            target_text.extend(s.tokens for s in doc.sentences)
    m = cfg.metrics
    table = metrics.build_translation_table([(p.source.tokens, p.target.tokens) for p in train],
                                            m.em_iters, m.option_floor, m.min_source_freq, m.min_options)
    top = metrics.top_words(target_text, m.top_words)
    _write_lines(run.out / "top_words.txt", top)
    ecfg = EvalConfig(top, m.mtld_threshold, make_scorer(cfg.reward.content_scorer))
    reports = evaluate_with_human(systems, test, run.classifiers(), table, ecfg)
    write_report(reports, run.out / "report.tsv")


def cmd_curves(run: Run, args) -> None:
    cfg = run.cfg
    adir = run.out / "align"
    ckpts = sorted(adir.glob("step_*.ckpt"), key=lambda p: int(p.stem.split("_")[1]))
    if not ckpts:
        raise StageError(f"no alignment checkpoints in {adir}; run align first")
    valid = run.parallel("valid")
    classifiers = run.classifiers()
    if not classifiers:
        raise StageError("no classifiers found; run train-classifier first")
    perspective = Perspective.parse(cfg.align.perspective)
    scorer = make_scorer(cfg.reward.content_scorer)
    points = []
    for path in ckpts:
        ck = Checkpoint.load(path)
        points.append(evaluate_checkpoint(ck.to_model(), valid, classifiers, perspective, ck.step,
                                          scorer, beam=cfg.decode.beam, postprocess=cfg.decode.postprocess))
    emit_curves(points, run.out / "curves.tsv")


COMMANDS = {
    "ingest": cmd_ingest,
    "train-base": cmd_train_base,
    "synth-mt": cmd_synth_mt,
    "train-classifier": cmd_train_classifier,
    "align": cmd_align,
    "translate": cmd_translate,
    "rerank": cmd_rerank,
    "evaluate": cmd_evaluate,
    "curves": cmd_curves,
}


HELP = {
    "ingest": "load the corpus manifest and summarize it",
    "train-base": "train the supervised base model",
    "synth-mt": "translate the parallel sources to build MT pools",
    "train-classifier": "train one naturalness classifier per perspective",
    "align": "fine-tune the base model with the naturalness and content rewards",
    "translate": "translate a split with the base or aligned model",
    "rerank": "top-k sampling reranked by the naturalness classifier",
    "evaluate": "write the metric report for all systems",
    "curves": "evaluate every alignment checkpoint on the validation split",
}


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"run configuration file (default: ${CONFIG_ENV})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration value; may be repeated")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")

    parser = argparse.ArgumentParser(prog="natalign", description="Naturalness alignment pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, parents=[common], help=HELP[name])
        if name in ("translate", "rerank"):
            p.add_argument("--model", default="aligned" if name == "translate" else "base",
                           help="'base', 'aligned' or a checkpoint path")
            p.add_argument("--name", help="system name (output directory under systems/)")
            p.add_argument("--split", default="test", choices=("train", "valid", "test"))
        if name == "evaluate":
            p.add_argument("--systems", nargs="*", default=[],
                           help="system names under systems/ or directories (default: all)")
            p.add_argument("--split", default="test", choices=("train", "valid", "test"))
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
    except ConfigError as exc:
        print(f"natalign: config error: {exc}", file=sys.stderr)
        return 1
    run = Run(cfg)
    seed_everything(cfg.seed)
    try:
        with output_lock(run.out):
            (run.out / f"{args.command}.config").write_text(cfg.echo(), encoding="utf-8")
            COMMANDS[args.command](run, args)
    except ConfigError as exc:
        print(f"natalign: config error: {exc}", file=sys.stderr)
        return 1
    except (StageError, CorpusError, FileNotFoundError) as exc:
        print(f"natalign {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
