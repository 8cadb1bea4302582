"""Supervised training with warmup + cosine decay and early stopping."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, fields
from typing import Callable, Sequence

import torch

from ..corpus import ORIG_TAG, TRAN_TAG, CorpusError, ParallelPair, Sentence, build_vocab
from .checkpoint import Checkpoint
from .model import ModelConfig, Seq2SeqModel, nll_per_sentence

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_lr: float = 5e-4
    warmup_steps: int = 100
    batch_size: int = 32
    grad_accum: int = 2
    eval_interval: int = 100
    patience: int = 3
    seed: int = 0
    max_steps: int = 3000
    weight_decay: float = 0.01
    grad_clip: float = 1.0

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("seed", "weight_decay"):
                if value < 0:
                    raise ValueError(f"{f.name} must be non-negative")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value}")


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


class EarlyStopping:
    """Stop once the validation loss has failed to improve ``patience`` times in a row."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ValueError("patience must be >= 1")
        self.patience = patience
        self.best = math.inf
        self.best_step: int | None = None
        self.bad_evals = 0

    def update(self, step: int, loss: float) -> bool:
        if loss < self.best:
            self.best, self.best_step, self.bad_evals = loss, step, 0
            return False
        self.bad_evals += 1
        return self.bad_evals >= self.patience


def lr_at(step: int, max_lr: float, warmup: int, total: int) -> float:
    """Linear warmup to ``max_lr`` then cosine decay to zero at ``total``."""
    if step < warmup:
        return max_lr * (step + 1) / warmup
    progress = min(1.0, (step - warmup) / max(1, total - warmup))
    return 0.5 * max_lr * (1.0 + math.cos(math.pi * progress))


def build_model(pairs: Sequence[ParallelPair], config: ModelConfig | None = None,
                min_freq: int = 2, seed: int = 0) -> Seq2SeqModel:
    """Fresh model with vocabularies estimated from ``pairs``."""
    config = config or ModelConfig()
    src_vocab = build_vocab((p.source for p in pairs), min_freq)
    tgt_vocab = build_vocab((p.target for p in pairs), min_freq)
    longest = max((max(len(p.source), len(p.target)) for p in pairs), default=0)
    if config.max_len < longest + 2:
        config.max_len = longest + 2
    torch.manual_seed(seed)
    return Seq2SeqModel(config, src_vocab, tgt_vocab)


def _encode(model: Seq2SeqModel, pairs: Sequence[ParallelPair]):
    return [model.source_ids(p.source) for p in pairs], [model.target_ids(p.target) for p in pairs]


def validation_loss(model: Seq2SeqModel, pairs: Sequence[ParallelPair], batch_size: int = 128) -> float:
    was_training = model.training
    model.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(pairs), batch_size):
            src, tgt = _encode(model, pairs[i : i + batch_size])
            total += float(nll_per_sentence(model, src, tgt).double().sum())
    model.train(was_training)
    return total / len(pairs)


def train_supervised(model: Seq2SeqModel, pairs: Sequence[ParallelPair],
                     valid: Sequence[ParallelPair], cfg: TrainConfig | None = None,
                     history: list | None = None,
                     on_eval: Callable[[int, float], None] | None = None) -> Checkpoint:
    """Minimize the per-sentence NLL with AdamW; return the best-validation checkpoint.

    The model is left holding the best weights. ``history`` (if given) receives
    one dict per optimizer step: step, lr, train_loss and, on evaluation steps,
    valid_loss.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if not pairs or not valid:
        raise ValueError("training and validation sets must be non-empty")
    torch.manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.max_lr, weight_decay=cfg.weight_decay)
    stopper = EarlyStopping(cfg.patience)
    best = Checkpoint.from_model(model, 0, math.inf)
    order: list[int] = []

    def next_batch() -> list[ParallelPair]:
        nonlocal order
        if len(order) < cfg.batch_size:
            fresh = list(range(len(pairs)))
            rng.shuffle(fresh)
            order += fresh
        idx, order = order[: cfg.batch_size], order[cfg.batch_size :]
        return [pairs[i] for i in idx]

    model.train()
    for step in range(1, cfg.max_steps + 1):
        lr = lr_at(step - 1, cfg.max_lr, cfg.warmup_steps, cfg.max_steps)
        for group in opt.param_groups:
            group["lr"] = lr
        opt.zero_grad()
        train_loss = 0.0
        try:
            for _ in range(cfg.grad_accum):
                src, tgt = _encode(model, next_batch())
                loss = nll_per_sentence(model, src, tgt).mean() / cfg.grad_accum
                loss.backward()
                train_loss += loss.item()
        except FloatingPointError as exc:
            best.load_into(model)
            raise TrainingDiverged(f"training diverged at step {step}: {exc}", best) from exc
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()
        row = {"step": step, "lr": lr, "train_loss": train_loss}

        if step % cfg.eval_interval == 0 or step == cfg.max_steps:
            vloss = validation_loss(model, valid)
            row["valid_loss"] = vloss
            if not math.isfinite(vloss):
                best.load_into(model)
                raise TrainingDiverged(f"validation loss became {vloss} at step {step}", best)
            stop = stopper.update(step, vloss)
            if stopper.best_step == step:
                best = Checkpoint.from_model(model, step, vloss)
            log.info("step %d train %.4f valid %.4f", step, train_loss, vloss)
            if on_eval:
                on_eval(step, vloss)
            if history is not None:
                history.append(row)
            if stop:
                log.info("early stop at step %d (best step %s)", step, stopper.best_step)
                break
        elif history is not None:
            history.append(row)

    best.load_into(model)
    model.trained = True
    model.eval()
    return best


def _tagged(pairs: Sequence[ParallelPair], tag: str) -> list[ParallelPair]:
    return [ParallelPair(Sentence.from_tokens((tag,) + p.source.tokens), p.target, p.book_id)
            for p in pairs]


def train_tagged(pairs_translated: Sequence[ParallelPair], pairs_original: Sequence[ParallelPair],
                 valid: Sequence[ParallelPair], cfg: TrainConfig | None = None,
                 model_config: ModelConfig | None = None, original_fraction: float | None = None,
                 min_freq: int = 2, seed: int = 0) -> tuple[Seq2SeqModel, Checkpoint]:
    """Tagging baseline: ``<tran>``/``<orig>`` source prefixes, decode with ``<orig>``.

    ``pairs_translated`` have human-translated targets (the parallel data),
    ``pairs_original`` have original target-language text (back-translated
    sources). ``original_fraction`` caps the original pool at that multiple of the
    translated pool, e.g. ``1/4.8`` for the smaller setting.
    """
    if not pairs_translated or not pairs_original:
        raise CorpusError("tagging needs non-empty translated and original pools")
    original = list(pairs_original)
    if original_fraction is not None:
        keep = max(1, round(original_fraction * len(pairs_translated)))
        rng = random.Random(seed)
        idx = sorted(rng.sample(range(len(original)), min(keep, len(original))))
        original = [original[i] for i in idx]
    train = _tagged(pairs_translated, TRAN_TAG) + _tagged(original, ORIG_TAG)
    model = build_model(train, model_config, min_freq, seed)
    ckpt = train_supervised(model, train, _tagged(valid, TRAN_TAG), cfg)
    model.tag = ORIG_TAG
    ckpt.tag = ORIG_TAG
    return model, ckpt
