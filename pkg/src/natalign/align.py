"""Policy-gradient alignment toward natural output, with an NLL anchor."""

from __future__ import annotations

import copy
import logging
import math
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import torch

from .classifier import NaturalnessClassifier
from .corpus import ParallelPair, Perspective, Sentence
from .evalreport import CurvePoint
from .reward import CharFScorer, ContentScorer, RewardConfig, compute_reward
from .seq2seq import Checkpoint, Sample, Seq2SeqModel, sample_batch
from .seq2seq.model import nll_per_sentence, token_log_probs_batch

log = logging.getLogger(__name__)


@dataclass
class AlignConfig:
    reward: RewardConfig = field(default_factory=RewardConfig)
    perspective: str = "MT-HT"
    samples_per_source: int = 1
    temperature: float = 1.0
    lr: float = 1e-4
    batch_size: int = 32
    checkpoint_interval: int = 100
    max_steps: int = 1000
    seed: int = 0
    grad_clip: float = 1.0
    weight_decay: float = 0.0
    baseline: bool = False  # moving-average reward baseline, off by default

    def validate(self) -> None:
        self.reward.validate()
        Perspective.parse(self.perspective)
        for name in ("samples_per_source", "temperature", "lr", "batch_size",
                     "checkpoint_interval", "max_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class AlignStepLog:
    step: int
    r_t: float
    r_c: float
    r: float
    nll: float
    reward_loss: float
    total: float

    def row(self) -> str:
        return "\t".join([str(self.step)] + [repr(float(v)) for v in
                         (self.r_t, self.r_c, self.r, self.nll, self.reward_loss, self.total)])


STEP_LOG_HEADER = "step\tr_t\tr_c\tr\tnll\treward_loss\ttotal"


@dataclass
class AlignResult:
    model: Seq2SeqModel
    checkpoints: list[Checkpoint]
    logs: list[AlignStepLog]
    evals: dict[int, CurvePoint] = field(default_factory=dict)


class AlignmentDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


def alignment_loss(model: Seq2SeqModel, src_ids: list[list[int]], ref_ids: list[list[int]],
                   sample_src_ids: list[list[int]], sample_ids: list[list[int]],
                   sample_ended: list[bool], rewards: Sequence[float], beta: float):
    """Return ``(total, nll, reward_loss)`` tensors for one minibatch.

    ``nll`` is the mean length-normalized NLL of the references; ``reward_loss``
    is the mean over samples of ``-(r / m) * sum_i log p(y_hat_i | ...)`` with m
    the sample length (EOS included when emitted).
    """
    nll = nll_per_sentence(model, src_ids, ref_ids).mean()
    gold, mask = token_log_probs_batch(model, sample_src_ids, sample_ids, sample_ended)
    m = mask.sum(-1).clamp(min=1).to(gold.dtype)
    r = torch.as_tensor(list(rewards), dtype=gold.dtype)
    reward_loss = -(r * gold.sum(-1) / m).mean()
    return beta * nll + reward_loss, nll, reward_loss


def score_samples(samples: Sequence[Sample], pairs: Sequence[ParallelPair],
                  clf: NaturalnessClassifier, scorer: ContentScorer, cfg: RewardConfig):
    p_nat = clf.scores([s.sentence for s in samples])
    out = []
    for s, pair, p in zip(samples, pairs, p_nat):
        c = scorer(pair.source, pair.target, s.sentence) if s.sentence.tokens else 0.0
        out.append(compute_reward(float(p), c, cfg))
    return out


def align_train(base: Seq2SeqModel, pairs: Sequence[ParallelPair], clf: NaturalnessClassifier,
                scorer: ContentScorer | None = None, cfg: AlignConfig | None = None,
                evaluate: Callable[[Seq2SeqModel, int], CurvePoint] | None = None,
                out_dir: str | Path | None = None) -> AlignResult:
    """Fine-tune a copy of ``base`` with the reward-weighted objective.

    Each step samples one translation per source (``samples_per_source`` in
    general), scores it with the classifier and the content scorer, and takes a
    gradient step on ``beta * NLL(references) + reward loss``. A checkpoint is
    kept every ``checkpoint_interval`` steps; ``evaluate`` (if given) is called
    on the base model (step 0) and on each checkpoint.
    """
    cfg = cfg or AlignConfig()
    cfg.validate()
    if not getattr(base, "trained", False):
        raise RuntimeError("the base model must be trained before alignment")
    if not pairs:
        raise ValueError("no alignment data")
    scorer = scorer or CharFScorer()
    rcfg = cfg.reward

    model = copy.deepcopy(base)
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = random.Random(cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    out_dir = Path(out_dir) if out_dir is not None else None

    result = AlignResult(model, [Checkpoint.from_model(model, 0)], [])
    if evaluate:
        result.evals[0] = evaluate(model, 0)
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoints[0].save(out_dir / "step_0.ckpt")

    steps_per_epoch = max(1, math.ceil(len(pairs) / cfg.batch_size))
    epoch_rewards: list[float] = []
    baseline = 0.0
    order: list[int] = []
    for step in range(1, cfg.max_steps + 1):
        if len(order) < cfg.batch_size:
            fresh = list(range(len(pairs)))
            rng.shuffle(fresh)
            order += fresh
        batch = [pairs[i] for i in order[: cfg.batch_size]]
        order = order[cfg.batch_size :]

        expanded = [p for p in batch for _ in range(cfg.samples_per_source)]
        try:
            samples = sample_batch(model, [p.source for p in expanded], cfg.temperature, gen)
            breakdown = score_samples(samples, expanded, clf, scorer, rcfg)
            rewards = [b.r for b in breakdown]
            weights = rewards
            if cfg.baseline:
                mean_r = sum(rewards) / len(rewards)
                weights = [r - baseline for r in rewards]
                baseline = 0.9 * baseline + 0.1 * mean_r

            model.train()
            opt.zero_grad()
            total, nll, rw = alignment_loss(
                model,
                [model.source_ids(p.source) for p in batch],
                [model.target_ids(p.target) for p in batch],
                [model.source_ids(p.source) for p in expanded],
                [list(s.ids) for s in samples],
                [s.ended for s in samples],
                weights,
                rcfg.beta,
            )
            if not torch.isfinite(total):
                raise FloatingPointError(f"non-finite alignment loss {float(total)}")
        except FloatingPointError as exc:
            last = result.checkpoints[-1]
            last.load_into(model)
            raise AlignmentDiverged(f"alignment diverged at step {step}: {exc}", last) from exc
        total.backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()

        n = len(breakdown)
        entry = AlignStepLog(step, sum(b.r_t for b in breakdown) / n, sum(b.r_c for b in breakdown) / n,
                             sum(rewards) / n, nll.item(), rw.item(), total.item())
        result.logs.append(entry)

        epoch_rewards.append(entry.r)
        if len(epoch_rewards) == steps_per_epoch:
            if not any(epoch_rewards):
                warnings.warn(f"reward collapse: mean reward was 0 for a full epoch (step {step})",
                              RuntimeWarning, stacklevel=2)
            epoch_rewards = []

        if step % cfg.checkpoint_interval == 0 or step == cfg.max_steps:
            model.eval()
            ckpt = Checkpoint.from_model(model, step, metrics={"mean_reward": entry.r})
            result.checkpoints.append(ckpt)
            if out_dir:
                ckpt.save(out_dir / f"step_{step}.ckpt")
            if evaluate:
                result.evals[step] = evaluate(model, step)
            log.info("align step %d reward %.4f loss %.4f", step, entry.r, entry.total)

    model.eval()
    return result


def write_step_logs(logs: Sequence[AlignStepLog], path: str | Path) -> None:
    Path(path).write_text("\n".join([STEP_LOG_HEADER] + [l.row() for l in logs]) + "\n",
                          encoding="utf-8")


def select_checkpoint(checkpoints: Sequence[Checkpoint], criterion: str = "max-hm",
                      evals: Mapping[int, CurvePoint] | None = None, step: int = 5000) -> Checkpoint:
    """Pick a checkpoint by a fixed step or by the best validation harmonic mean.

    ``fixed-step`` returns the checkpoint at ``step``, or the latest one before
    it. ``max-hm`` needs ``evals`` keyed by step; ties go to the earlier step.
    """
    if not checkpoints:
        raise ValueError("no checkpoints to choose from")
    if len(checkpoints) == 1:
        return checkpoints[0]
    if criterion == "fixed-step":
        before = [c for c in checkpoints if c.step <= step]
        if not before:
            raise ValueError(f"no checkpoint at or before step {step}")
        return max(before, key=lambda c: c.step)
    if criterion == "max-hm":
        if not evals:
            raise ValueError("max-hm selection needs validation evaluations")
        scored = [c for c in checkpoints if c.step in evals]
        if not scored:
            raise ValueError("none of the checkpoints has a validation evaluation")
        return max(scored, key=lambda c: (evals[c.step].hm, -c.step))
    raise ValueError(f"unknown selection criterion {criterion!r}")


def rerank_topk(model: Seq2SeqModel, x: Sentence, k: int, clf: NaturalnessClassifier,
                top_k: int = 10, generator: torch.Generator | None = None,
                temperature: float = 1.0) -> Sentence:
    """Draw ``k`` top-k samples and keep the one the classifier finds most natural.

    Ties on the classifier score go to the higher model log-probability.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cands = sample_batch(model, [x] * k, temperature, generator, top_k=top_k)
    return pick_most_natural(cands, clf).sentence


def pick_most_natural(cands: Sequence[Sample], clf: NaturalnessClassifier) -> Sample:
    scores = clf.scores([c.sentence for c in cands])
    best = max(range(len(cands)), key=lambda i: (scores[i], cands[i].log_prob, -i))
    return cands[best]
