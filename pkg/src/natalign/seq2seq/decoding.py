"""Beam search, greedy decoding and ancestral sampling.

The search routines are written against a *step function*: a callable taking
a ``(N, t)`` tensor of target prefixes (each starting with BOS) and returning
``(N, V)`` next-token log-probabilities. ``model_stepper`` builds one from a
trained model; tests build them by hand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import torch

from ..corpus import Sentence, Vocabulary
from .model import Seq2SeqModel, pad_batch

StepFn = Callable[[torch.Tensor], torch.Tensor]

GREEDY_EPS = 1e-4
_BANNED = (Vocabulary.pad_id, Vocabulary.bos_id)


@dataclass(frozen=True)
class Translation:
    sentence: Sentence
    log_prob: float  # sum of token log-probs, EOS included when finished
    score: float  # length-normalized log_prob
    truncated: bool = False

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.sentence.tokens


@dataclass(frozen=True)
class Sample:
    sentence: Sentence
    ids: tuple[int, ...]
    token_log_probs: tuple[float, ...]  # untempered model log-probs of the emitted tokens (+EOS)
    ended: bool

    @property
    def log_prob(self) -> float:
        return float(sum(self.token_log_probs))


def model_stepper(model: Seq2SeqModel, src_seqs: Sequence[Sequence[int]]) -> StepFn:
    """Step function over a fixed batch of sources; prefix row i belongs to source i.

    With a single source, any number of prefix rows may be scored (beam search).
    """
    src = pad_batch([list(s) for s in src_seqs])
    with torch.no_grad():
        memory, src_pad = model.encode(src)

    def step(prefixes: torch.Tensor) -> torch.Tensor:
        mem, pad = memory, src_pad
        if mem.shape[0] != prefixes.shape[0]:
            mem = mem.expand(prefixes.shape[0], -1, -1)
            pad = pad.expand(prefixes.shape[0], -1, -1, -1)
        with torch.no_grad():
            logits = model.decode(prefixes, mem, pad)[:, -1]
        return torch.log_softmax(logits, dim=-1)

    return step


def _mask_banned(logp: torch.Tensor) -> torch.Tensor:
    logp = logp.clone()
    logp[:, list(_BANNED)] = float("-inf")
    return logp


def beam_search(step: StepFn, beam: int, max_len: int, bos: int = Vocabulary.bos_id,
                eos: int = Vocabulary.eos_id) -> tuple[list[int], float, bool]:
    """Return ``(tokens, log_prob, truncated)`` of the best length-normalized hypothesis.

    ``max_len`` bounds the number of generated tokens including EOS. Finished
    hypotheses are scored by log-prob / (tokens + 1); if none finishes, the best
    unfinished one is returned with ``truncated=True``.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    alive: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float]] = []
    for _ in range(max_len):
        prefixes = torch.tensor([[bos] + toks for toks, _ in alive], dtype=torch.long)
        logp = _mask_banned(step(prefixes)).double()
        base = torch.tensor([lp for _, lp in alive], dtype=torch.float64)
        total = (base[:, None] + logp).flatten()
        vocab = logp.shape[1]
        order = torch.sort(total, descending=True, stable=True).indices[:beam]
        nxt: list[tuple[list[int], float]] = []
        for flat in order.tolist():
            score = float(total[flat])
            if score == float("-inf"):
                break
            row, tok = divmod(flat, vocab)
            toks = alive[row][0]
            if tok == eos:
                finished.append((toks, score))
            else:
                nxt.append((toks + [tok], score))
        alive = nxt
        if not alive:
            break
    if finished:
        toks, lp = max(finished, key=lambda h: h[1] / (len(h[0]) + 1))
        return toks, lp, False
    toks, lp = max(alive, key=lambda h: h[1] / max(len(h[0]), 1))
    return toks, lp, True


def _to_translation(model: Seq2SeqModel, ids: list[int], lp: float, truncated: bool) -> Translation:
    sent = Sentence.from_tokens(model.tgt_vocab.decode(ids))
    length = len(ids) + (0 if truncated else 1)
    return Translation(sent, lp, lp / max(length, 1), truncated)


def _max_len(model: Seq2SeqModel, max_len: int | None) -> int:
    limit = model.config.max_len - 1  # BOS occupies one decoder position
    return limit if max_len is None else min(max_len, limit)


def decode_beam(model: Seq2SeqModel, x: Sentence, beam: int = 5, max_len: int | None = None,
                tag: str | None = None) -> Translation:
    model.eval()
    step = model_stepper(model, [model.source_ids(x, tag)])
    toks, lp, truncated = beam_search(step, beam, _max_len(model, max_len))
    return _to_translation(model, toks, lp, truncated)


def translate(model: Seq2SeqModel, x: Sentence, beam: int = 5, tag: str | None = None) -> Sentence:
    return decode_beam(model, x, beam=beam, tag=tag).sentence


def sample_sequences(step: StepFn, n: int, max_len: int, temperature: float = 1.0,
                     generator: torch.Generator | None = None, top_k: int | None = None,
                     bos: int = Vocabulary.bos_id, eos: int = Vocabulary.eos_id):
    """Ancestral sampling of ``n`` rows in lock-step.

    Returns ``(ids, log_probs, ended)`` per row, where ``log_probs`` are the
    untempered step log-probabilities of the chosen tokens (EOS included).
    Temperatures below ``GREEDY_EPS`` decode greedily.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    prefixes = torch.full((n, 1), bos, dtype=torch.long)
    ids: list[list[int]] = [[] for _ in range(n)]
    lps: list[list[float]] = [[] for _ in range(n)]
    ended = [False] * n
    for _ in range(max_len):
        logp = _mask_banned(step(prefixes))
        if torch.isnan(logp).any():
            raise FloatingPointError("NaN in the next-token distribution")
        if temperature < GREEDY_EPS:
            choice = logp.argmax(-1)
        else:
            scaled = logp / temperature
            if top_k is not None and top_k < scaled.shape[1]:
                kth = torch.topk(scaled, top_k, dim=-1).values[:, -1:]
                scaled = scaled.masked_fill(scaled < kth, float("-inf"))
            probs = torch.softmax(scaled.double(), dim=-1)
            choice = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
        chosen_lp = logp.gather(-1, choice[:, None]).squeeze(-1).tolist()
        for i, tok in enumerate(choice.tolist()):
            if ended[i]:
                continue
            lps[i].append(chosen_lp[i])
            if tok == eos:
                ended[i] = True
            else:
                ids[i].append(tok)
        if all(ended):
            break
        prefixes = torch.cat([prefixes, choice[:, None]], dim=1)
    return ids, lps, ended


def sample_batch(model: Seq2SeqModel, sources: Sequence[Sentence], temperature: float = 1.0,
                 generator: torch.Generator | None = None, max_len: int | None = None,
                 top_k: int | None = None, tag: str | None = None) -> list[Sample]:
    was_training = model.training
    model.eval()
    try:
        step = model_stepper(model, [model.source_ids(x, tag) for x in sources])
        ids, lps, ended = sample_sequences(step, len(sources), _max_len(model, max_len),
                                           temperature, generator, top_k)
    finally:
        model.train(was_training)
    return [
        Sample(Sentence.from_tokens(model.tgt_vocab.decode(i)), tuple(i), tuple(l), e)
        for i, l, e in zip(ids, lps, ended)
    ]


def sample_translation(model: Seq2SeqModel, x: Sentence, temperature: float = 1.0,
                       generator: torch.Generator | None = None, **kw) -> Sample:
    return sample_batch(model, [x], temperature, generator, **kw)[0]


def greedy_batch(model: Seq2SeqModel, sources: Sequence[Sentence], max_len: int | None = None,
                 tag: str | None = None, batch_size: int = 64) -> list[Sentence]:
    out: list[Sentence] = []
    for i in range(0, len(sources), batch_size):
        chunk = sources[i : i + batch_size]
        out.extend(s.sentence for s in sample_batch(model, chunk, GREEDY_EPS / 2,
                                                     max_len=max_len, tag=tag))
    return out
