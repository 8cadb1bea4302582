"""A small pre-LN Transformer encoder-decoder."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields

import torch
import torch.nn.functional as F
from torch import nn

from ..corpus import Sentence, Vocabulary


@dataclass
class ModelConfig:
    enc_layers: int = 2
    dec_layers: int = 2
    width: int = 128
    heads: int = 4
    ff_width: int = 512
    max_len: int = 128
    src_vocab_size: int = 0
    tgt_vocab_size: int = 0
    dropout: float = 0.1

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "dropout":
                if not 0.0 <= value < 1.0:
                    raise ValueError("dropout must be in [0, 1)")
            elif value <= 0:
                raise ValueError(f"{f.name} must be positive, got {value}")
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by heads {self.heads}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @classmethod
    def transformer_base(cls, **kw) -> "ModelConfig":
        """Six encoder and six decoder layers at base-Transformer width."""
        base = dict(enc_layers=6, dec_layers=6, width=512, heads=8, ff_width=2048, max_len=256)
        base.update(kw)
        return cls(**base)


class MultiHeadAttention(nn.Module):
    def __init__(self, width: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(width, width)
        self.k = nn.Linear(width, width)
        self.v = nn.Linear(width, width)
        self.out = nn.Linear(width, width)
        self.drop = nn.Dropout(dropout)

    def forward(self, query, key, mask=None):
        # mask: bool, True where attention is NOT allowed; broadcastable to (B, H, Tq, Tk)
        b, tq, w = query.shape
        tk = key.shape[1]
        h, d = self.heads, w // self.heads
        q = self.q(query).view(b, tq, h, d).transpose(1, 2)
        k = self.k(key).view(b, tk, h, d).transpose(1, 2)
        v = self.v(key).view(b, tk, h, d).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(d)
        if mask is not None:
            scores = scores.masked_fill(mask, float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        ctx = (attn @ v).transpose(1, 2).reshape(b, tq, w)
        return self.out(ctx)


class FeedForward(nn.Module):
    def __init__(self, width: int, ff_width: int, dropout: float):
        super().__init__()
        self.up = nn.Linear(width, ff_width)
        self.down = nn.Linear(ff_width, width)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.down(self.drop(F.relu(self.up(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.width)
        self.attn = MultiHeadAttention(cfg.width, cfg.heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.width)
        self.ff = FeedForward(cfg.width, cfg.ff_width, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, pad_mask):
        h = self.norm1(x)
        x = x + self.drop(self.attn(h, h, pad_mask))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.width)
        self.self_attn = MultiHeadAttention(cfg.width, cfg.heads, cfg.dropout)
        self.norm2 = nn.LayerNorm(cfg.width)
        self.cross_attn = MultiHeadAttention(cfg.width, cfg.heads, cfg.dropout)
        self.norm3 = nn.LayerNorm(cfg.width)
        self.ff = FeedForward(cfg.width, cfg.ff_width, cfg.dropout)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, causal_mask, src_mask):
        h = self.norm1(y)
        y = y + self.drop(self.self_attn(h, h, causal_mask))
        y = y + self.drop(self.cross_attn(self.norm2(y), memory, src_mask))
        return y + self.drop(self.ff(self.norm3(y)))


class Seq2SeqModel(nn.Module):
    """Encoder-decoder translation policy p(y | x; theta).

    Sources are encoded without BOS/EOS; targets are teacher-forced as
    ``BOS y`` -> ``y EOS``.
    """

    def __init__(self, config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
        super().__init__()
        config.src_vocab_size = len(src_vocab)
        config.tgt_vocab_size = len(tgt_vocab)
        config.validate()
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.trained = False
        self.tag: str | None = None  # source prefix applied at inference (tagging baseline)

        w = config.width
        self.src_embed = nn.Embedding(config.src_vocab_size, w, padding_idx=Vocabulary.pad_id)
        self.tgt_embed = nn.Embedding(config.tgt_vocab_size, w, padding_idx=Vocabulary.pad_id)
        self.src_pos = nn.Embedding(config.max_len, w)
        self.tgt_pos = nn.Embedding(config.max_len, w)
        self.encoder = nn.ModuleList(EncoderLayer(config) for _ in range(config.enc_layers))
        self.decoder = nn.ModuleList(DecoderLayer(config) for _ in range(config.dec_layers))
        self.enc_norm = nn.LayerNorm(w)
        self.dec_norm = nn.LayerNorm(w)
        self.proj = nn.Linear(w, config.tgt_vocab_size)
        self.drop = nn.Dropout(config.dropout)
        self._init_weights()

    def _init_weights(self):
        for name, p in self.named_parameters():
            if p.dim() > 1:
                nn.init.xavier_uniform_(p)
            elif name.endswith("bias"):
                nn.init.zeros_(p)
        with torch.no_grad():
            self.src_embed.weight[Vocabulary.pad_id].zero_()
            self.tgt_embed.weight[Vocabulary.pad_id].zero_()

    # ------------------------------------------------------------------
    def _embed(self, ids, table, pos_table):
        if ids.shape[1] > self.config.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}")
        pos = torch.arange(ids.shape[1], device=ids.device)
        return self.drop(table(ids) * math.sqrt(self.config.width) + pos_table(pos))

    def encode(self, src):
        pad = (src == Vocabulary.pad_id)[:, None, None, :]
        x = self._embed(src, self.src_embed, self.src_pos)
        for layer in self.encoder:
            x = layer(x, pad)
        return self.enc_norm(x), pad

    def decode(self, tgt_in, memory, src_pad):
        t = tgt_in.shape[1]
        causal = torch.ones(t, t, dtype=torch.bool, device=tgt_in.device).triu(1)
        y = self._embed(tgt_in, self.tgt_embed, self.tgt_pos)
        for layer in self.decoder:
            y = layer(y, memory, causal, src_pad)
        return self.proj(self.dec_norm(y))

    def forward(self, src, tgt_in):
        memory, src_pad = self.encode(src)
        return self.decode(tgt_in, memory, src_pad)

    # ------------------------------------------------------------------
    def source_ids(self, x: Sentence | list[str] | tuple[str, ...], tag: str | None = None) -> list[int]:
        tokens = list(x.tokens if isinstance(x, Sentence) else x)
        tag = self.tag if tag is None else tag
        if tag:
            tokens = [tag] + tokens
        return self.src_vocab.encode(tokens)

    def target_ids(self, y: Sentence | list[str] | tuple[str, ...]) -> list[int]:
        return self.tgt_vocab.encode(y.tokens if isinstance(y, Sentence) else y)

    @property
    def dtype(self) -> torch.dtype:
        return self.proj.weight.dtype

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def pad_batch(seqs: list[list[int]], pad: int = Vocabulary.pad_id) -> torch.Tensor:
    width = max((len(s) for s in seqs), default=0)
    out = torch.full((len(seqs), max(width, 1)), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        if s:
            out[i, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def teacher_forcing(tgt_seqs: list[list[int]]):
    """Return (decoder input, gold output) tensors: ``BOS y`` and ``y EOS``."""
    tgt_in = pad_batch([[Vocabulary.bos_id] + s for s in tgt_seqs])
    tgt_out = pad_batch([s + [Vocabulary.eos_id] for s in tgt_seqs])
    return tgt_in, tgt_out


def token_log_probs_batch(model: Seq2SeqModel, src_seqs: list[list[int]], tgt_seqs: list[list[int]],
                          include_eos: bool | list[bool] = True) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-token gold log-probabilities and a mask of counted positions, both (B, T)."""
    src = pad_batch(src_seqs)
    tgt_in, tgt_out = teacher_forcing(tgt_seqs)
    logits = model(src, tgt_in)
    logp = torch.log_softmax(logits, dim=-1)
    gold = logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    if isinstance(include_eos, bool):
        include_eos = [include_eos] * len(tgt_seqs)
    lengths = torch.tensor([len(s) + int(e) for s, e in zip(tgt_seqs, include_eos)])
    mask = torch.arange(tgt_out.shape[1])[None, :] < lengths[:, None]
    return gold.masked_fill(~mask, 0.0), mask


def _raise_non_finite(model: nn.Module) -> None:
    for name, p in model.named_parameters():
        if not torch.isfinite(p).all():
            raise FloatingPointError(f"non-finite values in parameter {name!r}")
    raise FloatingPointError("non-finite loss in forward pass (all parameters finite)")


def nll_per_sentence(model: Seq2SeqModel, src_seqs, tgt_seqs) -> torch.Tensor:
    """Length-normalized negative log-likelihood for each pair, shape (B,)."""
    gold, mask = token_log_probs_batch(model, src_seqs, tgt_seqs)
    nll = -gold.sum(-1) / mask.sum(-1)
    if not torch.isfinite(nll).all():
        _raise_non_finite(model)
    return nll


def nll_loss(model: Seq2SeqModel, x: Sentence, y: Sentence) -> float:
    """Mean negative log-probability of ``y EOS`` given ``x``."""
    if not y.tokens:
        raise ValueError("target must be non-empty")
    with torch.no_grad():
        return float(nll_per_sentence(model, [model.source_ids(x)], [model.target_ids(y)])[0])


def sequence_log_prob(model: Seq2SeqModel, x: Sentence, y: Sentence, include_eos: bool = True) -> float:
    with torch.no_grad():
        gold, _ = token_log_probs_batch(model, [model.source_ids(x)], [model.target_ids(y)], include_eos)
    return float(gold.sum())
