"""Model snapshots and their on-disk container.

File layout (little-endian)::

    8 bytes   magic b"NATCKPT\\0"
    u32       format version
    u64       header length H
    H bytes   UTF-8 JSON header: config, vocabularies, step, metrics,
              and a list of {name, dtype, shape, offset, nbytes}
    ...       raw parameter blobs, concatenated in header order
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..corpus import Vocabulary
from .model import ModelConfig, Seq2SeqModel

MAGIC = b"NATCKPT\x00"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    src_tokens: list[str]
    tgt_tokens: list[str]
    state: dict[str, torch.Tensor]
    step: int = 0
    valid_loss: float = math.inf
    metrics: dict = field(default_factory=dict)
    tag: str | None = None

    @property
    def config_hash(self) -> str:
        return self.config.digest()

    @classmethod
    def from_model(cls, model: Seq2SeqModel, step: int = 0, valid_loss: float = math.inf,
                   metrics: dict | None = None) -> "Checkpoint":
        state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        return cls(ModelConfig(**asdict(model.config)), model.src_vocab.to_list(),
                   model.tgt_vocab.to_list(), state, step, float(valid_loss),
                   dict(metrics or {}), model.tag)

    def to_model(self) -> Seq2SeqModel:
        model = Seq2SeqModel(ModelConfig(**asdict(self.config)),
                             Vocabulary.from_list(self.src_tokens),
                             Vocabulary.from_list(self.tgt_tokens))
        dtype = next(iter(self.state.values())).dtype if self.state else torch.float32
        model.to(dtype)
        model.load_state_dict(self.state)
        model.trained = True
        model.tag = self.tag
        model.eval()
        return model

    def load_into(self, model: Seq2SeqModel) -> None:
        model.load_state_dict(self.state)

    # ------------------------------------------------------------------
    def save(self, path: str | Path) -> None:
        entries, blobs, offset = [], [], 0
        for name in sorted(self.state):
            arr = self.state[name].detach().cpu().contiguous().numpy()
            raw = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
            entries.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape),
                            "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
        header = {
            "config": asdict(self.config),
            "config_hash": self.config_hash,
            "src_vocab": self.src_tokens,
            "tgt_vocab": self.tgt_tokens,
            "step": self.step,
            "valid_loss": None if not math.isfinite(self.valid_loss) else self.valid_loss,
            "metrics": self.metrics,
            "tag": self.tag,
            "params": entries,
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
            fh.write(head)
            for raw in blobs:
                fh.write(raw)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version, hlen = struct.unpack_from("<IQ", data, 8)
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        start = 8 + struct.calcsize("<IQ")
        header = json.loads(data[start : start + hlen].decode("utf-8"))
        body = start + hlen
        state = {}
        for e in header["params"]:
            lo = body + e["offset"]
            arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]).newbyteorder("<"),
                                count=int(np.prod(e["shape"], dtype=np.int64)), offset=lo)
            state[e["name"]] = torch.from_numpy(arr.reshape(e["shape"]).copy())
        config = ModelConfig(**header["config"])
        ckpt = cls(config, header["src_vocab"], header["tgt_vocab"], state, header["step"],
                   math.inf if header["valid_loss"] is None else header["valid_loss"],
                   header["metrics"], header["tag"])
        if ckpt.config_hash != header["config_hash"]:
            raise CheckpointError(f"{path}: config hash mismatch")
        return ckpt


def load_model(path: str | Path) -> Seq2SeqModel:
    return Checkpoint.load(path).to_model()
