"""Flat ``section.key = value`` run configuration.

Every stage of the command-line pipeline reads one ``RunConfig``. The file
format is one assignment per line; lines starting with ``#`` are comments. Keys carry a
section prefix (``model.width = 64``) except the global ``seed``. Overrides
given on the command line are applied after the file.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .align import AlignConfig
from .corpus import Perspective
from .reward import RewardConfig
from .seq2seq import ModelConfig, TrainConfig

CONFIG_ENV = "NATALIGN_CONFIG"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class PathsConfig:
    manifest: str = ""
    data_dir: str = ""
    out_dir: str = "run"


@dataclass
class CorpusOptions:
    lowercase: bool = False
    min_freq: int = 2


@dataclass
class ClassifierOptions:
    reg: float = 1e-4
    max_iter: int = 500
    perspectives: str = "HT-OR,MT-HT,MT-OR"

    def parsed(self) -> list[Perspective]:
        return [Perspective.parse(p.strip()) for p in self.perspectives.split(",") if p.strip()]


@dataclass
class MetricOptions:
    mtld_threshold: float = 0.72
    top_words: int = 1000
    em_iters: int = 5
    option_floor: float = 0.1
    min_source_freq: int = 10
    min_options: int = 2


@dataclass
class DecodeOptions:
    beam: int = 5
    postprocess: bool = True
    punct: str = ".,!?;:…-"
    rerank_k: int = 10
    top_k: int = 10


@dataclass
class SelectOptions:
    criterion: str = "max-hm"
    step: int = 5000


# reward.sigma_c may also be "auto": the 60th percentile of base-model content
# scores on the validation split
@dataclass
class RewardOptions:
    sigma_t: float = 0.5
    sigma_c: str = "auto"
    percentile: float = 60.0
    beta: float = 0.5
    mode: str = "both"
    content_scorer: str = "chrf"

    @property
    def auto_sigma_c(self) -> bool:
        return self.sigma_c == "auto"

    def to_reward_config(self, sigma_c: float | None = None) -> RewardConfig:
        if sigma_c is None:
            if self.auto_sigma_c:
                raise ValueError("sigma_c is 'auto' and has not been calibrated")
            sigma_c = float(self.sigma_c)
        return RewardConfig(self.sigma_t, sigma_c, self.beta, self.mode, self.content_scorer)


@dataclass
class AlignOptions:
    perspective: str = "MT-HT"
    samples_per_source: int = 1
    temperature: float = 1.0
    lr: float = 1e-4
    batch_size: int = 32
    checkpoint_interval: int = 100
    max_steps: int = 1000
    grad_clip: float = 1.0
    weight_decay: float = 0.0
    baseline: bool = False


SECTIONS: dict[str, type] = {
    "paths": PathsConfig,
    "corpus": CorpusOptions,
    "model": ModelConfig,
    "train": TrainConfig,
    "classifier": ClassifierOptions,
    "reward": RewardOptions,
    "align": AlignOptions,
    "select": SelectOptions,
    "metrics": MetricOptions,
    "decode": DecodeOptions,
}
# filled from data or from the global seed, never from the file
_DERIVED = {"model.src_vocab_size", "model.tgt_vocab_size", "train.seed"}


@dataclass
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    corpus: CorpusOptions = field(default_factory=CorpusOptions)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    classifier: ClassifierOptions = field(default_factory=ClassifierOptions)
    reward: RewardOptions = field(default_factory=RewardOptions)
    align: AlignOptions = field(default_factory=AlignOptions)
    select: SelectOptions = field(default_factory=SelectOptions)
    metrics: MetricOptions = field(default_factory=MetricOptions)
    decode: DecodeOptions = field(default_factory=DecodeOptions)

    # ------------------------------------------------------------------
    def set(self, key: str, raw: str) -> None:
        if key == "seed":
            self.seed = _coerce(key, int, raw)
            return
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(key, "unknown key")
        if key in _DERIVED:
            raise ConfigError(key, "is derived and cannot be set")
        target = getattr(self, section)
        types = {f.name: f.type for f in dataclasses.fields(target)}
        if name not in types:
            raise ConfigError(key, "unknown key")
        current = getattr(target, name)
        setattr(target, name, _coerce(key, type(current), raw))

    def items(self) -> list[tuple[str, Any]]:
        out: list[tuple[str, Any]] = [("seed", self.seed)]
        for section in SECTIONS:
            for f in dataclasses.fields(getattr(self, section)):
                key = f"{section}.{f.name}"
                if key not in _DERIVED:
                    out.append((key, getattr(getattr(self, section), f.name)))
        return out

    def echo(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.items())

    def validate(self) -> None:
        checks = [
            # vocabulary sizes are only known once a corpus is read
            ("model", dataclasses.replace(self.model, src_vocab_size=1, tgt_vocab_size=1).validate),
            ("train", self._train_config().validate),
            ("align", lambda: self.align_config(0.5).validate()),
        ]
        for section, check in checks:
            try:
                check()
            except ValueError as exc:
                raise ConfigError(_guess_key(section, str(exc), getattr(self, section)), str(exc)) from None
        try:
            self.reward.to_reward_config(0.5 if self.reward.auto_sigma_c else None).validate()
        except ValueError as exc:
            raise ConfigError(_guess_key("reward", str(exc), self.reward), str(exc)) from None
        if not self.reward.auto_sigma_c:
            try:
                float(self.reward.sigma_c)
            except ValueError:
                raise ConfigError("reward.sigma_c", "must be a number or 'auto'") from None
        if not 0 <= self.reward.percentile <= 100:
            raise ConfigError("reward.percentile", "must lie in [0, 100]")
        try:
            self.classifier.parsed()
        except ValueError as exc:
            raise ConfigError("classifier.perspectives", str(exc)) from None
        if self.select.criterion not in ("max-hm", "fixed-step"):
            raise ConfigError("select.criterion", "must be max-hm or fixed-step")
        for key, value in (("decode.beam", self.decode.beam), ("decode.rerank_k", self.decode.rerank_k),
                           ("decode.top_k", self.decode.top_k), ("corpus.min_freq", self.corpus.min_freq),
                           ("metrics.em_iters", self.metrics.em_iters), ("metrics.top_words", self.metrics.top_words)):
            if value < 1:
                raise ConfigError(key, "must be >= 1")
        if not 0 < self.metrics.mtld_threshold < 1:
            raise ConfigError("metrics.mtld_threshold", "must lie in (0, 1)")
        if not self.paths.out_dir:
            raise ConfigError("paths.out_dir", "must be set")

    def require_manifest(self) -> Path:
        if not self.paths.manifest:
            raise ConfigError("paths.manifest", "must be set")
        path = Path(self.paths.manifest)
        if not path.is_file():
            raise ConfigError("paths.manifest", f"file not found: {path}")
        if self.paths.data_dir and not Path(self.paths.data_dir).is_dir():
            raise ConfigError("paths.data_dir", f"directory not found: {self.paths.data_dir}")
        return path

    # ------------------------------------------------------------------
    def _train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return self._train_config()

    def align_config(self, sigma_c: float | None = None) -> AlignConfig:
        a = self.align
        return AlignConfig(
            reward=self.reward.to_reward_config(sigma_c), perspective=a.perspective,
            samples_per_source=a.samples_per_source, temperature=a.temperature, lr=a.lr,
            batch_size=a.batch_size, checkpoint_interval=a.checkpoint_interval,
            max_steps=a.max_steps, seed=self.seed, grad_clip=a.grad_clip,
            weight_decay=a.weight_decay, baseline=a.baseline,
        )


def _coerce(key: str, kind: type, raw: str) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}") from None
    return raw


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _guess_key(section: str, message: str, obj: Any) -> str:
    for f in dataclasses.fields(obj):
        if f.name in message:
            return f"{section}.{f.name}"
    return section


def parse_assignments(lines: Iterable[str], origin: str = "<config>") -> list[tuple[str, str]]:
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{lineno}", "expected key = value")
        out.append((key.strip(), value.strip()))
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | Iterable[str] = (),
                seed: int | None = None) -> RunConfig:
    """Defaults, then the file (or ``$NATALIGN_CONFIG``), then overrides, then ``seed``."""
    cfg = RunConfig()
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("config", f"file not found: {p}")
        for key, value in parse_assignments(p.read_text(encoding="utf-8").splitlines(), str(p)):
            cfg.set(key, value)
    items = overrides.items() if isinstance(overrides, Mapping) else (
        _split_override(o) for o in overrides)
    for key, value in items:
        cfg.set(key, value)
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def _split_override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(text, "override must look like key=value")
    return key.strip(), value.strip()
