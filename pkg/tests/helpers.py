"""Small models and numerical checks shared by the unit and acceptance tests."""

import torch

from natalign.corpus import Vocabulary, tokenize
from natalign.seq2seq import ModelConfig, Seq2SeqModel

SRC_WORDS = ["a", "b", "c", "d"]
TGT_WORDS = ["x", "y", "z"]


def tiny_model(seed: int = 0, dtype=torch.float64, width: int = 8, layers: int = 1) -> Seq2SeqModel:
    torch.manual_seed(seed)
    cfg = ModelConfig(enc_layers=layers, dec_layers=layers, width=width, heads=2, ff_width=2 * width,
                      max_len=12, dropout=0.0)
    model = Seq2SeqModel(cfg, Vocabulary(SRC_WORDS), Vocabulary(TGT_WORDS)).to(dtype)
    # spread the weights a little so that gradients are not dominated by the init scale
    with torch.no_grad():
        for p in model.parameters():
            p.add_(0.1 * torch.randn_like(p))
    model.trained = True
    return model


def sentences():
    return [(tokenize("a b c"), tokenize("x y")), (tokenize("d a"), tokenize("z z x")),
            (tokenize("b"), tokenize("y"))]


def finite_difference_check(model, loss_fn, n_probes: int = 60, h: float = 1e-6, seed: int = 0):
    """Compare autograd against central differences along random probes.

    Half of the probes are random unit directions in the full parameter space,
    the other half single coordinates with non-negligible gradient. Returns the
    list of relative errors.
    """
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = [p.grad.detach().clone() for p in params]
    gen = torch.Generator().manual_seed(seed)

    def loss_at(direction, eps):
        with torch.no_grad():
            for p, d in zip(params, direction):
                p.add_(eps * d)
            value = float(loss_fn())
            for p, d in zip(params, direction):
                p.sub_(eps * d)
        return value

    errors = []
    for k in range(n_probes):
        if k % 2 == 0:
            direction = [torch.randn(p.shape, generator=gen, dtype=p.dtype) for p in params]
            norm = torch.sqrt(sum((d * d).sum() for d in direction))
            direction = [d / norm for d in direction]
        else:
            # a coordinate whose gradient is not tiny, so the relative error is meaningful
            while True:
                i = int(torch.randint(len(params), (1,), generator=gen))
                j = int(torch.randint(params[i].numel(), (1,), generator=gen))
                if abs(float(grads[i].reshape(-1)[j])) > 1e-6:
                    break
            direction = [torch.zeros_like(p) for p in params]
            direction[i].view(-1)[j] = 1.0
        analytic = float(sum((g * d).sum() for g, d in zip(grads, direction)))
        numeric = (loss_at(direction, h) - loss_at(direction, -h)) / (2 * h)
        errors.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-10))
    return errors


# --------------------------------------------------------------------------
# command-line pipeline on a small style corpus

TOY_CONFIG = """\
# small pipeline for tests
paths.manifest = {manifest}
paths.out_dir = {out}
corpus.min_freq = 1
model.width = 16
model.heads = 2
model.ff_width = 32
model.enc_layers = 1
model.dec_layers = 1
model.dropout = 0.0
model.max_len = 16
train.max_steps = 30
train.eval_interval = 10
train.grad_accum = 1
train.batch_size = 16
train.max_lr = 0.002
train.warmup_steps = 5
align.max_steps = 6
align.checkpoint_interval = 3
align.batch_size = 8
decode.beam = 2
decode.rerank_k = 3
metrics.min_source_freq = 2
"""

PIPELINE = (
    ["ingest"], ["train-base"], ["synth-mt"], ["train-classifier"], ["align"],
    ["translate", "--model", "base", "--name", "base"], ["translate", "--name", "aligned"],
    ["rerank"], ["evaluate"], ["curves"],
)


def write_toy_corpus(directory):
    from natalign.synthetic import style_task, write_corpus

    task = style_task(n_train=120, n_valid=16, n_test=16, n_pool=40, seed=0)
    return write_corpus(task, directory)


def write_toy_config(path, manifest, out):
    path.write_text(TOY_CONFIG.format(manifest=manifest, out=out), encoding="utf-8")
    return path


def run_pipeline(config, seed=0):
    """Run every subcommand in order; returns the list of exit codes."""
    from natalign.cli import main

    return [main(cmd + ["--config", str(config), "--seed", str(seed)]) for cmd in PIPELINE]


def snapshot(directory):
    """Map of relative path -> bytes for every file under ``directory``."""
    from pathlib import Path

    root = Path(directory)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
