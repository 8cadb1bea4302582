"""Reward alignment on the synthetic register task, end to end.

Every source sentence in the task has two valid renderings that differ only in
a register marker: a bland one ("zeer") and a natural one ("heel"). Sources
that start with a cue symbol are rendered naturally a little under half of the
time; all other sources almost never are. A supervised model therefore learns
to emit the bland register everywhere, because it is always the more probable
choice.

The alignment step rewards samples that a classifier finds natural *and* that
still match the reference. On cue sources the natural register then becomes the
mode, while plain sources stay bland. Run with

    python demos/style_alignment.py --steps 600

It takes a few minutes on one CPU core.
"""

import argparse
import time

import torch

from natalign.align import AlignConfig, align_train, select_checkpoint
from natalign.classifier import confusion_matrix, train_classifier
from natalign.corpus import Perspective, make_classifier_dataset, synthesize_mt_corpus
from natalign.evalreport import evaluate_checkpoint
from natalign.reward import CharFScorer, RewardConfig, calibrate_content_threshold
from natalign.seq2seq import ModelConfig, TrainConfig, build_model, greedy_batch, train_supervised
from natalign.synthetic import style_task

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--steps", type=int, default=600, help="alignment steps")
parser.add_argument("--beta", type=float, default=0.5, help="weight of the NLL anchor")
parser.add_argument("--mode", default="both", choices=("both", "classifier", "content"))
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

t0 = time.time()
torch.manual_seed(args.seed)
task = style_task(seed=args.seed)
natural = sum(p.target.tokens[-2] == "heel" for p in task.train) / len(task.train)
print(f"{len(task.train)} training pairs, {100 * natural:.1f}% in the natural register")

# 1. supervised base model
base = build_model(task.train, ModelConfig(width=64, heads=4, ff_width=128, dropout=0.1), min_freq=1,
                   seed=args.seed)
ckpt = train_supervised(base, task.train, task.valid,
                        TrainConfig(max_lr=1e-3, warmup_steps=100, eval_interval=200, grad_accum=1,
                                    max_steps=4000, patience=5, seed=args.seed))
base = ckpt.to_model()
print(f"base model: best validation loss {ckpt.valid_loss:.4f} at step {ckpt.step}  [{time.time() - t0:.0f} s]")

# 2. MT-HT classifier: base-model output vs the natural human renderings
def mt(pairs):
    return [s for d in synthesize_mt_corpus(pairs, base, beam=1) for s in d.sentences]

clf = train_classifier(make_classifier_dataset(
    "MT-HT", {"HT": [p.target for p in task.classifier_train], "MT": mt(task.classifier_train)}))
held_out = make_classifier_dataset(
    "MT-HT", {"HT": [p.target for p in task.classifier_test], "MT": mt(task.classifier_test)})
print(f"classifier held-out accuracy {confusion_matrix(clf, held_out).accuracy:.3f}")

# 3. content threshold from the base model's validation scores
scorer = CharFScorer()
hyps = greedy_batch(base, [p.source for p in task.valid])
sigma_c = calibrate_content_threshold([scorer(p.source, p.target, h) for p, h in zip(task.valid, hyps)])
print(f"calibrated content threshold {sigma_c:.3f}")

# 4. alignment, with a validation curve every 100 steps
classifiers = {Perspective.MT_HT: clf}

def evaluate(model, step, pairs=task.valid):
    pt = evaluate_checkpoint(model, pairs, classifiers, Perspective.MT_HT, step, scorer, beam=1)
    print(f"  step {step:5d}  natural {pt.classification_rate:.3f}  content {pt.content:.4f}  "
          f"MTLD {pt.mtld:.2f}  HM {pt.hm:.3f}  [{time.time() - t0:.0f} s]", flush=True)
    return pt

cfg = AlignConfig(reward=RewardConfig(sigma_c=sigma_c, beta=args.beta, mode=args.mode),
                  max_steps=args.steps, checkpoint_interval=100, seed=args.seed)
print(f"\naligning for {args.steps} steps (mode {args.mode}, beta {args.beta}), validation curve:")
result = align_train(base, task.train, clf, scorer, cfg, evaluate=evaluate)

# 5. held-out comparison
chosen = select_checkpoint(result.checkpoints, "max-hm", result.evals)
print(f"\nselected step {chosen.step}; held-out test set:")
before = evaluate_checkpoint(base, task.test, classifiers, Perspective.MT_HT, 0, scorer, beam=1)
after = evaluate_checkpoint(chosen.to_model(), task.test, classifiers, Perspective.MT_HT, chosen.step,
                            scorer, beam=1)
for name, pt in (("base", before), ("aligned", after)):
    print(f"  {name:8s} natural {pt.classification_rate:.3f}  content {pt.content:.4f}  MTLD {pt.mtld:.2f}")

cue = [p for p in task.test if task.is_cue(p.source)][:3]
model = chosen.to_model()
print("\ncue sources, base vs aligned:")
for p, b, a in zip(cue, greedy_batch(base, [p.source for p in cue]), greedy_batch(model, [p.source for p in cue])):
    print(f"  {p.source.raw}\n    base:    {b.raw}\n    aligned: {a.raw}")
