import numpy as np
import pytest
import torch

from helpers import sentences, tiny_model
from natalign.align import (
    AlignConfig, AlignmentDiverged, align_train, alignment_loss, pick_most_natural, rerank_topk,
    select_checkpoint, write_step_logs,
)
from natalign.classifier import FeatureSpec, NaturalnessClassifier
from natalign.corpus import ParallelPair, Perspective
from natalign.evalreport import CurvePoint
from natalign.reward import RewardConfig
from natalign.seq2seq import Checkpoint, Sample, sample_batch
from natalign.seq2seq.model import nll_per_sentence

SPEC = FeatureSpec(hash_bits=10)

# random tiny models rarely clear the content threshold
pytestmark = pytest.mark.filterwarnings("ignore:reward collapse")


class FixedScores:
    def __init__(self, scores):
        self._scores = np.asarray(scores, dtype=float)

    def scores(self, sents):
        return self._scores[: len(sents)]


def _constant_clf(bias=0.0):
    return NaturalnessClassifier(np.zeros(SPEC.dim), bias, Perspective.MT_HT, SPEC)


def _pairs():
    return [ParallelPair(x, y, "b") for x, y in sentences()]


def _grads(model):
    return [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in model.parameters()]


def _batch(model):
    src = [model.source_ids(x) for x, _ in sentences()]
    ref = [model.target_ids(y) for _, y in sentences()]
    samples = [[7, 8], [6], [8, 8, 7]]
    return src, ref, samples, [True, False, True]


def test_zero_rewards_give_half_the_supervised_gradient():
    model = tiny_model()
    src, ref, samples, ended = _batch(model)
    model.zero_grad()
    total, nll, rw = alignment_loss(model, src, ref, src, samples, ended, [0.0] * 3, beta=0.5)
    assert rw.item() == 0.0
    total.backward()
    aligned = _grads(model)
    model.zero_grad()
    nll_per_sentence(model, src, ref).mean().backward()
    for a, s in zip(aligned, _grads(model)):
        assert torch.allclose(a, 0.5 * s, atol=1e-15, rtol=0)


def test_beta_zero_and_zero_rewards_give_no_gradient():
    model = tiny_model()
    src, ref, samples, ended = _batch(model)
    model.zero_grad()
    total, _, _ = alignment_loss(model, src, ref, src, samples, ended, [0.0] * 3, beta=0.0)
    total.backward()
    assert all(float(g.abs().max()) == 0.0 for g in _grads(model))


def test_reward_loss_is_length_normalized():
    model = tiny_model()
    src, ref, samples, ended = _batch(model)
    from natalign.seq2seq.model import token_log_probs_batch

    with torch.no_grad():
        gold, mask = token_log_probs_batch(model, src, samples, ended)
    rewards = [0.3, 0.6, 0.9]
    expected = -np.mean([r * float(gold[i].sum()) / float(mask[i].sum()) for i, r in enumerate(rewards)])
    _, _, rw = alignment_loss(model, src, ref, src, samples, ended, rewards, beta=0.5)
    assert rw.item() == pytest.approx(expected, abs=1e-12)
    # mask lengths: tokens plus EOS only where the sample ended
    assert mask.sum(-1).tolist() == [3, 1, 4]


def _run(tmp_path=None, **kw):
    cfg = AlignConfig(batch_size=2, max_steps=6, checkpoint_interval=3, lr=1e-3, **kw)
    return align_train(tiny_model(), _pairs(), _constant_clf(2.0), cfg=cfg, out_dir=tmp_path)


def test_logged_loss_decomposes(tmp_path):
    result = _run(tmp_path, reward=RewardConfig(sigma_c=0.0, beta=0.5))
    assert len(result.logs) == 6
    for entry in result.logs:
        assert entry.total == pytest.approx(0.5 * entry.nll + entry.reward_loss, abs=1e-9)
    assert [c.step for c in result.checkpoints] == [0, 3, 6]
    assert sorted(p.name for p in tmp_path.iterdir()) == ["step_0.ckpt", "step_3.ckpt", "step_6.ckpt"]
    write_step_logs(result.logs, tmp_path / "steps.tsv")
    lines = (tmp_path / "steps.tsv").read_text().splitlines()
    assert lines[0] == "step\tr_t\tr_c\tr\tnll\treward_loss\ttotal" and len(lines) == 7


def test_alignment_is_seeded():
    a, b = _run(), _run()
    assert [l.row() for l in a.logs] == [l.row() for l in b.logs]
    for k, v in a.checkpoints[-1].state.items():
        assert torch.equal(v, b.checkpoints[-1].state[k])


def test_base_model_is_not_modified():
    base = tiny_model()
    before = {k: v.clone() for k, v in base.state_dict().items()}
    align_train(base, _pairs(), _constant_clf(2.0), cfg=AlignConfig(batch_size=2, max_steps=2, lr=1e-2))
    assert all(torch.equal(before[k], v) for k, v in base.state_dict().items())


def test_reward_collapse_warns():
    # scores below sigma_t everywhere
    with pytest.warns(RuntimeWarning, match="reward collapse"):
        align_train(tiny_model(), _pairs(), _constant_clf(-3.0), cfg=AlignConfig(batch_size=3, max_steps=2))


def test_untrained_base_is_rejected():
    model = tiny_model()
    model.trained = False
    with pytest.raises(RuntimeError, match="trained"):
        align_train(model, _pairs(), _constant_clf())


def test_nan_aborts_with_last_checkpoint():
    model = tiny_model()
    with torch.no_grad():
        model.proj.weight[0, 0] = float("nan")
    with pytest.raises(AlignmentDiverged) as info:
        align_train(model, _pairs(), _constant_clf(2.0), cfg=AlignConfig(batch_size=2, max_steps=2))
    assert info.value.checkpoint.step == 0


def test_ablation_modes_set_reward():
    for mode in ("classifier", "content"):
        res = align_train(tiny_model(), _pairs(), _constant_clf(2.2),
                          cfg=AlignConfig(batch_size=3, max_steps=1, reward=RewardConfig(mode=mode)))
        entry = res.logs[0]
        assert entry.r == pytest.approx(entry.r_t if mode == "classifier" else entry.r_c)


# --------------------------------------------------------------------------
# checkpoint selection

def _ckpts(steps):
    model = tiny_model()
    return [Checkpoint.from_model(model, s) for s in steps]


def test_single_checkpoint_is_returned():
    only = _ckpts([0])
    assert select_checkpoint(only, "max-hm") is only[0]
    assert select_checkpoint(only, "fixed-step", step=5000) is only[0]
    with pytest.raises(ValueError):
        select_checkpoint([])


def test_fixed_step_selection():
    cks = _ckpts(range(1000, 7000, 1000))
    assert select_checkpoint(cks, "fixed-step", step=5000).step == 5000
    assert select_checkpoint(cks, "fixed-step", step=5500).step == 5000


def test_max_hm_selection():
    cks = _ckpts([100, 200])
    evals = {100: CurvePoint(100, {Perspective.MT_HT: 0.9}, 0.0, 0.2),
             200: CurvePoint(200, {Perspective.MT_HT: 0.5}, 0.0, 0.5)}
    assert evals[100].hm == pytest.approx(0.36 / 1.1)
    assert select_checkpoint(cks, "max-hm", evals).step == 200
    tie = {100: evals[200], 200: evals[200]}
    assert select_checkpoint(cks, "max-hm", tie).step == 100
    with pytest.raises(ValueError, match="unknown"):
        select_checkpoint(cks, "best-bleu", evals)


# --------------------------------------------------------------------------
# reranking

def _sample(tokens, lp):
    from natalign.corpus import Sentence

    return Sample(Sentence.from_tokens(tokens), (), (lp,), True)


def test_pick_highest_classifier_score():
    cands = [_sample(("a",), -1.0), _sample(("b",), -5.0), _sample(("c",), -2.0)]
    assert pick_most_natural(cands, FixedScores([0.2, 0.9, 0.5])).sentence.tokens == ("b",)


def test_ties_go_to_higher_log_prob():
    cands = [_sample(("a",), -3.0), _sample(("b",), -1.0), _sample(("c",), -2.0)]
    assert pick_most_natural(cands, FixedScores([0.7, 0.7, 0.7])).sentence.tokens == ("b",)


def test_rerank_with_one_candidate_is_a_single_sample():
    model = tiny_model(dtype=torch.float32)
    x = sentences()[0][0]
    got = rerank_topk(model, x, 1, _constant_clf(), top_k=2, generator=torch.Generator().manual_seed(9))
    ref = sample_batch(model, [x], 1.0, torch.Generator().manual_seed(9), top_k=2)[0]
    assert got == ref.sentence
    with pytest.raises(ValueError):
        rerank_topk(model, x, 0, _constant_clf())
