import math

import pytest
from hypothesis import given, strategies as st

from natalign.corpus import tokenize
from natalign.reward import (
    CharFScorer, RewardConfig, calibrate_content_threshold, chrf, compute_reward, content_reward,
    naturalness_reward, overall_reward,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_naturalness_threshold_is_inclusive():
    assert naturalness_reward(0.49, 0.5) == 0.0
    assert naturalness_reward(0.50, 0.5) == 0.50
    assert naturalness_reward(0.9) == 0.9


def test_content_threshold_is_inclusive():
    assert content_reward(0.84, 0.85) == 0.0
    assert content_reward(0.85, 0.85) == 0.85
    assert content_reward(1.0) == 1.0


def test_overall_reward_values():
    assert overall_reward(0.0, 0.9) == 0.0
    assert overall_reward(0.9, 0.0) == 0.0
    assert overall_reward(0.6, 0.9) == pytest.approx(0.72, abs=1e-12)
    for r in (0.1, 0.5, 0.77, 1.0):
        assert overall_reward(r, r) == pytest.approx(r, abs=1e-15)


@given(unit, unit)
def test_harmonic_mean_bounds(a, b):
    r = overall_reward(a, b)
    assert 0.0 <= r <= 1.0
    if a == 0 or b == 0:
        assert r == 0.0
    else:
        assert min(a, b) - 1e-12 <= r <= max(a, b) + 1e-12
        assert r <= (a + b) / 2 + 1e-12


@given(unit, unit, unit, unit, unit)
def test_raising_thresholds_never_increases_reward(p, c, s1, s2, s3):
    lo, hi = sorted((s1, s2))
    assert naturalness_reward(p, hi) <= naturalness_reward(p, lo)
    assert content_reward(c, hi) <= content_reward(c, lo)
    low = compute_reward(p, c, RewardConfig(sigma_t=lo, sigma_c=s3))
    high = compute_reward(p, c, RewardConfig(sigma_t=hi, sigma_c=s3))
    assert high.r <= low.r


@given(unit, unit)
def test_breakdown_zero_iff_component_zero(p, c):
    b = compute_reward(p, c, RewardConfig())
    assert (b.r == 0) == (b.r_t == 0 or b.r_c == 0)
    assert b.p_natural == p and b.content == c


def test_ablation_modes():
    assert compute_reward(0.8, 0.1, RewardConfig(mode="classifier")).r == 0.8
    assert compute_reward(0.1, 0.9, RewardConfig(mode="content")).r == 0.9
    assert compute_reward(0.8, 0.9, RewardConfig(mode="both")).r == pytest.approx(2 / (1 / 0.8 + 1 / 0.9))


def test_reward_config_validation():
    with pytest.raises(ValueError, match="sigma_t"):
        RewardConfig(sigma_t=1.5).validate()
    with pytest.raises(ValueError, match="beta"):
        RewardConfig(beta=-1).validate()
    with pytest.raises(ValueError, match="mode"):
        RewardConfig(mode="neither").validate()


def _brute_chrf(hyp, ref, max_order=6):
    """Count every n-gram occurrence pairwise instead of with multiset intersections."""
    hyp, ref = hyp.replace(" ", ""), ref.replace(" ", "")
    ps, rs = [], []
    for n in range(1, max_order + 1):
        hg = [hyp[i:i + n] for i in range(len(hyp) - n + 1)]
        rg = [ref[i:i + n] for i in range(len(ref) - n + 1)]
        if not hg and not rg:
            continue
        used = [False] * len(rg)
        match = 0
        for g in hg:
            for j, r in enumerate(rg):
                if not used[j] and r == g:
                    used[j] = True
                    match += 1
                    break
        ps.append(match / len(hg) if hg else 0.0)
        rs.append(match / len(rg) if rg else 0.0)
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def test_chrf_examples():
    assert chrf("abcd", "abcd") == 1.0
    assert chrf("xyz", "abcd") == 0.0
    # orders 1-4 give precision = recall = 3/4, 2/3, 1/2, 0; orders 5-6 are empty
    assert chrf("abce", "abcd") == pytest.approx(23 / 48, abs=1e-12)
    assert chrf("abce", "abcd") == pytest.approx(_brute_chrf("abce", "abcd"), abs=1e-9)


@given(st.text("abc d", min_size=1, max_size=15), st.text("abc d", min_size=1, max_size=15))
def test_chrf_matches_bruteforce(hyp, ref):
    if not hyp.replace(" ", "") or not ref.replace(" ", ""):
        return
    assert chrf(hyp, ref) == pytest.approx(_brute_chrf(hyp, ref), abs=1e-9)


def test_char_f_scorer_identity_and_range():
    scorer = CharFScorer()
    y = tokenize("de kat zit op de mat .")
    assert scorer(None, y, y) == 1.0
    assert 0.0 <= scorer(None, y, tokenize("een hond")) <= 1.0
    with pytest.raises(ValueError):
        scorer(None, tokenize(""), y)


def test_calibration_is_the_60th_percentile():
    scores = [i / 10 for i in range(11)]
    assert calibrate_content_threshold(scores) == pytest.approx(0.6)
    assert calibrate_content_threshold([1.0] * 5) == 1.0
    with pytest.raises(ValueError):
        calibrate_content_threshold([])
    assert math.isclose(calibrate_content_threshold([0.2, 0.4], 50), 0.3)
