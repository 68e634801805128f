"""Aggregation, fusion, decision rule, and the metric suite."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _oracles
from adfd.errors import (
    EmptyClassError,
    EmptyInputError,
    MissingKeyError,
    UtteranceMismatchError,
)
from adfd.scoring import (
    DetPoint,
    aggregate_clip,
    compute_auc,
    compute_eer,
    compute_metrics,
    decide,
    fuse_mean,
    read_scores,
    write_det_csv,
    write_scores,
)

prob_vectors = st.lists(
    st.floats(min_value=0.0, max_value=1.0, allow_nan=False).map(
        lambda p: (p, 1.0 - p)),
    min_size=1, max_size=12)


def random_probs(rng, n):
    p = rng.random(n)
    return np.stack([p, 1.0 - p], axis=1)


# --------------------------------------------------------------------------
# aggregate / fuse / decide
# --------------------------------------------------------------------------

def test_aggregate_worked_example():
    assert np.allclose(aggregate_clip([(0.2, 0.8), (0.6, 0.4)]), (0.4, 0.6),
                       rtol=0, atol=1e-12)


def test_aggregate_single_segment_identity():
    assert np.array_equal(aggregate_clip([(0.3, 0.7)]), (0.3, 0.7))


def test_aggregate_matches_explicit_loop():
    probs = random_probs(np.random.default_rng(0), 1000)
    got = aggregate_clip(probs)
    expected = [sum(p[c] for p in probs) / len(probs) for c in (0, 1)]
    assert np.max(np.abs(got - expected)) <= 1e-6


def test_aggregate_empty():
    with pytest.raises(EmptyInputError):
        aggregate_clip([])


def test_fuse_worked_example():
    assert np.allclose(fuse_mean([(1.0, 0.0), (0.0, 1.0)]), (0.5, 0.5),
                       rtol=0, atol=1e-12)


def test_fuse_single_system_identity():
    assert np.array_equal(fuse_mean([(0.9, 0.1)]), (0.9, 0.1))


def test_fuse_matches_explicit_loop():
    probs = random_probs(np.random.default_rng(1), 4)
    got = fuse_mean(probs)
    expected = [sum(p[c] for p in probs) / len(probs) for c in (0, 1)]
    assert np.max(np.abs(got - expected)) <= 1e-6


def test_fuse_utterance_guard():
    with pytest.raises(UtteranceMismatchError):
        fuse_mean([(0.5, 0.5), (0.4, 0.6)], utt_ids=["a", "b"])
    out = fuse_mean([(0.5, 0.5), (0.4, 0.6)], utt_ids=["a", "a"])
    assert np.allclose(out, (0.45, 0.55), rtol=0, atol=1e-12)
    with pytest.raises(EmptyInputError):
        fuse_mean([], utt_ids=[])


@settings(max_examples=50, deadline=None)
@given(prob_vectors)
def test_fusion_preserves_prob_invariant_and_permutation(probs):
    fused = fuse_mean(probs)
    assert np.all(fused >= 0.0) and np.all(fused <= 1.0)
    assert abs(fused.sum() - 1.0) < 1e-5
    shuffled = list(probs)
    np.random.default_rng(0).shuffle(shuffled)
    assert np.allclose(fuse_mean(shuffled), fused, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
       st.integers(min_value=1, max_value=8))
def test_fusion_idempotent_on_copies(p, s):
    fused = fuse_mean([(p, 1.0 - p)] * s)
    assert np.allclose(fused, (p, 1.0 - p), rtol=0, atol=1e-12)


def test_decide_examples():
    assert decide((0.4, 0.6)) == 1
    assert decide((0.6, 0.4)) == 0
    assert decide((0.5, 0.5)) == 0  # tie goes to bonafide


def test_decide_matches_scan():
    rng = np.random.default_rng(2)
    for p in random_probs(rng, 200):
        expected = 0 if p[0] >= p[1] else 1
        assert decide(p) == expected


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=0.01, max_value=0.99, allow_nan=False),
       st.floats(min_value=0.1, max_value=4.0))
def test_decide_invariant_under_monotone_transform(p, power):
    # raising both components to a positive power and renormalizing
    # preserves the ordering, so the decision must not move
    probs = np.array([p, 1.0 - p])
    warped = probs ** power
    warped /= warped.sum()
    assert decide(probs) == decide(warped)


# --------------------------------------------------------------------------
# EER
# --------------------------------------------------------------------------

def test_eer_perfect_separation():
    eer, _ = compute_eer([0.9, 0.8], [0.1, 0.2])
    assert eer == 0.0


def test_eer_identical_multisets():
    scores = [0.1, 0.4, 0.9]
    eer, _ = compute_eer(scores, scores)
    assert abs(eer - 0.5) < 1e-12


def test_eer_worked_example():
    eer, threshold = compute_eer([0.9, 0.7, 0.3], [0.1, 0.2, 0.8])
    assert abs(eer - 1.0 / 3.0) < 1e-12
    assert abs(threshold - 0.7) < 1e-12


def test_eer_matches_sweep_oracle():
    rng = np.random.default_rng(3)
    for trial in range(300):
        nb = int(rng.integers(1, 50))
        ns = int(rng.integers(1, 50))
        sep = rng.uniform(-0.5, 0.5)
        bona = rng.random(nb) + sep
        spoof = rng.random(ns)
        if trial % 3 == 0:  # exercise ties
            bona = np.round(bona, 1)
            spoof = np.round(spoof, 1)
        eer, thr = compute_eer(bona, spoof)
        o_eer, o_thr = _oracles.eer_sweep(bona, spoof)
        assert abs(eer - o_eer) <= 1e-9
        assert abs(thr - o_thr) <= 1e-9
        assert 0.0 <= eer <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False),
                min_size=1, max_size=30),
       st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False),
                min_size=1, max_size=30))
def test_eer_invariant_under_increasing_transform(bona, spoof):
    # derivative of x^3 + 2x is >= 2, so 1e-3-spaced scores can never
    # collide after warping, keeping the transform strictly increasing
    # in floating point, not just symbolically
    bona = np.round(np.asarray(bona), 3)
    spoof = np.round(np.asarray(spoof), 3)
    warp = lambda s: s ** 3 + 2.0 * s
    base, _ = compute_eer(bona, spoof)
    warped, _ = compute_eer(warp(bona), warp(spoof))
    assert abs(base - warped) <= 1e-9


def test_eer_empty_class():
    with pytest.raises(EmptyClassError):
        compute_eer([], [0.5])
    with pytest.raises(EmptyClassError):
        compute_eer([0.5], [])
    with pytest.raises(EmptyClassError):
        compute_eer([np.nan], [0.5])


# --------------------------------------------------------------------------
# AUC
# --------------------------------------------------------------------------

def test_auc_perfect_separation():
    assert compute_auc([0.9, 0.8], [0.1, 0.2]) == 1.0


def test_auc_reversed_separation():
    assert compute_auc([0.1, 0.2], [0.9, 0.8]) == 0.0


def test_auc_matches_pair_count_oracle():
    rng = np.random.default_rng(4)
    for trial in range(30):
        bona = rng.random(int(rng.integers(2, 100)))
        spoof = rng.random(int(rng.integers(2, 100)))
        if trial % 2 == 0:
            bona = np.round(bona, 1)
            spoof = np.round(spoof, 1)
        assert abs(compute_auc(bona, spoof)
                   - _oracles.auc_pair_count(bona, spoof)) <= 1e-9


# --------------------------------------------------------------------------
# compute_metrics
# --------------------------------------------------------------------------

def test_metrics_all_correct():
    scores = [("b1", 0.9), ("b2", 0.8), ("s1", 0.1), ("s2", 0.2)]
    keys = {"b1": 0, "b2": 0, "s1": 1, "s2": 1}
    rep = compute_metrics(scores, keys)
    assert rep.accuracy == 1.0
    assert rep.f1 == 1.0
    assert rep.auc == 1.0
    assert rep.eer == 0.0
    assert set(rep.to_dict()) == {"accuracy", "f1", "auc", "eer", "eer_threshold"}


def test_metrics_hand_worked_confusion():
    # predictions at the 0.5 cut with ties to bonafide:
    #   b1 0.8 -> bona (correct)   b2 0.3 -> spoof (wrong)
    #   s1 0.2 -> spoof (correct)  s2 0.7 -> bona (wrong)
    #   s3 0.5 -> bona by tie rule (wrong)
    scores = [("b1", 0.8), ("b2", 0.3), ("s1", 0.2), ("s2", 0.7), ("s3", 0.5)]
    keys = {"b1": 0, "b2": 0, "s1": 1, "s2": 1, "s3": 1}
    rep = compute_metrics(scores, keys)
    assert abs(rep.accuracy - 2.0 / 5.0) < 1e-12
    # spoof as positive class: tp={s1}, fp={b2}, fn={s2, s3}
    assert abs(rep.f1 - 2.0 * 1 / (2.0 * 1 + 1 + 2)) < 1e-12


def test_metrics_det_points_monotone():
    rng = np.random.default_rng(5)
    scores = [(f"u{i}", float(s)) for i, s in enumerate(rng.random(60))]
    keys = {f"u{i}": int(i % 2) for i in range(60)}
    rep = compute_metrics(scores, keys)
    far = [p.far for p in rep.det_points]
    frr = [p.frr for p in rep.det_points]
    thr = [p.threshold for p in rep.det_points]
    assert all(b <= a for a, b in zip(far, far[1:]))
    assert all(b >= a for a, b in zip(frr, frr[1:]))
    assert all(b > a for a, b in zip(thr, thr[1:]))
    assert 0.0 <= rep.eer <= 1.0


def test_metrics_missing_key():
    with pytest.raises(MissingKeyError):
        compute_metrics([("unknown", 0.5)], {"known": 0})


def test_metrics_empty():
    with pytest.raises(EmptyInputError):
        compute_metrics([], {})


# --------------------------------------------------------------------------
# score files
# --------------------------------------------------------------------------

def test_score_file_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    scores = [(f"LA_E_{i:07d}", float(s)) for i, s in enumerate(rng.random(50))]
    path = tmp_path / "scores.txt"
    write_scores(path, scores)
    back = read_scores(path)
    assert [u for u, _ in back] == [u for u, _ in scores]
    # 9 significant digits keep float64 scores to ~1e-9 relative
    for (_, a), (_, b) in zip(scores, back):
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_score_file_format(tmp_path):
    path = tmp_path / "scores.txt"
    write_scores(path, [("utt1", 0.123456789123), ("utt2", 1.0)])
    lines = path.read_text().splitlines()
    assert lines == ["utt1 0.123456789", "utt2 1"]


def test_score_file_rejects_malformed(tmp_path):
    path = tmp_path / "scores.txt"
    path.write_text("utt1 0.5\nutt2 0.4 extra\n")
    with pytest.raises(EmptyInputError):
        read_scores(path)


def test_det_csv(tmp_path):
    path = tmp_path / "det.csv"
    write_det_csv(path, [DetPoint(0.5, 0.25, 0.125), DetPoint(0.75, 0.0, 0.5)])
    lines = path.read_text().splitlines()
    assert lines[0] == "threshold,far,frr"
    assert lines[1] == "0.5,0.25,0.125"
    assert lines[2] == "0.75,0,0.5"
