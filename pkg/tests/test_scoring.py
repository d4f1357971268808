"""Intent-weighted scores, logistic squashing, BCE loss, cold-start path."""

import numpy as np
import pytest

from intentcdr import autodiff as ad
from intentcdr.bridge import decode, init_bridge_params, intent_prior
from intentcdr.scoring import (cold_start_score, decode_channels_np,
                               intent_weights_np, probability, rec_loss,
                               rec_loss_from_scores, score, score_batch)

RNG = np.random.default_rng(14)


def test_score_symmetric_cancellation():
    u = np.array([[1.0, 1.0], [1.0, 1.0]])
    v = np.array([[1.0, 1.0], [-1.0, -1.0]])
    assert score(u, v, [0.5, 0.5]) == 0.0


def test_score_single_channel_dot():
    assert score([[1.0, 1.0]], [[1.0, 1.0]], [1.0]) == 2.0


def test_score_one_hot_weights_select_channel():
    u = RNG.standard_normal((3, 4))
    v = RNG.standard_normal((3, 4))
    for k in range(3):
        w = np.eye(3)[k]
        assert abs(score(u, v, w) - float(u[k] @ v[k])) < 1e-12


def test_score_bilinear():
    u1, u2 = RNG.standard_normal((2, 3)), RNG.standard_normal((2, 3))
    v = RNG.standard_normal((2, 3))
    w = np.array([0.3, 0.7])
    a, b = 1.7, -0.4
    lhs = score(a * u1 + b * u2, v, w)
    rhs = a * score(u1, v, w) + b * score(u2, v, w)
    assert abs(lhs - rhs) < 1e-10


def test_score_batch_matches_scalar():
    zu = RNG.standard_normal((5, 2, 3))
    zv = RNG.standard_normal((5, 2, 3))
    w = np.abs(RNG.standard_normal((5, 2)))
    w /= w.sum(axis=1, keepdims=True)
    out = score_batch(ad.Tensor(zu), ad.Tensor(zv), ad.Tensor(w)).data
    for i in range(5):
        assert abs(out[i] - score(zu[i], zv[i], w[i])) < 1e-12


def test_probability_midpoint_and_closed_form():
    assert probability(0.0) == 0.5
    assert abs(probability(np.log(3.0)) - 0.75) < 1e-12


def test_probability_monotone_and_saturating():
    grid = np.linspace(-30, 30, 301)
    p = probability(grid)
    assert (np.diff(p) >= 0).all()
    assert p[0] > 0 and p[-1] < 1 and p[-1] > 0.999999


def test_ranking_preserved_by_probability():
    r = RNG.standard_normal(100)
    assert np.array_equal(np.argsort(r), np.argsort(probability(r)))


def test_rec_loss_symmetric_midpoint():
    loss = rec_loss(ad.Tensor(np.array([0.5])), ad.Tensor(np.array([0.5]))).item()
    assert abs(loss - 2 * np.log(2)) < 1e-12


def test_rec_loss_perfect_separation_limit():
    eps = 1e-9
    loss = rec_loss(ad.Tensor(np.array([1 - eps])), ad.Tensor(np.array([eps]))).item()
    assert loss < 1e-8


def test_rec_loss_hand_value():
    loss = rec_loss(ad.Tensor(np.array([0.9])), ad.Tensor(np.array([0.2]))).item()
    assert abs(loss - (-np.log(0.9) - np.log(0.8))) < 1e-12
    assert abs(loss - 0.3285) < 5e-5


def test_rec_loss_empty_positive_errors():
    with pytest.raises(ValueError):
        rec_loss(ad.Tensor(np.zeros(0)), ad.Tensor(np.array([0.5])))


def test_rec_loss_gradient_finite_difference():
    pos = RNG.standard_normal(4)
    neg = RNG.standard_normal(6)
    t_pos = ad.Tensor(pos, requires_grad=True)
    t_neg = ad.Tensor(neg, requires_grad=True)
    rec_loss_from_scores(t_pos, t_neg).backward()
    h = 1e-6
    for arr, t in ((pos, t_pos), (neg, t_neg)):
        for i in range(arr.size):
            orig = arr[i]
            arr[i] = orig + h
            hi = rec_loss_from_scores(ad.Tensor(pos), ad.Tensor(neg)).item()
            arr[i] = orig - h
            lo = rec_loss_from_scores(ad.Tensor(pos), ad.Tensor(neg)).item()
            arr[i] = orig
            num = (hi - lo) / (2 * h)
            assert abs(num - t.grad[i]) <= 1e-7 + 1e-4 * abs(num)


# ---------------------------------------------------------------------------
# cold-start scoring path

def test_cold_start_numpy_matches_autodiff_composition():
    k, dc, v = 2, 3, 7
    rng = np.random.default_rng(4)
    bridge = init_bridge_params(k, dc, dc, rng)
    user = rng.standard_normal((k, dc))
    items = rng.standard_normal((v, k, dc))
    scores = cold_start_score(user, bridge, items, 0.05)
    # autodiff twin
    tensors = bridge.as_tensors()
    e = decode(ad.Tensor(user[None]), bridge, tensors, 0.05)
    w = intent_prior(e, tensors["prototypes"])
    for j in range(v):
        r = float((w.data[0] * (e.data[0] * items[j]).sum(axis=1)).sum())
        assert abs(scores[j] - r) < 1e-12


def test_cold_start_decoder_ablation_uses_raw_channels():
    k, dc, v = 2, 3, 5
    rng = np.random.default_rng(5)
    bridge = init_bridge_params(k, dc, dc, rng)
    user = rng.standard_normal((k, dc))
    items = rng.standard_normal((v, k, dc))
    raw = cold_start_score(user, bridge, items, 0.05, ablations=("decoder",))
    w = intent_weights_np(user, bridge.prototypes)
    expect = np.einsum("kd,vkd->vk", user, items) @ w
    np.testing.assert_allclose(raw, expect, atol=1e-12)


def test_cold_start_uniform_prior_ablation():
    k, dc, v = 3, 2, 4
    rng = np.random.default_rng(6)
    bridge = init_bridge_params(k, dc, dc, rng)
    user = rng.standard_normal((k, dc))
    items = rng.standard_normal((v, k, dc))
    out = cold_start_score(user, bridge, items, 0.05, ablations=("uniform-prior",))
    e = decode_channels_np(user, bridge, 0.05)
    expect = np.einsum("kd,vkd->vk", e, items) @ np.full(k, 1 / 3)
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_cold_start_zero_items_score_zero():
    bridge = init_bridge_params(2, 3, 3, np.random.default_rng(7))
    user = RNG.standard_normal((2, 3))
    items = np.zeros((6, 2, 3))
    np.testing.assert_allclose(cold_start_score(user, bridge, items, 0.05), 0.0)


def test_cold_start_missing_bridge_errors():
    with pytest.raises(ValueError, match="bridge"):
        cold_start_score(RNG.standard_normal((2, 3)), None,
                         np.zeros((1, 2, 3)), 0.05)
