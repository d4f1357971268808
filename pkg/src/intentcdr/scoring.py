"""Intent-weighted preference scoring and the BCE recommendation loss.

The matching probability is the standard increasing logistic of the score;
ranking by score and ranking by probability coincide.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

PROB_CLAMP = 1e-12


def score(user_channels, item_channels, intent_weights):
    """r = sum_k p(k|u) * <z_{u,k}, z_{v,k}> for one user/item pair."""
    user_channels = np.asarray(user_channels, dtype=np.float64)
    item_channels = np.asarray(item_channels, dtype=np.float64)
    w = np.asarray(intent_weights, dtype=np.float64)
    if user_channels.shape != item_channels.shape or len(w) != user_channels.shape[0]:
        raise ValueError("channel shapes do not match")
    return float(w @ (user_channels * item_channels).sum(axis=1))


def score_batch(z_users, z_items, intent_weights):
    """Batched scores: (B,K,Dc) x (B,K,Dc) with (B,K) weights -> (B,)."""
    dots = ad.tsum(z_users * z_items, axis=2)
    return ad.tsum(intent_weights * dots, axis=1)


def probability(r):
    """Logistic squashing of a score into (0, 1); increasing in r."""
    r = np.asarray(r, dtype=np.float64)
    out = np.where(r >= 0, 1.0 / (1.0 + np.exp(-np.abs(r))),
                   np.exp(-np.abs(r)) / (1.0 + np.exp(-np.abs(r))))
    return float(out) if out.ndim == 0 else out


def rec_loss(pos_probs, neg_probs):
    """BCE with sampled negatives: -sum log y_pos - sum log(1 - y_neg)."""
    if pos_probs.shape[0] == 0:
        raise ValueError("recommendation loss needs at least one positive")
    pos = ad.clip(ad.as_tensor(pos_probs), PROB_CLAMP, 1.0 - PROB_CLAMP)
    neg = ad.clip(ad.as_tensor(neg_probs), PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -ad.tsum(ad.log(pos))
    if neg.shape[0]:
        loss = loss - ad.tsum(ad.log(1.0 - neg))
    return loss


def rec_loss_from_scores(pos_scores, neg_scores):
    """Convenience composition used by the trainer."""
    return rec_loss(ad.sigmoid(pos_scores), ad.sigmoid(neg_scores))


# ---------------------------------------------------------------------------
# numpy fast path used by evaluation (no gradients)

def decode_channels_np(user_channels, bridge, slope):
    """Numpy twin of bridge.decode for a single user's (K, D_c) block."""
    outs = []
    for k in range(len(user_channels)):
        i = bridge.decoder_index(k)
        h = user_channels[k] @ bridge.dec_w1[i] + bridge.dec_b1[i]
        h = np.where(h > 0, h, slope * h)
        outs.append(h @ bridge.dec_w2[i] + bridge.dec_b2[i])
    return np.stack(outs)


def intent_weights_np(channels, prototypes, phi="cosine", uniform=False):
    """Numpy twin of bridge.intent_prior for a single (K, D_c) block."""
    k = len(prototypes)
    if uniform:
        return np.full(k, 1.0 / k)
    a, b = np.asarray(channels, dtype=np.float64), prototypes
    if phi == "cosine":
        a = a / np.linalg.norm(a, axis=1, keepdims=True)
        b = b / np.linalg.norm(b, axis=1, keepdims=True)
    logits = (a * b).sum(axis=1)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def cold_start_score(user_source_channels, bridge, item_target_channels,
                     slope, phi="cosine", ablations=()):
    """Scores of target items for a cold user, from decoded source channels.

    ``item_target_channels`` is (V, K, D_c); returns (V,) scores. The
    ``decoder`` ablation scores from raw source channels, ``uniform-prior``
    forces equal intent weights.
    """
    if bridge is None:
        raise ValueError("no bridge trained for the requested direction")
    e = (np.asarray(user_source_channels, dtype=np.float64)
         if "decoder" in ablations
         else decode_channels_np(user_source_channels, bridge, slope))
    w = intent_weights_np(e, bridge.prototypes, phi, uniform="uniform-prior" in ablations)
    dots = np.einsum("kd,vkd->vk", e, item_target_channels)
    return dots @ w
