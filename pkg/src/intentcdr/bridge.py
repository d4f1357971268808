"""Cross-domain decoder, intent prototypes and the variational-EM inter loss.

For an overlap batch, decoded source channels are matched against target-
domain target-encoder channels. The latent-intent posterior q is inferred
in closed form (E-step) and enters the evidence lower bound as a constant;
gradients reach the decoder, the prototypes and the online encoder through
the prior and the batch similarity term (M-step).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .intra import LOG_CLAMP, similarity_matrix

DECODER_PARTS = ("w1", "b1", "w2", "b2")


@dataclass
class BridgeParams:
    """One transfer direction: per-channel decoder MLP plus K prototypes."""

    prototypes: np.ndarray          # (K, D_c)
    dec_w1: list                    # (D_c, H) per channel (length 1 if shared)
    dec_b1: list
    dec_w2: list                    # (H, D_c)
    dec_b2: list
    shared: bool = False

    @property
    def n_channels(self):
        return len(self.prototypes)

    def decoder_index(self, k):
        return 0 if self.shared else k

    def named(self):
        yield "prototypes", self.prototypes
        for i in range(len(self.dec_w1)):
            yield f"dec{i}.w1", self.dec_w1[i]
            yield f"dec{i}.b1", self.dec_b1[i]
            yield f"dec{i}.w2", self.dec_w2[i]
            yield f"dec{i}.b2", self.dec_b2[i]

    def as_tensors(self, requires_grad=False):
        return {name: ad.Tensor(arr, requires_grad=requires_grad)
                for name, arr in self.named()}


def init_bridge_params(n_channels, channel_dim, hidden, rng, shared=False):
    from .encoder import xavier_uniform
    n_dec = 1 if shared else n_channels
    return BridgeParams(
        prototypes=xavier_uniform(rng, (n_channels, channel_dim)),
        dec_w1=[xavier_uniform(rng, (channel_dim, hidden)) for _ in range(n_dec)],
        dec_b1=[np.zeros(hidden) for _ in range(n_dec)],
        dec_w2=[xavier_uniform(rng, (hidden, channel_dim)) for _ in range(n_dec)],
        dec_b2=[np.zeros(channel_dim) for _ in range(n_dec)],
        shared=shared,
    )


def decode(z_source, bridge, tensors, slope, ablate_decoder=False):
    """Map source channels into the target space, channel by channel."""
    if ablate_decoder:
        return z_source
    outs = []
    for k in range(z_source.shape[1]):
        i = bridge.decoder_index(k)
        zk = ad.take_index(z_source, k, axis=1)
        h = ad.leaky_relu(ad.matmul(zk, tensors[f"dec{i}.w1"]) + tensors[f"dec{i}.b1"], slope)
        outs.append(ad.matmul(h, tensors[f"dec{i}.w2"]) + tensors[f"dec{i}.b2"])
    return ad.stack(outs, axis=1)


def intent_prior(e, prototypes, phi="cosine", uniform=False):
    """p(k | u_i) = softmax_k phi(e_{i,k}, c_k); no temperature."""
    b, k, _ = e.shape
    if uniform:
        return ad.Tensor(np.full((b, k), 1.0 / k))
    if phi == "cosine":
        from .intra import _check_norms
        _check_norms(e, "decoded channel")
        _check_norms(prototypes, "prototype")
        e = ad.l2_normalize(e, axis=2)
        prototypes = ad.l2_normalize(prototypes, axis=1)
    scores = ad.tsum(e * prototypes, axis=2)        # (B, K)
    return ad.softmax(scores, axis=1)


def batch_intent_similarity(e, z_target, phi="cosine"):
    """p_hat(u_j | u_i, k) within the batch, per intent; shape (B, B, K)."""
    if e.shape[0] == 1:
        warnings.warn("overlap batch of size 1: batch similarity degenerates to 1.0")
    mats = []
    for k in range(e.shape[1]):
        sims = similarity_matrix(ad.take_index(e, k, axis=1),
                                 ad.take_index(z_target, k, axis=1), phi)
        mats.append(ad.softmax(sims, axis=1))
    return ad.stack(mats, axis=2)


def variational_posterior(prior, phat):
    """Closed-form E-step: q(k | i, j) = prior(i,k) phat(i,j,k) / sum_k.

    Inputs and output are plain arrays: q is a constant during gradient
    computation.
    """
    prior = np.asarray(prior, dtype=np.float64)
    phat = np.asarray(phat, dtype=np.float64)
    w = prior[:, None, :] * phat
    denom = w.sum(axis=2, keepdims=True)
    assert (denom > 0).all(), "variational posterior denominator vanished"
    return w / denom


def elbo(q, prior, phat):
    """ELBO(i, j) = E_q[log phat] - KL(q || prior), logs clamped at 1e-12."""
    q = np.asarray(q, dtype=np.float64)
    log_phat = ad.log(ad.clip(phat, LOG_CLAMP, None))
    b, k = prior.shape
    log_prior = ad.reshape(ad.log(ad.clip(prior, LOG_CLAMP, None)), (b, 1, k))
    log_q = np.log(np.clip(q, LOG_CLAMP, None))
    return ad.tsum(q * (log_phat + (log_prior - log_q)), axis=2)


def inter_loss(t_mean, elbo_matrix):
    """- sum_ij T^t_ij * ELBO(i, j) over the overlap batch."""
    t_mean = np.asarray(t_mean, dtype=np.float64)
    if t_mean.shape != elbo_matrix.shape:
        raise ValueError("walk-target and ELBO shapes differ")
    return -ad.tsum(t_mean * elbo_matrix)
