"""Intra-domain contrastive loss against walk targets, plus channel orthogonality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .walks import WalkTargets

LOG_CLAMP = 1e-12


@dataclass
class SimilarityConfig:
    tau: float = 0.5
    phi: str = "cosine"             # "cosine" or "dot"

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("softmax temperature must be positive")
        if self.phi not in ("cosine", "dot"):
            raise ValueError(f"unknown similarity function: {self.phi}")


def _check_norms(t, what):
    norms = np.linalg.norm(t.data, axis=-1)
    if (norms == 0).any():
        row = int(np.argwhere(norms == 0)[0][0])
        raise ValueError(f"zero-norm {what} at row {row}; cosine similarity undefined")


def similarity_matrix(a, b, phi):
    """Pairwise phi(a_i, b_j) for row batches; cosine or raw dot product."""
    if phi == "cosine":
        _check_norms(a, "embedding")
        _check_norms(b, "embedding")
        a = ad.l2_normalize(a, axis=-1)
        b = ad.l2_normalize(b, axis=-1)
    return ad.matmul(a, ad.transpose(b))


def pairwise_softmax(z_k, z_hat_k, cfg):
    """Row-normalized similarity rho between online and target batch rows."""
    if z_k.shape != z_hat_k.shape:
        raise ValueError("online/target batch shapes differ")
    sims = similarity_matrix(z_k, z_hat_k, cfg.phi)
    return ad.softmax(sims / cfg.tau, axis=1)


def intra_loss(targets, rhos):
    """Sum over batch rows and intents of cross-entropy H(T_k, rho_k)."""
    mats = targets.matrices if isinstance(targets, WalkTargets) else list(targets)
    if len(mats) != len(rhos):
        raise ValueError("need one rho per walk-target matrix")
    total = None
    for t_k, rho_k in zip(mats, rhos):
        if t_k.shape != rho_k.shape:
            raise ValueError("walk target and rho shapes differ")
        row_sums = rho_k.data.sum(axis=1)
        assert np.allclose(row_sums, 1.0, atol=1e-9), "rho rows must be normalized"
        term = -ad.tsum(t_k * ad.log(ad.clip(rho_k, LOG_CLAMP, None)))
        total = term if total is None else total + term
    return total


def orthogonality_loss(z, z_hat, form="cross"):
    """Penalty pushing a user's K intent channels toward orthogonality.

    ``cross`` (default): per user, the K x K Gram matrix of its l2-normalized
    channel vectors should be the identity; the loss is the batch mean of
    ||G - I||_1, evaluated for the online and the target embeddings and
    summed. ``literal`` instead decorrelates features within each channel
    via the batch-scaled feature Gram (ablation flag).
    """
    total = None
    for t in (z, z_hat):
        if form == "cross":
            _check_norms(t, "channel vector")
            v = ad.l2_normalize(t, axis=2)
            gram = ad.matmul(v, ad.transpose(v, (0, 2, 1)))
            eye = np.eye(t.shape[1])
            term = ad.tsum(ad.absolute(gram - eye)) / float(t.shape[0])
        elif form == "literal":
            b, k, dc = t.shape
            eye = np.eye(dc)
            term = None
            for ch in range(k):
                zc = ad.take_index(t, ch, axis=1)
                gram = ad.matmul(ad.transpose(zc), zc) / float(b)
                piece = ad.tsum(ad.absolute(gram - eye))
                term = piece if term is None else term + piece
        else:
            raise ValueError(f"unknown orthogonality form: {form}")
        total = term if total is None else total + term
    return total
