"""Batch-level affinity graphs and multi-step random-walk similarity targets.

These matrices are pseudo-labels: they are computed from target-encoder
embeddings (already constant w.r.t. optimization) and therefore live
entirely outside the gradient tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class WalkTargets:
    """Row-stochastic similarity targets, one B x B matrix per intent."""

    matrices: list
    alpha: float
    steps: int
    tau_r: float


def affinity_matrix(batch_embeddings, tau_r):
    """Kernelized pairwise similarity R_ij = exp(-||z_i - z_j|| / tau_r).

    Symmetric with unit diagonal by construction.
    """
    if tau_r <= 0:
        raise ValueError("tau_r must be positive")
    z = np.asarray(batch_embeddings, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite embeddings in affinity batch")
    sq = (z * z).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-np.sqrt(d2) / tau_r)


def walk_targets(R, alpha, d):
    """T = alpha*I + (1-alpha) * row_normalize(R)^d, power by repeated multiply."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    if d < 1:
        raise ValueError("walk step count must be >= 1")
    R = np.asarray(R, dtype=np.float64)
    if (R < 0).any():
        raise ValueError("affinity matrix must be nonnegative")
    row_sums = R.sum(axis=1)
    if (row_sums <= 0).any():
        raise ValueError("affinity matrix has a zero row")
    if alpha == 1.0:
        return np.eye(len(R))
    walk = R / row_sums[:, None]
    power = walk
    for _ in range(d - 1):
        power = power @ walk
    return alpha * np.eye(len(R)) + (1.0 - alpha) * power


def build_walk_targets(channel_embeddings, alpha, d, tau_r):
    """Walk targets for every intent channel of a batch.

    ``channel_embeddings`` is (B, K, D_c); returns one matrix per channel.
    """
    z = np.asarray(channel_embeddings)
    mats = [walk_targets(affinity_matrix(z[:, k, :], tau_r), alpha, d)
            for k in range(z.shape[1])]
    return WalkTargets(mats, float(alpha), int(d), float(tau_r))


def identity_walk_targets(batch_size, n_channels, alpha, d, tau_r):
    """Ablation variant: the walk factor is replaced by the identity."""
    mats = [np.eye(batch_size) for _ in range(n_channels)]
    return WalkTargets(mats, float(alpha), int(d), float(tau_r))


def mean_intent_similarity(targets):
    """Average the per-intent targets into one row-stochastic matrix."""
    mats = targets.matrices if isinstance(targets, WalkTargets) else list(targets)
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"walk-target shapes differ: {shapes}")
    return np.mean(mats, axis=0)
