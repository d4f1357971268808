"""Planted-intent synthetic data for desk-scale verification.

Every user overlaps both domains. A user draws a sharp intent mixture per
domain, the target-domain mixture being a convex blend of the source one
and a fresh draw (the ``consistency`` knob: 1 copies the source mixture,
0 draws an unrelated one, operationalizing cross-domain preference drift).
Items carry one dominant intent and interactions are sampled without
replacement proportionally to the user's mixture weight of each item's
intent. Per-user interaction counts are drawn from a clipped lognormal so
that a realistic heavy tail of highly active users exists.
"""

from __future__ import annotations

import numpy as np

from .data import RawInteractions


def intent_mixture(rng, k_true, sharpness_low=0.93, sharpness_high=0.99):
    if k_true == 1:
        return np.array([1.0])
    w = np.full(k_true, 0.0)
    dom = rng.integers(k_true)
    p = rng.uniform(sharpness_low, sharpness_high)
    w[:] = (1.0 - p) / (k_true - 1)
    w[dom] = p
    return w


def generate_synthetic(n_users, n_items_per_domain, k_true, consistency, density,
                       seed, degree_sigma=0.9, min_degree=24, max_degree=300,
                       filter_check=(5, 10)):
    """Generate a linked pair of raw interaction logs.

    ``density`` is the median interactions per user per domain. Raises if
    the realized degrees would not survive the standard sparsity filter
    (``filter_check=None`` disables the check for deliberately tiny logs).
    """
    if k_true < 1:
        raise ValueError("k_true must be >= 1")
    if not (0.0 <= consistency <= 1.0):
        raise ValueError("consistency must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    item_intent = np.arange(n_items_per_domain) % k_true

    mixtures = {}
    mixtures["s"] = np.stack([intent_mixture(rng, k_true) for _ in range(n_users)])
    fresh = np.stack([intent_mixture(rng, k_true) for _ in range(n_users)])
    blended = consistency * mixtures["s"] + (1.0 - consistency) * fresh
    mixtures["t"] = blended / blended.sum(axis=1, keepdims=True)

    # a user must never exhaust the vocabulary: negative sampling and
    # leave-one-out candidates need spare items
    cap = max(1, min(max_degree, int(0.75 * n_items_per_domain)))
    lo = min(min_degree, cap)
    raws = {}
    ts = 1_400_000_000
    for tag in ("s", "t"):
        degrees = np.clip(np.rint(density * rng.lognormal(0.0, degree_sigma, n_users)),
                          lo, cap).astype(np.int64)
        records = []
        for u in range(n_users):
            weights = mixtures[tag][u][item_intent]
            weights = weights / weights.sum()
            items = rng.choice(n_items_per_domain, size=int(degrees[u]),
                               replace=False, p=weights)
            rating = rng.integers(1, 6, size=len(items))
            for j, v in enumerate(items):
                records.append((f"u{u:05d}", f"{tag}item{v:05d}", float(rating[j]), ts))
                ts += 1
        raws[tag] = RawInteractions(records)

    if filter_check is not None:
        min_user, min_item = filter_check
        for tag in ("s", "t"):
            users, items = {}, {}
            for rec in raws[tag].records:
                users[rec[0]] = users.get(rec[0], 0) + 1
                items[rec[1]] = items.get(rec[1], 0) + 1
            if min(users.values()) < min_user or min(items.values()) < min_item:
                raise ValueError(
                    "synthetic log would not survive the sparsity filter; increase density")
    return raws["s"], raws["t"]
