"""Two-domain interaction ingestion, filtering, splitting and graph building.

All randomized steps are pure functions of (inputs, seed). The model is
implicit-feedback: ratings and timestamps are parsed and carried through
ingestion but never used downstream.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DIRECTIONS = ("s2t", "t2s")


@dataclass
class RawInteractions:
    """Deduplicated (user_id, item_id, rating, timestamp) records."""

    records: list

    def __len__(self):
        return len(self.records)


@dataclass
class BipartiteGraph:
    n_users: int
    n_items: int
    edges: np.ndarray               # (E, 2) int64 (u, v)
    user_degrees: np.ndarray
    item_degrees: np.ndarray
    norm_coefficients: np.ndarray   # per edge, 1/sqrt(deg_u * deg_v)
    adj: object = field(repr=False)     # n_users x n_items, coeff-weighted; csr or dense
    adj_t: object = field(repr=False)


@dataclass
class DomainDataset:
    user_ids: list                  # index -> external id
    item_ids: list
    user_index: dict                # external id -> index
    item_index: dict
    interactions: np.ndarray        # (E, 2) int64

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)


@dataclass
class DirectionHoldout:
    """Cold users for one transfer direction, indexed in its target domain."""

    test_users: np.ndarray
    valid_users: np.ndarray
    held_out: dict                  # target-domain user index -> item index array

    @property
    def cold_users(self):
        return np.concatenate([self.test_users, self.valid_users])


@dataclass
class ColdStartSplit:
    train_s: np.ndarray
    train_t: np.ndarray
    overlap_s: np.ndarray           # aligned source indices of all overlap users
    overlap_t: np.ndarray
    holdouts: dict                  # direction -> DirectionHoldout
    seed: int
    cold_ratio: float

    def train_pairs(self, domain):
        return self.train_s if domain == "s" else self.train_t

    def train_overlap(self):
        """Overlap pairs usable for inter-domain training (no cold users)."""
        cold_s = set(self.holdouts["t2s"].cold_users.tolist())
        cold_t = set(self.holdouts["s2t"].cold_users.tolist())
        keep = [i for i in range(len(self.overlap_s))
                if self.overlap_s[i] not in cold_s and self.overlap_t[i] not in cold_t]
        return self.overlap_s[keep], self.overlap_t[keep]


@dataclass
class PreparedData:
    dataset_s: DomainDataset
    dataset_t: DomainDataset
    split: ColdStartSplit
    meta: dict


# ---------------------------------------------------------------------------
# ingestion and filtering

def load_interactions(path, header=False):
    """Parse a ``user_id,item_id,rating,timestamp`` CSV into records.

    Duplicate (user, item) pairs keep the first occurrence; file order is
    preserved. Raises ValueError on malformed lines (with line number) and
    on empty input.
    """
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if header and lineno == 1:
                continue
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 comma-separated fields, got {len(parts)}")
            user, item, rating, ts = parts
            try:
                rating = float(rating)
                ts = int(ts)
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            key = (user, item)
            if key in seen:
                continue
            seen.add(key)
            records.append((user, item, rating, ts))
    if not records:
        raise ValueError(f"{path}: empty input")
    return RawInteractions(records)


def filter_sparse(raw, min_user, min_item, iterate=False):
    """Drop items with < min_item interactions, then users with < min_user.

    One items-then-users pass by default; ``iterate=True`` repeats the pass
    until a fixpoint (k-core style).
    """
    if min_user < 1 or min_item < 1:
        raise ValueError("filter thresholds must be >= 1")
    records = raw.records
    while True:
        item_counts = {}
        for _, item, _, _ in records:
            item_counts[item] = item_counts.get(item, 0) + 1
        kept = [r for r in records if item_counts[r[1]] >= min_item]
        user_counts = {}
        for user, _, _, _ in kept:
            user_counts[user] = user_counts.get(user, 0) + 1
        new_records = [r for r in kept if user_counts[r[0]] >= min_user]
        if not new_records:
            raise ValueError("dataset empty after filtering")
        if not iterate or len(new_records) == len(records):
            return RawInteractions(new_records)
        records = new_records


def _build_vocab(values):
    index, ids = {}, []
    for v in values:
        if v not in index:
            index[v] = len(ids)
            ids.append(v)
    return ids, index


def build_domain_pair(raw_s, raw_t):
    """Remap both domains to dense indices and link overlapping users.

    Returns (dataset_s, dataset_t, overlap) where overlap maps source user
    index -> target user index. Item vocabularies are per-domain.
    """
    datasets = []
    for raw in (raw_s, raw_t):
        if not raw.records:
            raise ValueError("empty interaction set")
        user_ids, user_index = _build_vocab(r[0] for r in raw.records)
        item_ids, item_index = _build_vocab(r[1] for r in raw.records)
        inter = np.array([(user_index[r[0]], item_index[r[1]]) for r in raw.records],
                         dtype=np.int64)
        datasets.append(DomainDataset(user_ids, item_ids, user_index, item_index, inter))
    ds_s, ds_t = datasets
    overlap = {ds_s.user_index[uid]: ds_t.user_index[uid]
               for uid in ds_s.user_ids if uid in ds_t.user_index}
    if not overlap:
        raise ValueError("no overlapping users between domains; cross-domain training impossible")
    return ds_s, ds_t, overlap


def split_cold_start(pair, cold_ratio, rng_seed):
    """Hold out cold-start users per transfer direction.

    Selects floor(cold_ratio * |overlap|) overlap users at random, assigns
    half to each direction, and splits each direction's cohort evenly into
    test and validation. A cold user's interactions in the direction's
    target domain are moved out of training.
    """
    ds_s, ds_t, overlap = pair
    if not (0.0 < cold_ratio < 1.0):
        raise ValueError("cold_ratio must be in (0, 1)")
    if len(overlap) < 2:
        raise ValueError("need at least 2 overlapping users to split")
    overlap_s = np.array(sorted(overlap.keys()), dtype=np.int64)
    overlap_t = np.array([overlap[u] for u in overlap_s], dtype=np.int64)

    n_cold = int(np.floor(cold_ratio * len(overlap_s)))
    if n_cold == 0:
        raise ValueError("cold_ratio selects zero users")
    if n_cold >= len(overlap_s):
        raise ValueError("cold split would empty the overlap training set")
    rng = np.random.default_rng(rng_seed)
    order = rng.permutation(len(overlap_s))
    chosen = order[:n_cold]
    half = (n_cold + 1) // 2
    cohorts = {"s2t": chosen[:half], "t2s": chosen[half:]}

    holdouts = {}
    trains = {"s": ds_s.interactions, "t": ds_t.interactions}
    for direction, rows in cohorts.items():
        target = "t" if direction == "s2t" else "s"
        target_idx = overlap_t if direction == "s2t" else overlap_s
        users = np.sort(target_idx[rows])
        m = len(users)
        test_users, valid_users = users[:(m + 1) // 2], users[(m + 1) // 2:]
        inter = trains[target]
        mask = np.isin(inter[:, 0], users)
        held = {}
        for u, v in inter[mask]:
            held.setdefault(int(u), []).append(int(v))
        held = {u: np.array(vs, dtype=np.int64) for u, vs in held.items()}
        trains[target] = inter[~mask]
        holdouts[direction] = DirectionHoldout(test_users, valid_users, held)

    split = ColdStartSplit(trains["s"], trains["t"], overlap_s, overlap_t,
                           holdouts, int(rng_seed), float(cold_ratio))
    if len(split.train_overlap()[0]) == 0:
        raise ValueError("cold split would empty the overlap training set")
    return split


# ---------------------------------------------------------------------------
# graphs

def build_bipartite_graph(dataset, interactions=None):
    """Build the degree-normalized bipartite graph of a domain.

    ``interactions`` overrides the dataset's full edge list (used to build
    the post-split training graph). Each edge carries 1/sqrt(deg_u*deg_v).
    """
    if isinstance(dataset, DomainDataset):
        n_users, n_items = dataset.n_users, dataset.n_items
        edges = dataset.interactions if interactions is None else interactions
    else:
        n_users, n_items = dataset
        edges = interactions
    if len(edges) == 0:
        raise ValueError("cannot build graph from empty interaction set")
    edges = np.asarray(edges, dtype=np.int64)
    user_deg = np.bincount(edges[:, 0], minlength=n_users)
    item_deg = np.bincount(edges[:, 1], minlength=n_items)
    coeff = 1.0 / np.sqrt(user_deg[edges[:, 0]] * item_deg[edges[:, 1]].astype(np.float64))
    fill = len(edges) / max(1, n_users * n_items)
    if fill >= 0.05:
        # dense multithreaded GEMM beats the sparse kernel at this fill level
        adj = np.zeros((n_users, n_items))
        adj[edges[:, 0], edges[:, 1]] = coeff
        adj_t = adj.T
    else:
        adj = sp.csr_matrix((coeff, (edges[:, 0], edges[:, 1])), shape=(n_users, n_items))
        adj_t = adj.T.tocsr()
    return BipartiteGraph(n_users, n_items, edges, user_deg, item_deg, coeff,
                          adj, adj_t)


def positive_sets(edges, n_users):
    """Per-user sets of interacted item indices."""
    sets = [set() for _ in range(n_users)]
    for u, v in edges:
        sets[u].add(int(v))
    return sets


# ---------------------------------------------------------------------------
# sampling

def sample_negatives_for(edges, pos_sets, n_items, count_per_positive, rng):
    """Sample ``count_per_positive`` unobserved items per (u, v) edge.

    Uniform over the item vocabulary with rejection-resampling on collision
    with the user's training interactions.
    """
    if count_per_positive < 1:
        raise ValueError("count_per_positive must be >= 1")
    users = np.repeat(np.asarray(edges)[:, 0], count_per_positive)
    for u in np.unique(users):
        if len(pos_sets[u]) >= n_items:
            raise ValueError(f"user {u} interacted with every item; cannot sample negatives")
    items = rng.integers(0, n_items, size=len(users))
    bad = np.array([items[i] in pos_sets[users[i]] for i in range(len(users))])
    while bad.any():
        items[bad] = rng.integers(0, n_items, size=int(bad.sum()))
        idx = np.flatnonzero(bad)
        bad[idx] = [items[i] in pos_sets[users[i]] for i in idx]
    return np.stack([users, items], axis=1)


def sample_negatives(split, datasets, domain, count_per_positive, rng):
    """Negatives for every training positive of one domain."""
    ds = datasets[0] if domain == "s" else datasets[1]
    edges = split.train_pairs(domain)
    return sample_negatives_for(edges, positive_sets(edges, ds.n_users),
                                ds.n_items, count_per_positive, rng)


def make_eval_candidates(n_items, interacted, ground_truth_item, negative_count, rng):
    """One positive plus ``negative_count`` never-interacted negatives.

    Negatives are drawn without replacement from items outside the user's
    full interaction set (training and held-out alike). The positive sits at
    index 0 of the returned array.
    """
    interacted = np.asarray(sorted(interacted), dtype=np.int64)
    eligible = np.setdiff1d(np.arange(n_items, dtype=np.int64), interacted,
                            assume_unique=True)
    if negative_count > len(eligible):
        raise ValueError(f"need {negative_count} eligible negatives, only {len(eligible)} available")
    if negative_count == 0:
        return np.array([ground_truth_item], dtype=np.int64)
    negs = rng.choice(eligible, size=negative_count, replace=False)
    return np.concatenate([[ground_truth_item], negs]).astype(np.int64)


# ---------------------------------------------------------------------------
# prepared dataset directory

def _write_tsv(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def save_prepared(out_dir, dataset_s, dataset_t, split, meta):
    """Write the prepared-dataset directory layout.

    Cold user files list users by their index in the direction's target
    domain, with the comma-joined held-out item indices of that domain.
    """
    os.makedirs(out_dir, exist_ok=True)
    for tag, ds in (("s", dataset_s), ("t", dataset_t)):
        _write_tsv(os.path.join(out_dir, f"users_{tag}.tsv"),
                   ((uid, i) for i, uid in enumerate(ds.user_ids)))
        _write_tsv(os.path.join(out_dir, f"items_{tag}.tsv"),
                   ((iid, i) for i, iid in enumerate(ds.item_ids)))
        _write_tsv(os.path.join(out_dir, f"train_{tag}.tsv"),
                   split.train_pairs(tag))
    _write_tsv(os.path.join(out_dir, "overlap.tsv"),
               zip(split.overlap_s, split.overlap_t))
    for direction in DIRECTIONS:
        hold = split.holdouts[direction]
        for kind, users in (("test", hold.test_users), ("valid", hold.valid_users)):
            _write_tsv(os.path.join(out_dir, f"cold_{kind}_{direction}.tsv"),
                       ((u, ",".join(str(v) for v in hold.held_out[int(u)])) for u in users))
    meta = dict(meta)
    meta.update({
        "n_users_s": dataset_s.n_users, "n_items_s": dataset_s.n_items,
        "n_users_t": dataset_t.n_users, "n_items_t": dataset_t.n_items,
        "n_train_s": int(len(split.train_s)), "n_train_t": int(len(split.train_t)),
        "n_overlap": int(len(split.overlap_s)),
        "seed": split.seed, "cold_ratio": split.cold_ratio,
    })
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_tsv(path):
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n").split("\t") for line in fh if line.strip()]


def load_prepared(in_dir):
    """Load a prepared-dataset directory back into memory."""
    datasets = []
    for tag in ("s", "t"):
        users = _read_tsv(os.path.join(in_dir, f"users_{tag}.tsv"))
        items = _read_tsv(os.path.join(in_dir, f"items_{tag}.tsv"))
        user_ids = [u for u, _ in sorted(users, key=lambda r: int(r[1]))]
        item_ids = [i for i, _ in sorted(items, key=lambda r: int(r[1]))]
        train = np.array([(int(u), int(v)) for u, v in
                          _read_tsv(os.path.join(in_dir, f"train_{tag}.tsv"))],
                         dtype=np.int64).reshape(-1, 2)
        datasets.append((user_ids, item_ids, train))
    overlap_rows = _read_tsv(os.path.join(in_dir, "overlap.tsv"))
    overlap_s = np.array([int(r[0]) for r in overlap_rows], dtype=np.int64)
    overlap_t = np.array([int(r[1]) for r in overlap_rows], dtype=np.int64)
    holdouts = {}
    for direction in DIRECTIONS:
        cohorts = {}
        for kind in ("test", "valid"):
            rows = _read_tsv(os.path.join(in_dir, f"cold_{kind}_{direction}.tsv"))
            cohorts[kind] = {int(u): np.array([int(v) for v in vs.split(",")], dtype=np.int64)
                             for u, vs in rows}
        held = {}
        held.update(cohorts["test"])
        held.update(cohorts["valid"])
        holdouts[direction] = DirectionHoldout(
            np.array(sorted(cohorts["test"]), dtype=np.int64),
            np.array(sorted(cohorts["valid"]), dtype=np.int64),
            held)
    with open(os.path.join(in_dir, "meta.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)

    def as_dataset(user_ids, item_ids):
        return DomainDataset(user_ids, item_ids,
                             {u: i for i, u in enumerate(user_ids)},
                             {v: i for i, v in enumerate(item_ids)},
                             None)

    ds_s = as_dataset(datasets[0][0], datasets[0][1])
    ds_t = as_dataset(datasets[1][0], datasets[1][1])
    split = ColdStartSplit(datasets[0][2], datasets[1][2], overlap_s, overlap_t,
                           holdouts, int(meta["seed"]), float(meta["cold_ratio"]))
    return PreparedData(ds_s, ds_t, split, meta)
