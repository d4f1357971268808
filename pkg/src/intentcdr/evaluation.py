"""Leave-one-out cold-start ranking evaluation: HR@K and NDCG@K.

Every held-out (user, item) interaction is ranked against negatives drawn
from items the user never touched. Ties break pessimistically: candidates
tied with the positive count as ranked above it, so constant scorers earn
rank |candidates|. Candidate draws are seeded per event from (global seed,
direction, user, item), making evaluation order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridge import BridgeParams
from .data import build_bipartite_graph, make_eval_candidates, positive_sets
from .encoder import EncoderParams, encode_domain
from .scoring import cold_start_score

_DIRECTION_CODE = {"s2t": 0, "t2s": 1}


@dataclass
class EvalResult:
    hr_at_k: float
    ndcg_at_k: float
    k: int
    n_users: int
    per_user_ranks: list

    def to_dict(self):
        return {"hr_at_k": self.hr_at_k, "ndcg_at_k": self.ndcg_at_k,
                "k": self.k, "n_users": self.n_users,
                "per_user_ranks": self.per_user_ranks}


def rank_candidates(scores, positive_index):
    """1-based rank of the positive; tied candidates count as ranked above."""
    scores = np.asarray(scores, dtype=np.float64)
    if not (0 <= positive_index < len(scores)):
        raise IndexError("positive index outside the candidate list")
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite candidate scores")
    return int((scores >= scores[positive_index]).sum())


def ranking_metrics(ranks, k):
    """HR@k and NDCG@k for single-relevant-item rankings.

    With one relevant item, DCG/IDCG collapses to 1/log2(rank + 1) for hits
    inside the cut and 0 otherwise.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranks = list(int(r) for r in ranks)
    if not ranks:
        raise ValueError("empty rank list")
    arr = np.asarray(ranks)
    hits = arr <= k
    hr = float(hits.mean())
    ndcg = float(np.where(hits, 1.0 / np.log2(arr + 1.0), 0.0).mean())
    return EvalResult(hr, ndcg, int(k), len(ranks), ranks)


# ---------------------------------------------------------------------------
# model views

@dataclass
class ModelView:
    emb: dict                       # domain -> {"users": (U,K,Dc), "items": (V,K,Dc)}
    bridges: dict                   # direction -> BridgeParams
    config: object


def model_view(state):
    """Numpy snapshot of the current online encoders and bridges."""
    emb = {}
    for dom in ("s", "t"):
        e = encode_domain(state.graphs[dom], state.pairs[dom].online)
        emb[dom] = {"users": e.users.data, "items": e.items.data}
    return ModelView(emb, dict(state.bridges), state.config)


def view_from_params(flat, prepared, config):
    """Rebuild a ModelView from a flat checkpoint parameter dict."""
    split = prepared.split
    graphs = {
        "s": build_bipartite_graph((prepared.dataset_s.n_users, prepared.dataset_s.n_items),
                                   split.train_s),
        "t": build_bipartite_graph((prepared.dataset_t.n_users, prepared.dataset_t.n_items),
                                   split.train_t),
    }
    emb = {}
    for dom in ("s", "t"):
        p = f"enc.{dom}.online."
        params = EncoderParams(
            user_table=flat[p + "user_table"], item_table=flat[p + "item_table"],
            layer_w1=[flat[f"{p}layer{l}.w1"] for l in range(config.n_layers)],
            layer_w2=[flat[f"{p}layer{l}.w2"] for l in range(config.n_layers)],
            chan_w1=[flat[f"{p}chan{k}.w1"] for k in range(config.n_channels)],
            chan_w2=[flat[f"{p}chan{k}.w2"] for k in range(config.n_channels)],
            leaky_slope=config.leaky_slope)
        e = encode_domain(graphs[dom], params)
        emb[dom] = {"users": e.users.data, "items": e.items.data}
    bridges = {}
    for direction in config.directions():
        p = f"bridge.{direction}."
        n_dec = 1 if config.shared_decoder else config.n_channels
        bridges[direction] = BridgeParams(
            prototypes=flat[p + "prototypes"],
            dec_w1=[flat[f"{p}dec{i}.w1"] for i in range(n_dec)],
            dec_b1=[flat[f"{p}dec{i}.b1"] for i in range(n_dec)],
            dec_w2=[flat[f"{p}dec{i}.w2"] for i in range(n_dec)],
            dec_b2=[flat[f"{p}dec{i}.b2"] for i in range(n_dec)],
            shared=config.shared_decoder)
    return ModelView(emb, bridges, config)


# ---------------------------------------------------------------------------
# evaluation loops

def _events(prepared, direction, users):
    """Yield (target_user, source_user, interacted, held_items) per cold user."""
    split = prepared.split
    hold = split.holdouts[direction]
    pool = hold.test_users if users == "test" else hold.valid_users
    if len(pool) == 0:
        raise ValueError(f"empty cold {users} user set for direction {direction}")
    if direction == "s2t":
        tgt_ds, train = prepared.dataset_t, split.train_t
        to_src = dict(zip(split.overlap_t.tolist(), split.overlap_s.tolist()))
    else:
        tgt_ds, train = prepared.dataset_s, split.train_s
        to_src = dict(zip(split.overlap_s.tolist(), split.overlap_t.tolist()))
    pos = positive_sets(train, tgt_ds.n_users)
    for u in pool:
        u = int(u)
        held = hold.held_out[u]
        interacted = pos[u] | set(held.tolist())
        yield u, to_src[u], interacted, held


def _target_items(prepared, direction):
    ds = prepared.dataset_t if direction == "s2t" else prepared.dataset_s
    return ds.n_items


def evaluate_cold_start(view, prepared, direction, users="test", k=10,
                        negatives=999, seed=0):
    """Rank each held-out target interaction of every cold user."""
    if direction not in view.bridges:
        raise ValueError(f"checkpoint has no bridge for direction {direction}")
    cfg = view.config
    src = "s" if direction == "s2t" else "t"
    tgt = "t" if direction == "s2t" else "s"
    n_items = _target_items(prepared, direction)
    item_emb = view.emb[tgt]["items"]
    code = _DIRECTION_CODE[direction]
    ranks = []
    for u_tgt, u_src, interacted, held in _events(prepared, direction, users):
        scores_all = cold_start_score(view.emb[src]["users"][u_src],
                                      view.bridges[direction], item_emb,
                                      cfg.leaky_slope, cfg.phi, cfg.ablations)
        for v in held:
            rng = np.random.default_rng([seed, code, u_tgt, int(v)])
            cands = make_eval_candidates(n_items, interacted, int(v), negatives, rng)
            ranks.append(rank_candidates(scores_all[cands], 0))
    return ranking_metrics(ranks, k)


def baseline_score(kind, prepared, direction, users="test", k=10,
                   negatives=999, seed=0):
    """Trivial scorers through the same ranking protocol.

    ``random`` draws i.i.d. uniform scores per candidate list; ``popularity``
    scores every item by its training interaction count in the target domain.
    """
    if kind not in ("random", "popularity"):
        raise ValueError(f"unknown baseline kind: {kind}")
    split = prepared.split
    n_items = _target_items(prepared, direction)
    train = split.train_t if direction == "s2t" else split.train_s
    counts = np.bincount(train[:, 1], minlength=n_items).astype(np.float64)
    code = _DIRECTION_CODE[direction]
    ranks = []
    for u_tgt, _, interacted, held in _events(prepared, direction, users):
        for v in held:
            rng = np.random.default_rng([seed, code, u_tgt, int(v)])
            cands = make_eval_candidates(n_items, interacted, int(v), negatives, rng)
            scores = rng.random(len(cands)) if kind == "random" else counts[cands]
            ranks.append(rank_candidates(scores, 0))
    return ranking_metrics(ranks, k)
