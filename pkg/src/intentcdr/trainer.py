"""Training loop: total objective assembly, optimizer, EMA cadence, ablations.

One step encodes both domains with both encoders, builds the walk targets
from the target-encoder outputs, assembles rec/intra/orth/inter components,
combines them as

    L_contra = beta * L_inter + (1 - beta) * (L_intra + gamma * L_orth)
    L_total  = lam * L_contra + (1 - lam) * (L_rec_S + L_rec_T)

and applies Adam to the online parameters followed by the EMA update of the
target encoders. Every randomized ingredient draws from a named, seeded
stream so that runs, and resumed runs, are bit-reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bridge import (BridgeParams, batch_intent_similarity, decode, elbo,
                     init_bridge_params, intent_prior, inter_loss,
                     variational_posterior)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig
from .data import build_bipartite_graph, positive_sets, sample_negatives_for
from .encoder import encode_domain, init_encoder_params
from .intra import SimilarityConfig, intra_loss, orthogonality_loss, pairwise_softmax
from .siamese import SiamesePair, ema_update, target_encode
from .walks import build_walk_targets, identity_walk_targets, mean_intent_similarity

DOMAINS = ("s", "t")
RNG_NAMES = ("init", "shuffle", "negatives", "overlap", "dropout")


class Adam:
    """Standard Adam with bias correction; state is checkpointable."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, arr in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(arr))
            v = self.v.setdefault(name, np.zeros_like(arr))
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            arr[...] = arr - lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class StepBatch:
    pos: dict                       # domain -> (B, 2) positive edges
    neg: dict                       # domain -> (B * npp, 2) sampled negatives
    users: dict                     # domain -> unique batch user indices
    overlap: tuple                  # aligned (source idx, target idx) arrays


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_hr: float = 0.0

    def to_dict(self):
        return {"epochs": self.epochs, "best_epoch": self.best_epoch,
                "best_val_hr": self.best_val_hr}


@dataclass
class TrainState:
    config: TrainConfig
    prepared: object
    graphs: dict
    pairs: dict                     # domain -> SiamesePair
    bridges: dict                   # direction -> BridgeParams
    adam: Adam
    rngs: dict
    epoch: int = 0
    history: list = field(default_factory=list)
    best: dict | None = None        # {"epoch", "val_hr", "params"}
    pos_sets: dict | None = None
    overlap_train: tuple | None = None


def proto_direction(config, domain):
    """Which bridge's prototypes score within-domain preferences.

    A domain uses the prototypes of the direction that decodes *into* it
    (they live in that domain's embedding space); with a single trained
    direction, that direction's prototypes serve both domains.
    """
    into = "s2t" if domain == "t" else "t2s"
    return into if into in config.directions() else config.directions()[0]


def effective_gamma(config):
    return 0.0 if "no-orth" in config.ablations else config.gamma


def total_loss(components, beta, gamma, lam):
    """Recombine the five logged components into the training objective."""
    contra = beta * components["inter"] + (1.0 - beta) * (components["intra"] + gamma * components["orth"])
    rec = components["rec_s"] + components["rec_t"]
    return lam * contra + (1.0 - lam) * rec


# ---------------------------------------------------------------------------
# state construction

def init_state(prepared, config):
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(len(RNG_NAMES))
    rngs = {name: np.random.default_rng(child) for name, child in zip(RNG_NAMES, children)}
    split = prepared.split
    graphs = {
        "s": build_bipartite_graph((prepared.dataset_s.n_users, prepared.dataset_s.n_items), split.train_s),
        "t": build_bipartite_graph((prepared.dataset_t.n_users, prepared.dataset_t.n_items), split.train_t),
    }
    pairs = {}
    for dom in DOMAINS:
        ds = prepared.dataset_s if dom == "s" else prepared.dataset_t
        online = init_encoder_params(ds.n_users, ds.n_items, config.dim,
                                     config.n_channels, config.n_layers,
                                     config.leaky_slope, rngs["init"])
        pairs[dom] = SiamesePair.create(online, config.ema_momentum)
    bridges = {}
    for direction in config.directions():
        bridges[direction] = init_bridge_params(config.n_channels, config.channel_dim,
                                                config.hidden, rngs["init"],
                                                shared=config.shared_decoder)
    state = TrainState(config, prepared, graphs, pairs, bridges, Adam(), rngs)
    if config.float32:
        for _, arr in all_params(state).items():
            arr[...] = arr.astype(np.float32)
    state.pos_sets = {
        "s": positive_sets(split.train_s, prepared.dataset_s.n_users),
        "t": positive_sets(split.train_t, prepared.dataset_t.n_users),
    }
    state.overlap_train = split.train_overlap()
    return state


def trainable_params(state):
    out = {}
    for dom in DOMAINS:
        for name, arr in state.pairs[dom].online.named():
            out[f"enc.{dom}.online.{name}"] = arr
    for direction in sorted(state.bridges):
        for name, arr in state.bridges[direction].named():
            out[f"bridge.{direction}.{name}"] = arr
    return out


def all_params(state):
    out = trainable_params(state)
    for dom in DOMAINS:
        for name, arr in state.pairs[dom].target.named():
            out[f"enc.{dom}.target.{name}"] = arr
    return out


def make_tensors(state, requires_grad=True):
    """Wrap the online parameters once per step; returns (enc, bridge, flat)."""
    enc, flat = {}, {}
    for dom in DOMAINS:
        d = {}
        for name, arr in state.pairs[dom].online.named():
            t = ad.Tensor(arr, requires_grad=requires_grad)
            d[name] = t
            flat[f"enc.{dom}.online.{name}"] = t
        enc[dom] = d
    brt = {}
    for direction, b in state.bridges.items():
        d = {}
        for name, arr in b.named():
            t = ad.Tensor(arr, requires_grad=requires_grad)
            d[name] = t
            flat[f"bridge.{direction}.{name}"] = t
        brt[direction] = d
    return enc, brt, flat


# ---------------------------------------------------------------------------
# one training step

def build_batch(state, pos_s, pos_t):
    cfg = state.config
    pos = {"s": pos_s, "t": pos_t}
    neg, users = {}, {}
    for dom in DOMAINS:
        ds = state.prepared.dataset_s if dom == "s" else state.prepared.dataset_t
        neg[dom] = sample_negatives_for(pos[dom], state.pos_sets[dom], ds.n_items,
                                        cfg.neg_per_pos, state.rngs["negatives"])
        users[dom] = np.unique(pos[dom][:, 0])
    ov_s, ov_t = state.overlap_train
    size = min(cfg.batch_size, len(ov_s))
    rows = state.rngs["overlap"].choice(len(ov_s), size=size, replace=False)
    return StepBatch(pos, neg, users, (ov_s[rows], ov_t[rows]))


def step_loss(state, batch, enc_tensors, bridge_tensors, training=True):
    """Assemble the full objective for one batch; returns (total, components)."""
    cfg = state.config
    abl = cfg.ablations
    mode = cfg.target_mode()
    simcfg = SimilarityConfig(cfg.tau, cfg.phi)
    dropout = cfg.dropout if training else 0.0

    online, target = {}, {}
    for dom in DOMAINS:
        online[dom] = encode_domain(state.graphs[dom], state.pairs[dom].online,
                                    tensors=enc_tensors[dom], dropout=dropout,
                                    dropout_rng=state.rngs["dropout"])
        target[dom] = target_encode(state.pairs[dom], state.graphs[dom], mode,
                                    online_tensors=enc_tensors[dom])

    comps = {}
    intra_total, orth_total = None, None
    walk_cache = {}
    for dom in DOMAINS:
        idx = batch.users[dom]
        zu = ad.take_rows(online[dom].users, idx)
        zh = ad.take_rows(target[dom].users, idx)
        if "identity-walk" in abl:
            wt = identity_walk_targets(len(idx), cfg.n_channels, cfg.alpha,
                                       cfg.walk_steps, cfg.kernel_tau)
        else:
            wt = build_walk_targets(zh.data, cfg.alpha, cfg.walk_steps, cfg.kernel_tau)
        walk_cache[dom] = wt
        rhos = [pairwise_softmax(ad.take_index(zu, k, axis=1),
                                 ad.take_index(zh, k, axis=1), simcfg)
                for k in range(cfg.n_channels)]
        term = intra_loss(wt, rhos)
        intra_total = term if intra_total is None else intra_total + term
        oterm = orthogonality_loss(zu, zh, cfg.orth_form)
        orth_total = oterm if orth_total is None else orth_total + oterm
    comps["intra"], comps["orth"] = intra_total, orth_total

    inter_total = None
    ov_s, ov_t = batch.overlap
    for direction in cfg.directions():
        src, tgt = ("s", "t") if direction == "s2t" else ("t", "s")
        src_idx = ov_s if src == "s" else ov_t
        tgt_idx = ov_t if tgt == "t" else ov_s
        z_src = ad.take_rows(online[src].users, src_idx)
        zh_tgt = ad.take_rows(target[tgt].users, tgt_idx)
        e = decode(z_src, state.bridges[direction], bridge_tensors[direction],
                   cfg.leaky_slope, ablate_decoder="decoder" in abl)
        prior = intent_prior(e, bridge_tensors[direction]["prototypes"], cfg.phi,
                             uniform="uniform-prior" in abl)
        phat = batch_intent_similarity(e, zh_tgt, cfg.phi)
        q = variational_posterior(prior.data, phat.data)       # E-step constant
        elbo_m = elbo(q, prior, phat)
        if "identity-walk" in abl:
            t_mean = np.eye(len(src_idx))
        else:
            t_mean = mean_intent_similarity(
                build_walk_targets(zh_tgt.data, cfg.alpha, cfg.walk_steps, cfg.kernel_tau))
        term = inter_loss(t_mean, elbo_m)
        inter_total = term if inter_total is None else inter_total + term
    comps["inter"] = inter_total

    from .scoring import rec_loss_from_scores, score_batch
    for dom in DOMAINS:
        proto = bridge_tensors[proto_direction(cfg, dom)]["prototypes"]
        scores = {}
        for kind, edges in (("pos", batch.pos[dom]), ("neg", batch.neg[dom])):
            zu = ad.take_rows(online[dom].users, edges[:, 0])
            zv = ad.take_rows(online[dom].items, edges[:, 1])
            w = intent_prior(zu, proto, cfg.phi, uniform="uniform-prior" in abl)
            scores[kind] = score_batch(zu, zv, w)
        comps[f"rec_{dom}"] = rec_loss_from_scores(scores["pos"], scores["neg"])

    total = total_loss(comps, cfg.beta, effective_gamma(cfg), cfg.lam)
    return total, comps


def train_step(state, batch):
    """One optimizer step; returns the float loss components."""
    cfg = state.config
    enc_t, br_t, flat = make_tensors(state, requires_grad=True)
    total, comps = step_loss(state, batch, enc_t, br_t, training=True)
    values = {k: float(v.data) for k, v in comps.items()}
    values["total"] = float(total.data)
    if not all(np.isfinite(list(values.values()))):
        raise RuntimeError(f"non-finite loss encountered: {values}")
    total.backward()
    grads = {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
             for name, t in flat.items()}
    state.adam.step(trainable_params(state), grads, cfg.lr)
    if cfg.target_mode() == "ema":
        for dom in DOMAINS:
            ema_update(state.pairs[dom])
    return values


# ---------------------------------------------------------------------------
# fit loop

def _chunks(n, batch_size):
    return max(1, int(np.ceil(n / batch_size)))


def validate(state, negatives, users="valid"):
    from .evaluation import evaluate_cold_start, model_view
    view = model_view(state)
    hrs, ndcgs = [], []
    for direction in state.config.directions():
        hold = state.prepared.split.holdouts[direction]
        pool = hold.valid_users if users == "valid" else hold.test_users
        if len(pool) == 0:
            continue
        res = evaluate_cold_start(view, state.prepared, direction, users=users,
                                  k=state.config.eval_k, negatives=negatives,
                                  seed=state.config.seed)
        hrs.append(res.hr_at_k)
        ndcgs.append(res.ndcg_at_k)
    if not hrs:
        return 0.0, 0.0
    return float(np.mean(hrs)), float(np.mean(ndcgs))


def max_feasible_negatives(prepared, directions):
    """Largest negative count every cold user can support."""
    feasible = None
    for direction in directions:
        tgt_ds = prepared.dataset_t if direction == "s2t" else prepared.dataset_s
        train = prepared.split.train_t if direction == "s2t" else prepared.split.train_s
        pos = positive_sets(train, tgt_ds.n_users)
        hold = prepared.split.holdouts[direction]
        for u, items in hold.held_out.items():
            room = tgt_ds.n_items - len(pos[u]) - len(items)
            feasible = room if feasible is None else min(feasible, room)
    return feasible if feasible is not None else 0


def fit(prepared, config, state=None):
    """Train with per-epoch validation and early stopping.

    Returns (state, report). ``state`` may come from ``load_state`` to
    resume; the trajectory then continues exactly as if uninterrupted.
    """
    if state is None:
        state = init_state(prepared, config)
    cfg = state.config
    report = TrainReport()
    report.epochs = list(state.history)
    val_negatives = min(cfg.eval_negatives,
                        max_feasible_negatives(prepared, cfg.directions()))
    if val_negatives < cfg.eval_negatives:
        warnings.warn(f"validation negatives clamped to {val_negatives} "
                      f"(item vocabulary too small for {cfg.eval_negatives})")

    split = prepared.split
    edges = {"s": split.train_s, "t": split.train_t}
    n_chunks = {d: _chunks(len(edges[d]), cfg.batch_size) for d in DOMAINS}
    n_steps = max(n_chunks.values())

    while state.epoch < cfg.epochs:
        perms = {d: state.rngs["shuffle"].permutation(len(edges[d])) for d in DOMAINS}
        sums, count = {}, 0
        for step in range(n_steps):
            pos = {}
            for d in DOMAINS:
                j = step % n_chunks[d]
                sel = perms[d][j * cfg.batch_size:(j + 1) * cfg.batch_size]
                pos[d] = edges[d][sel]
            batch = build_batch(state, pos["s"], pos["t"])
            values = train_step(state, batch)
            for k, v in values.items():
                sums[k] = sums.get(k, 0.0) + v
            count += 1
        means = {k: v / count for k, v in sums.items()}
        val_hr, val_ndcg = validate(state, val_negatives)
        entry = {"epoch": state.epoch, **means, "val_hr": val_hr, "val_ndcg": val_ndcg}
        state.history.append(entry)
        report.epochs.append(entry)
        state.epoch += 1
        if state.best is None or val_hr > state.best["val_hr"]:
            state.best = {"epoch": entry["epoch"], "val_hr": val_hr,
                          "params": {n: a.copy() for n, a in all_params(state).items()}}
        elif cfg.patience and entry["epoch"] - state.best["epoch"] >= cfg.patience:
            break
    if state.best is not None:
        report.best_epoch = state.best["epoch"]
        report.best_val_hr = state.best["val_hr"]
    return state, report


# ---------------------------------------------------------------------------
# persistence

def save_state(state, path):
    arrays = dict(all_params(state))
    for name in trainable_params(state):
        arrays[f"adam.m.{name}"] = state.adam.m.get(name, np.zeros(1))
        arrays[f"adam.v.{name}"] = state.adam.v.get(name, np.zeros(1))
    if state.best is not None:
        for name, arr in state.best["params"].items():
            arrays[f"best.{name}"] = arr
    meta = {
        "config": state.config.to_dict(),
        "epoch": state.epoch,
        "adam_t": state.adam.t,
        "history": state.history,
        "best": (None if state.best is None else
                 {"epoch": state.best["epoch"], "val_hr": state.best["val_hr"]}),
        "rng_states": {name: rng.bit_generator.state for name, rng in state.rngs.items()},
    }
    save_checkpoint(path, arrays, meta)


def load_state(path, prepared):
    arrays, meta = load_checkpoint(path)
    config = TrainConfig.from_dict(meta["config"])
    state = init_state(prepared, config)
    for name, arr in all_params(state).items():
        arr[...] = arrays[name]
    state.adam.t = meta["adam_t"]
    for name in trainable_params(state):
        if f"adam.m.{name}" in arrays and state.adam.t > 0:
            state.adam.m[name] = arrays[f"adam.m.{name}"].copy()
            state.adam.v[name] = arrays[f"adam.v.{name}"].copy()
    state.epoch = meta["epoch"]
    state.history = list(meta["history"])
    if meta["best"] is not None:
        best_params = {name[len("best."):]: arr.copy()
                       for name, arr in arrays.items() if name.startswith("best.")}
        state.best = {"epoch": meta["best"]["epoch"], "val_hr": meta["best"]["val_hr"],
                      "params": best_params}
    for name, rng_state in meta["rng_states"].items():
        state.rngs[name].bit_generator.state = rng_state
    return state


def best_params_view(state):
    """Parameter dict to evaluate: best validation snapshot, else current."""
    if state.best is not None:
        return state.best["params"]
    return {n: a for n, a in all_params(state).items()}


# ---------------------------------------------------------------------------
# finite-difference gradient verification

def micro_fixture(seed=0, n_users=8, n_items=8, dim=8, n_channels=2, batch=4):
    """Tiny deterministic instance for whole-model gradient checks.

    Both domains share the user population; edges are random but seeded;
    dropout is off and every tensor is float64 so central differences are
    trustworthy.
    """
    from .data import PreparedData, build_domain_pair, split_cold_start
    from .synthetic import generate_synthetic

    raw_s, raw_t = generate_synthetic(n_users, n_items, k_true=2, consistency=0.9,
                                      density=4, seed=seed, min_degree=3,
                                      max_degree=6, filter_check=None)
    pair = build_domain_pair(raw_s, raw_t)
    split = split_cold_start(pair, 0.25, seed)
    prepared = PreparedData(pair[0], pair[1], split, {})
    config = TrainConfig(dim=dim, n_channels=n_channels, n_layers=1,
                         batch_size=batch, dropout=0.0, epochs=0,
                         direction="both", seed=seed)
    state = init_state(prepared, config)
    pos_s = split.train_s[:batch]
    pos_t = split.train_t[:batch]
    batch_ = build_batch(state, pos_s, pos_t)
    return state, batch_

def analytic_gradients(state, batch):
    enc_t, br_t, flat = make_tensors(state, requires_grad=True)
    total, _ = step_loss(state, batch, enc_t, br_t, training=True)
    total.backward()
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in flat.items()}, float(total.data)


def loss_at_current_params(state, batch):
    enc_t, br_t, _ = make_tensors(state, requires_grad=False)
    total, _ = step_loss(state, batch, enc_t, br_t, training=True)
    return float(total.data)


def gradient_check(state, batch, h=1e-5, rel_tol=1e-4, abs_tol=1e-7,
                   max_entries=None):
    """Compare backprop gradients of L_total against central differences.

    Returns (n_checked, failures) where failures lists
    (param, index, analytic, numeric).
    """
    grads, _ = analytic_gradients(state, batch)
    params = trainable_params(state)
    failures, checked = [], 0
    for name, arr in params.items():
        g = grads[name]
        flat_arr = arr.reshape(-1)
        flat_g = g.reshape(-1)
        indices = range(flat_arr.size)
        if max_entries is not None and flat_arr.size > max_entries:
            idx_rng = np.random.default_rng(0)
            indices = idx_rng.choice(flat_arr.size, size=max_entries, replace=False)
        for i in indices:
            orig = flat_arr[i]
            flat_arr[i] = orig + h
            lo_plus = loss_at_current_params(state, batch)
            flat_arr[i] = orig - h
            lo_minus = loss_at_current_params(state, batch)
            flat_arr[i] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * h)
            analytic = flat_g[i]
            checked += 1
            if abs(analytic - numeric) > abs_tol + rel_tol * max(abs(analytic), abs(numeric)):
                failures.append((name, int(i), float(analytic), float(numeric)))
    return checked, failures
