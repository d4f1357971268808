"""Disentangled multi-channel graph encoder for one domain.

The encoder stacks L bipartite message-passing layers over free user/item
embedding tables, then a per-channel disentangling layer that projects the
propagated embeddings into K independent intent channels of width D/K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class DisentangledEmbeddings:
    """Per-entity intent channels: users (U, K, D_c), items (V, K, D_c)."""

    users: ad.Tensor
    items: ad.Tensor

    @property
    def n_channels(self):
        return self.users.shape[1]

    def detach(self):
        return DisentangledEmbeddings(self.users.detach(), self.items.detach())


@dataclass
class EncoderParams:
    user_table: np.ndarray          # (U, D)
    item_table: np.ndarray          # (V, D)
    layer_w1: list                  # L x (D, D)
    layer_w2: list
    chan_w1: list                   # K x (D, D/K)
    chan_w2: list
    leaky_slope: float

    @property
    def n_layers(self):
        return len(self.layer_w1)

    @property
    def n_channels(self):
        return len(self.chan_w1)

    def named(self):
        yield "user_table", self.user_table
        yield "item_table", self.item_table
        for l in range(self.n_layers):
            yield f"layer{l}.w1", self.layer_w1[l]
            yield f"layer{l}.w2", self.layer_w2[l]
        for k in range(self.n_channels):
            yield f"chan{k}.w1", self.chan_w1[k]
            yield f"chan{k}.w2", self.chan_w2[k]

    def as_tensors(self, requires_grad=False):
        return {name: ad.Tensor(arr, requires_grad=requires_grad)
                for name, arr in self.named()}

    def copy(self):
        return EncoderParams(self.user_table.copy(), self.item_table.copy(),
                             [w.copy() for w in self.layer_w1],
                             [w.copy() for w in self.layer_w2],
                             [w.copy() for w in self.chan_w1],
                             [w.copy() for w in self.chan_w2],
                             self.leaky_slope)


def xavier_uniform(rng, shape):
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_encoder_params(n_users, n_items, dim, n_channels, n_layers, leaky_slope, rng):
    if dim % n_channels != 0:
        raise ValueError(f"embedding dim {dim} not divisible by {n_channels} channels")
    dc = dim // n_channels
    return EncoderParams(
        user_table=xavier_uniform(rng, (n_users, dim)),
        item_table=xavier_uniform(rng, (n_items, dim)),
        layer_w1=[xavier_uniform(rng, (dim, dim)) for _ in range(n_layers)],
        layer_w2=[xavier_uniform(rng, (dim, dim)) for _ in range(n_layers)],
        chan_w1=[xavier_uniform(rng, (dim, dc)) for _ in range(n_channels)],
        chan_w2=[xavier_uniform(rng, (dim, dc)) for _ in range(n_channels)],
        leaky_slope=leaky_slope,
    )


def _propagate(z_self, agg, w1, w2, slope):
    # LeakyReLU(W1 z + sum_n c_n (W1 z_n + W2 (z_n * z))); the neighbor sum
    # factors through the aggregation because the product is bilinear.
    return ad.leaky_relu(ad.matmul(z_self + agg, w1) + ad.matmul(agg * z_self, w2), slope)


def message_passing_layer(z_users, z_items, graph, w1, w2, slope):
    """One bipartite propagation step; users and items update symmetrically."""
    if z_users.shape[0] != graph.n_users or z_items.shape[0] != graph.n_items:
        raise ValueError("embedding row counts do not match the graph")
    agg_u = ad.spmm(graph.adj, z_items, graph.adj_t)
    agg_v = ad.spmm(graph.adj_t, z_users, graph.adj)
    return (_propagate(z_users, agg_u, w1, w2, slope),
            _propagate(z_items, agg_v, w1, w2, slope))


def disentangle_layer(z_users, z_items, graph, chan_w1, chan_w2, slope):
    """Channel-wise propagation into K independent D_c-wide intent slices."""
    agg_u = ad.spmm(graph.adj, z_items, graph.adj_t)
    agg_v = ad.spmm(graph.adj_t, z_users, graph.adj)
    users, items = [], []
    for w1, w2 in zip(chan_w1, chan_w2):
        users.append(_propagate(z_users, agg_u, w1, w2, slope))
        items.append(_propagate(z_items, agg_v, w1, w2, slope))
    return DisentangledEmbeddings(ad.stack(users, axis=1), ad.stack(items, axis=1))


def _dropout(t, rate, rng):
    mask = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return t * mask


def encode_domain(graph, params, tensors=None, dropout=0.0, dropout_rng=None):
    """Full encoding pass: L message-passing layers, then channel projection.

    ``tensors`` supplies pre-wrapped parameter Tensors (the trainer's
    gradient leaves); otherwise parameters enter as constants. Dropout is
    applied to layer outputs only when a rate and rng are given.
    """
    t = tensors if tensors is not None else params.as_tensors(requires_grad=False)
    zu, zv = t["user_table"], t["item_table"]
    slope = params.leaky_slope
    for l in range(params.n_layers):
        zu, zv = message_passing_layer(zu, zv, graph, t[f"layer{l}.w1"],
                                       t[f"layer{l}.w2"], slope)
        if dropout > 0.0:
            zu, zv = _dropout(zu, dropout, dropout_rng), _dropout(zv, dropout, dropout_rng)
    emb = disentangle_layer(zu, zv, graph,
                            [t[f"chan{k}.w1"] for k in range(params.n_channels)],
                            [t[f"chan{k}.w2"] for k in range(params.n_channels)],
                            slope)
    if dropout > 0.0:
        emb = DisentangledEmbeddings(_dropout(emb.users, dropout, dropout_rng),
                                     _dropout(emb.items, dropout, dropout_rng))
    return emb
