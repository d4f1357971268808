"""Online/target encoder pair: EMA weight tracking and stop-gradient contract.

The target encoder starts as a copy of the online one, is only ever moved
by ``ema_update`` (never by the optimizer), and its outputs are constants
with respect to optimization. Two ablation modes replace it: ``shared-target``
reuses the online encoder with gradients flowing, ``stopgrad-only`` reuses
it but detaches the outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encoder import EncoderParams, encode_domain


@dataclass
class SiamesePair:
    online: EncoderParams
    target: EncoderParams
    momentum: float

    @classmethod
    def create(cls, online, momentum):
        return cls(online, online.copy(), momentum)


def ema_update(pair):
    """theta_target <- m * theta_target + (1 - m) * theta_online, elementwise."""
    m = pair.momentum
    for (_, tgt), (_, onl) in zip(pair.target.named(), pair.online.named()):
        tgt[...] = m * tgt + (1.0 - m) * onl


def target_encode(pair, graph, mode="ema", online_tensors=None):
    """Encode with the target branch (dropout always off).

    ``mode``: "ema" uses the EMA parameter copy (constant outputs);
    "shared-target" runs the online parameters with gradient flow;
    "stopgrad-only" runs the online parameters and detaches the result.
    """
    if mode == "ema":
        return encode_domain(graph, pair.target)
    if online_tensors is None:
        online_tensors = pair.online.as_tensors(requires_grad=False)
    emb = encode_domain(graph, pair.online, tensors=online_tensors)
    if mode == "shared-target":
        return emb
    if mode == "stopgrad-only":
        return emb.detach()
    raise ValueError(f"unknown target-encoder mode: {mode}")
