"""Training configuration: every hyperparameter, JSON round trip, validation.

Paper-reported settings are wired as defaults where they exist (embedding
dim 128, LeakyReLU slope 0.05, Adam lr 0.004). Settings the source work
only gives as tuning ranges get desk-scale defaults chosen so that the
synthetic end-to-end experiment trains in minutes on a CPU: notably batch
size 256 (1024 makes the B^3 random-walk powers dominate) and 2 propagation
layers (4 is the tuned large-scale depth).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

ABLATIONS = ("decoder", "uniform-prior", "no-orth", "identity-walk",
             "shared-target", "stopgrad-only")
DIRECTIONS = ("s2t", "t2s", "both")


@dataclass
class TrainConfig:
    dim: int = 128                  # total embedding width D
    n_channels: int = 2             # intent channels K (D must divide)
    n_layers: int = 2               # message-passing depth L
    batch_size: int = 256
    lr: float = 0.004
    leaky_slope: float = 0.05
    dropout: float = 0.3
    tau: float = 0.5                # contrastive softmax temperature
    tau_r: float | None = None      # affinity kernel temperature; None -> tau
    alpha: float = 0.5              # self vs walk similarity trade-off
    walk_steps: int = 4
    beta: float = 0.3               # inter vs intra weight
    gamma: float = 1.0              # orthogonality weight
    lam: float = 0.2                # contrastive vs recommendation weight
    ema_momentum: float = 0.99
    epochs: int = 200
    patience: int = 3
    neg_per_pos: int = 1
    seed: int = 0
    direction: str = "both"
    ablations: tuple = ()
    phi: str = "cosine"
    orth_form: str = "cross"
    decoder_hidden: int | None = None   # None -> D / K
    shared_decoder: bool = False
    eval_negatives: int = 999
    eval_k: int = 10
    float32: bool = False

    def __post_init__(self):
        self.ablations = tuple(self.ablations)
        self.validate()

    @property
    def channel_dim(self):
        return self.dim // self.n_channels

    @property
    def kernel_tau(self):
        return self.tau if self.tau_r is None else self.tau_r

    @property
    def hidden(self):
        return self.channel_dim if self.decoder_hidden is None else self.decoder_hidden

    def directions(self):
        return ("s2t", "t2s") if self.direction == "both" else (self.direction,)

    def validate(self):
        if self.dim < 1 or self.dim % self.n_channels != 0:
            raise ValueError("dim must be a positive multiple of n_channels")
        if not 1 <= self.n_channels <= 6:
            raise ValueError("n_channels must lie in [1, 6]")
        if not 1 <= self.n_layers <= 6:
            raise ValueError("n_layers must lie in [1, 6]")
        if not 1 <= self.walk_steps <= 6:
            raise ValueError("walk_steps must lie in [1, 6]")
        if not 0.0 <= self.dropout <= 0.5:
            raise ValueError("dropout must lie in [0, 0.5]")
        if not 0.0 <= self.beta <= 0.5:
            raise ValueError("beta must lie in [0, 0.5]")
        if not 0.0 <= self.lam <= 0.5:
            raise ValueError("lam must lie in [0, 0.5]")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError("ema_momentum must lie in [0, 1]")
        if self.tau <= 0 or (self.tau_r is not None and self.tau_r <= 0):
            raise ValueError("temperatures must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 0:
            raise ValueError("batch_size >= 1, epochs >= 0, patience >= 0 required")
        if self.neg_per_pos < 1:
            raise ValueError("neg_per_pos must be >= 1")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        for a in self.ablations:
            if a not in ABLATIONS:
                raise ValueError(f"unknown ablation flag: {a}")
        if "shared-target" in self.ablations and "stopgrad-only" in self.ablations:
            raise ValueError("shared-target and stopgrad-only are mutually exclusive")
        if self.phi not in ("cosine", "dot"):
            raise ValueError("phi must be cosine or dot")
        if self.orth_form not in ("cross", "literal"):
            raise ValueError("orth_form must be cross or literal")
        if self.eval_negatives < 0 or self.eval_k < 1:
            raise ValueError("eval_negatives >= 0 and eval_k >= 1 required")

    def target_mode(self):
        for mode in ("shared-target", "stopgrad-only"):
            if mode in self.ablations:
                return mode
        return "ema"

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["ablations"] = list(self.ablations)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
