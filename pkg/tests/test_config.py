"""Config schema: defaults, validation, JSON normalization round trip."""

import json

import pytest

from intentcdr.config import TrainConfig


def test_defaults_follow_reported_settings():
    cfg = TrainConfig()
    assert cfg.dim == 128 and cfg.lr == 0.004 and cfg.leaky_slope == 0.05
    assert cfg.channel_dim * cfg.n_channels == cfg.dim
    assert cfg.kernel_tau == cfg.tau        # one temperature shared by default


def test_kernel_tau_decoupled_when_set():
    cfg = TrainConfig(tau=0.5, tau_r=1.25)
    assert cfg.kernel_tau == 1.25


def test_roundtrip_normalization():
    cfg = TrainConfig(dim=16, n_channels=4, ablations=("decoder", "no-orth"),
                      direction="s2t", tau_r=0.8)
    d = cfg.to_dict()
    again = TrainConfig.from_dict(json.loads(json.dumps(d)))
    assert again.to_dict() == d


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        TrainConfig.from_dict({"learning_rate": 0.1})


@pytest.mark.parametrize("bad", [
    dict(dim=10, n_channels=3),
    dict(n_layers=0),
    dict(n_layers=7),
    dict(n_channels=7),
    dict(walk_steps=0),
    dict(dropout=0.6),
    dict(beta=0.7),
    dict(lam=0.9),
    dict(alpha=1.5),
    dict(tau=0.0),
    dict(lr=0.0),
    dict(neg_per_pos=0),
    dict(direction="sideways"),
    dict(ablations=("warp",)),
    dict(ablations=("shared-target", "stopgrad-only")),
    dict(phi="manhattan"),
    dict(orth_form="diag"),
])
def test_validation_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_directions_listing():
    assert TrainConfig(direction="both").directions() == ("s2t", "t2s")
    assert TrainConfig(direction="t2s").directions() == ("t2s",)


def test_target_mode():
    assert TrainConfig().target_mode() == "ema"
    assert TrainConfig(ablations=("shared-target",)).target_mode() == "shared-target"
    assert TrainConfig(ablations=("stopgrad-only",)).target_mode() == "stopgrad-only"
