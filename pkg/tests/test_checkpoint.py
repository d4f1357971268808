"""Checkpoint round trips, corruption detection, exact training resume."""

import json
import os

import numpy as np
import pytest

from intentcdr.checkpoint import load_checkpoint, save_checkpoint
from intentcdr.config import TrainConfig
from intentcdr.data import PreparedData, build_domain_pair, split_cold_start
from intentcdr.synthetic import generate_synthetic
from intentcdr.trainer import all_params, fit, init_state, load_state, save_state


def small_prepared(seed=0):
    raw_s, raw_t = generate_synthetic(40, 30, 2, 0.9, density=8, seed=seed,
                                      min_degree=6, max_degree=12, filter_check=None)
    pair = build_domain_pair(raw_s, raw_t)
    split = split_cold_start(pair, 0.2, rng_seed=seed)
    return PreparedData(pair[0], pair[1], split, {})


def small_config(**kw):
    base = dict(dim=8, n_channels=2, n_layers=1, batch_size=16, dropout=0.0,
                epochs=2, patience=0, seed=1, eval_negatives=10)
    base.update(kw)
    return TrainConfig(**base)


def test_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a": rng.standard_normal((3, 4)), "b.c": rng.standard_normal(7),
              "scalar": np.array(3.25)}
    save_checkpoint(str(tmp_path / "ck"), arrays, {"note": "x"})
    loaded, meta = load_checkpoint(str(tmp_path / "ck"))
    assert meta["note"] == "x"
    assert list(loaded) == list(arrays)
    for name in arrays:
        assert np.array_equal(loaded[name], arrays[name])
        assert loaded[name].dtype == np.float64


def test_truncated_blob_reports_lengths(tmp_path):
    arrays = {"a": np.ones((4, 4))}
    path = str(tmp_path / "ck")
    save_checkpoint(path, arrays, {})
    blob = os.path.join(path, "params.bin")
    with open(blob, "rb") as fh:
        data = fh.read()
    with open(blob, "wb") as fh:
        fh.write(data[:-8])
    with pytest.raises(ValueError, match="128.*120|truncated"):
        load_checkpoint(path)


def test_corrupted_blob_hash_mismatch(tmp_path):
    arrays = {"a": np.ones(4)}
    path = str(tmp_path / "ck")
    save_checkpoint(path, arrays, {})
    blob = os.path.join(path, "params.bin")
    raw = bytearray(open(blob, "rb").read())
    raw[0] ^= 0xFF
    open(blob, "wb").write(bytes(raw))
    with pytest.raises(ValueError, match="hash mismatch"):
        load_checkpoint(path)


def test_state_roundtrip_bitwise(tmp_path):
    prepared = small_prepared()
    state, _ = fit(prepared, small_config(epochs=1))
    save_state(state, str(tmp_path / "st"))
    loaded = load_state(str(tmp_path / "st"), prepared)
    for name, arr in all_params(state).items():
        assert np.array_equal(arr, all_params(loaded)[name]), name
    for name, m in state.adam.m.items():
        assert np.array_equal(m, loaded.adam.m[name])
    assert loaded.adam.t == state.adam.t
    assert loaded.epoch == state.epoch
    assert loaded.history == state.history
    for name, rng in state.rngs.items():
        assert rng.bit_generator.state == loaded.rngs[name].bit_generator.state


def test_resume_matches_uninterrupted_run(tmp_path):
    prepared = small_prepared(seed=3)
    cfg4 = small_config(epochs=4, patience=0, dropout=0.1, dim=16)
    _, full = fit(prepared, cfg4)

    cfg2 = small_config(epochs=2, patience=0, dropout=0.1, dim=16)
    state2, _ = fit(prepared, cfg2)
    save_state(state2, str(tmp_path / "half"))
    resumed_state = load_state(str(tmp_path / "half"), prepared)
    # continue to 4 epochs with the same settings
    resumed_state.config = cfg4
    _, resumed = fit(prepared, cfg4, state=resumed_state)

    assert len(full.epochs) == len(resumed.epochs) == 4
    for a, b in zip(full.epochs, resumed.epochs):
        assert a == b                  # float-exact trajectory
    assert full.best_epoch == resumed.best_epoch


def test_report_json_roundtrip_is_exact(tmp_path):
    prepared = small_prepared(seed=4)
    _, report = fit(prepared, small_config(epochs=2))
    payload = report.to_dict()
    p = tmp_path / "report.json"
    p.write_text(json.dumps(payload, sort_keys=True, indent=2))
    back = json.loads(p.read_text())
    assert back["epochs"] == payload["epochs"]
