"""Ranking, metrics, cold-start evaluation protocol and baselines."""

import numpy as np
import pytest

from intentcdr.config import TrainConfig
from intentcdr.data import PreparedData, build_domain_pair, split_cold_start
from intentcdr.evaluation import (baseline_score, evaluate_cold_start,
                                  model_view, rank_candidates, ranking_metrics)
from intentcdr.synthetic import generate_synthetic
from intentcdr.trainer import init_state

RNG = np.random.default_rng(77)


def test_rank_unique_max_is_one():
    scores = RNG.standard_normal(1000)
    scores[17] = scores.max() + 1
    assert rank_candidates(scores, 17) == 1


def test_rank_pessimistic_ties():
    scores = np.zeros(10)
    scores[[1, 3, 5, 7]] = 2.0
    assert rank_candidates(scores, 1) == 4


def test_rank_unique_min_is_last():
    scores = RNG.permutation(1000).astype(float)
    pos = int(np.argmin(scores))
    assert rank_candidates(scores, pos) == 1000


def test_rank_tie_count_oracle():
    for trial in range(50):
        rng = np.random.default_rng(trial)
        scores = rng.integers(0, 5, size=30).astype(float)
        pos = int(rng.integers(30))
        oracle = 1 + sum(1 for j in range(30) if j != pos and scores[j] >= scores[pos])
        assert rank_candidates(scores, pos) == oracle


def test_metrics_closed_forms():
    r = ranking_metrics([1], 10)
    assert r.hr_at_k == 1.0 and r.ndcg_at_k == 1.0
    r = ranking_metrics([10], 10)
    assert r.hr_at_k == 1.0
    assert abs(r.ndcg_at_k - 1.0 / np.log2(11)) < 1e-12
    assert abs(r.ndcg_at_k - 0.28906) < 1e-5
    r = ranking_metrics([11], 10)
    assert r.hr_at_k == 0.0 and r.ndcg_at_k == 0.0


def test_metrics_monotone_in_k_and_ndcg_below_hr():
    ranks = RNG.integers(1, 50, size=200).tolist()
    results = {k: ranking_metrics(ranks, k) for k in (1, 5, 10)}
    assert results[1].hr_at_k <= results[5].hr_at_k <= results[10].hr_at_k
    assert results[1].ndcg_at_k <= results[5].ndcg_at_k <= results[10].ndcg_at_k
    for r in results.values():
        assert r.ndcg_at_k <= r.hr_at_k + 1e-12


def test_metrics_empty_errors():
    with pytest.raises(ValueError):
        ranking_metrics([], 10)


# ---------------------------------------------------------------------------
# end-to-end evaluation protocol on a small prepared dataset

def small_prepared(n_users=60, n_items=50, seed=0):
    raw_s, raw_t = generate_synthetic(n_users, n_items, 2, 0.9, density=10,
                                      seed=seed, min_degree=6, max_degree=14,
                                      filter_check=None)
    pair = build_domain_pair(raw_s, raw_t)
    split = split_cold_start(pair, 0.2, rng_seed=seed)
    return PreparedData(pair[0], pair[1], split, {})


def test_evaluate_cold_start_deterministic():
    prepared = small_prepared()
    cfg = TrainConfig(dim=8, n_channels=2, n_layers=1, batch_size=16,
                      dropout=0.0, epochs=0, seed=3)
    state = init_state(prepared, cfg)
    view = model_view(state)
    a = evaluate_cold_start(view, prepared, "s2t", negatives=20, seed=5)
    b = evaluate_cold_start(view, prepared, "s2t", negatives=20, seed=5)
    assert a.per_user_ranks == b.per_user_ranks
    assert a.hr_at_k == b.hr_at_k and a.n_users == len(a.per_user_ranks)


def test_evaluate_all_items_equal_gives_pessimistic_zero():
    prepared = small_prepared(seed=1)
    cfg = TrainConfig(dim=8, n_channels=2, n_layers=1, dropout=0.0, epochs=0)
    state = init_state(prepared, cfg)
    view = model_view(state)
    for dom in view.emb.values():
        dom["items"][...] = 1.0
    res = evaluate_cold_start(view, prepared, "s2t", negatives=20, seed=0)
    assert res.hr_at_k == 0.0
    assert all(r == 21 for r in res.per_user_ranks)


def test_evaluate_missing_bridge_errors():
    prepared = small_prepared(seed=2)
    cfg = TrainConfig(dim=8, n_channels=2, n_layers=1, dropout=0.0,
                      epochs=0, direction="s2t")
    state = init_state(prepared, cfg)
    view = model_view(state)
    with pytest.raises(ValueError, match="bridge"):
        evaluate_cold_start(view, prepared, "t2s", negatives=10)


def test_baselines_run_and_are_deterministic():
    prepared = small_prepared(seed=3)
    r1 = baseline_score("random", prepared, "s2t", negatives=20, seed=9)
    r2 = baseline_score("random", prepared, "s2t", negatives=20, seed=9)
    assert r1.per_user_ranks == r2.per_user_ranks
    pop = baseline_score("popularity", prepared, "t2s", negatives=20, seed=9)
    assert 0.0 <= pop.hr_at_k <= 1.0
    with pytest.raises(ValueError):
        baseline_score("oracle", prepared, "s2t")


def test_random_baseline_null_calibration_small():
    # with C = 21 candidates, E[HR@10] = 10/21
    prepared = small_prepared(n_users=200, seed=4)
    res = baseline_score("random", prepared, "s2t", negatives=20, seed=1)
    expect = 10.0 / 21.0
    se = np.sqrt(expect * (1 - expect) / res.n_users)
    assert abs(res.hr_at_k - expect) < 4 * se
