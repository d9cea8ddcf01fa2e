import json
import math

import pytest

import unisar


def test_metrics():
    assert unisar.hr_at_k(1, 1) == 1
    assert unisar.hr_at_k(11, 10) == 0
    assert unisar.ndcg_at_k(3, 5) == pytest.approx(0.5)
    assert unisar.ndcg_at_k(6, 5) == 0.0
    assert unisar.pessimistic_rank([0.5, 0.9, 0.5, 0.1]) == 3


def test_cross_mask():
    assert unisar.cross_mask(["S", "R", "S"]) == [[0, 1, 0], [1, 0, 1], [0, 1, 0]]
    with pytest.raises(ValueError):
        unisar.cross_mask(["X"])


def test_config_round_trip_and_errors():
    cfg = json.loads(unisar.resolve_config('{"model": {"d": 16}} // trailing', ["train.max_epochs=2"]))
    assert cfg["model"]["d"] == 16
    assert cfg["train"]["max_epochs"] == 2
    assert "published setting" in unisar.default_config(annotated=True)
    with pytest.raises(ValueError, match="model.width"):
        unisar.resolve_config('{"model": {"width": 3}}')


def test_transition_correlation_on_generated_log():
    log = unisar.generate_event_log("", ["data.synthetic.n_users=300", "seed=5"])
    assert log.count("\n") == 300 * 60
    stats = unisar.transition_correlation(log)
    assert sum(c["count"] for c in stats.values()) == 300 * 59
    assert stats["search->search"]["correlated_pct"] > stats["search->rec"]["correlated_pct"]


def test_gradcheck_toy_extrapolated():
    r = unisar.gradcheck_toy(seed=7, eps=1e-3, extrapolate=True)
    assert r["entries"] > 1000
    assert r["max_relative_error"] < 1e-4


def test_train_and_evaluate_small():
    cfg = {
        "model": {"d": 8, "max_history_len": 8, "n_m": 2, "n_s": 2, "n_r": 2, "expert_hidden": 8},
        "train": {"batch_size": 32, "max_epochs": 2, "max_valid_instances": 20},
        "data": {"max_train_targets_per_user": 3,
                 "synthetic": {"n_users": 40, "n_items": 150, "events_per_user": 10}},
        "seed": 3,
    }
    out = unisar.train_and_evaluate(json.dumps(cfg))
    total = out["search"]["count"] + out["rec"]["count"]
    assert total == 40
    for s in ("search", "rec"):
        for k in ("HR@1", "HR@10", "NDCG@10"):
            assert 0.0 <= out[s][k] <= 1.0 and not math.isnan(out[s][k])
    assert out["train_log"].startswith("# ablation=none")
