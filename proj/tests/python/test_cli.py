import json
import os
import shutil
import subprocess
from pathlib import Path

import pytest

CLI = os.environ.get("UNISAR_CLI") or shutil.which("unisar")
pytestmark = pytest.mark.skipif(not CLI, reason="unisar binary not found (set UNISAR_CLI)")

SMALL = [
    "--set", "model.d=8", "--set", "model.max_history_len=8", "--set", "model.n_m=2",
    "--set", "model.n_s=2", "--set", "model.n_r=2", "--set", "model.expert_hidden=8",
    "--set", "train.batch_size=32", "--set", "train.max_epochs=2", "--set", "train.max_valid_instances=20",
    "--set", "data.max_train_targets_per_user=3", "--set", "data.synthetic.n_users=40",
    "--set", "data.synthetic.n_items=150", "--set", "data.synthetic.events_per_user=10",
]


def run(*args):
    return subprocess.run([CLI, *map(str, args)], capture_output=True, text=True, timeout=600)


def test_usage_errors_exit_1():
    assert run().returncode == 1
    assert run("no-such-command").returncode == 1
    assert run("train", "--bogus").returncode == 1


def test_init_config_round_trips(tmp_path):
    out = tmp_path / "c.json"
    r = run("init-config", "--out", out)
    assert r.returncode == 0
    text = out.read_text()
    assert "published setting" in text and "local default" in text
    r = run("init-config", "--config", out, "--seed", 9)
    assert r.returncode == 0
    assert '"seed": 9' in r.stdout


def test_bad_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": {"width": 3}}')
    r = run("init-config", "--config", bad)
    assert r.returncode == 1
    assert "model.width" in r.stderr
    assert run("init-config", "--config", tmp_path / "missing.json").returncode == 1
    assert run("init-config", "--set", "model.d=0").returncode == 1


def test_gen_data_and_ingest_check(tmp_path):
    log = tmp_path / "events.tsv"
    r = run("gen-data", "--seed", 3, "--out", log, "--set", "data.synthetic.n_users=50")
    assert r.returncode == 0, r.stderr
    assert "users=50" in r.stdout
    assert len(log.read_text().splitlines()) == 50 * 60
    r = run("ingest-check", "--in", log)
    assert r.returncode == 0 and r.stdout.startswith("ok:")

    broken = tmp_path / "broken.tsv"
    broken.write_text("7\t100\tR\t42\t1\t\t3\n")
    r = run("ingest-check", "--in", broken)
    assert r.returncode == 1
    assert "line 1" in r.stderr


def test_analyze_recovers_planted_pattern(tmp_path):
    out = tmp_path / "corr.csv"
    r = run("analyze", "--seed", 11, "--out", out)
    assert r.returncode == 0, r.stderr
    rows = {}
    for line in out.read_text().splitlines()[1:]:
        f, t, pct, count = line.split(",")
        rows[(f, t)] = (float(pct), int(count))
    assert sum(c for _, c in rows.values()) >= 50000
    for key in [("search", "search"), ("rec", "rec")]:
        assert abs(rows[key][0] - 60.0) <= 2.0
    for key in [("search", "rec"), ("rec", "search")]:
        assert abs(rows[key][0] - 10.0) <= 2.0


def test_train_then_eval(tmp_path):
    run_dir = tmp_path / "run"
    r = run("train", "--seed", 5, "--out", run_dir, *SMALL)
    assert r.returncode == 0, r.stderr
    assert (run_dir / "params.bin").exists()
    log = (run_dir / "train_log.csv").read_text().splitlines()
    assert log[0].startswith("# ablation=none")
    saved = json.loads((run_dir / "config.json").read_text())
    assert saved["seed"] == 5

    metrics = tmp_path / "m.csv"
    r = run("eval", "--config", run_dir / "config.json", "--params", run_dir / "params.bin", "--out", metrics)
    assert r.returncode == 0, r.stderr
    assert "NDCG@10" in metrics.read_text()

    r = run("eval", "--config", run_dir / "config.json", "--params", tmp_path / "none.bin")
    assert r.returncode == 2
    r = run("eval", "--config", run_dir / "config.json", "--params", run_dir / "params.bin",
            "--set", "model.d=16")
    assert r.returncode == 1


def test_train_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", "--seed", 4, "--out", a, *SMALL).returncode == 0
    assert run("train", "--seed", 4, "--out", b, *SMALL).returncode == 0
    assert (a / "params.bin").read_bytes() == (b / "params.bin").read_bytes()
    assert (a / "train_log.csv").read_text() == (b / "train_log.csv").read_text()


def test_ablate_writes_one_row_per_variant(tmp_path):
    out = tmp_path / "ablate.csv"
    r = run("ablate", "--seed", 2, "--out", out, "--flags", "none,no_mask", *SMALL)
    assert r.returncode == 0, r.stderr
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("none,2,none")
    assert lines[2].startswith("no_mask,2,no_mask")
    assert run("ablate", "--out", out, "--flags", "no_everything").returncode == 1


def test_gradcheck_harness_detects_corruption(tmp_path):
    r = run("gradcheck", "--corrupt-gradient")
    assert r.returncode == 2
    assert "FAIL" in r.stdout
    r = run("gradcheck", "--set", "weights.alpha=-1")
    assert r.returncode == 1
