import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import pytest

from ledlb.baselines import Baseline
from ledlb.cli import main
from ledlb.config import load_config
from ledlb.core import PolicyConfig
from ledlb.harness import (
    CSV_HEADER,
    aggregate,
    led,
    preset_configs,
    run_preset,
    run_sweep,
    verify_conditions,
    write_plotdata,
)
from ledlb.stochastic import IntDistribution as D
from ledlb.update import Pull, Push

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def tiny():
    return load_config(DATA / "tiny.yaml")


def test_golden_csv(tiny, tmp_path):
    run_sweep(tiny, 1, tmp_path)
    assert (tmp_path / "summary.csv").read_text() == (DATA / "golden_tiny.csv").read_text()


def test_header_is_versioned(tiny, tmp_path):
    run_sweep(tiny, 1, tmp_path)
    with open(tmp_path / "summary.csv") as f:
        header = next(csv.reader(f))
    assert header == CSV_HEADER and header[0] == "schema_version"


def test_parallel_output_identical(tiny, tmp_path):
    run_sweep(tiny, 1, tmp_path / "a")
    run_sweep(tiny, 2, tmp_path / "b")
    assert (tmp_path / "a/summary.csv").read_bytes() == (tmp_path / "b/summary.csv").read_bytes()


def test_replications_use_distinct_streams(tiny, tmp_path):
    rows = run_sweep(tiny, 1, tmp_path)
    ids = [r["stream_id"] for r in rows]
    assert len(set(ids)) == len(ids)
    r0 = [r for r in rows if r["replication"] == 0]
    r1 = [r for r in rows if r["replication"] == 1]
    assert all(a["mean_sum_q"] != b["mean_sum_q"] for a, b in zip(r0, r1))


def _runs_z(x):
    """Wald-Wolfowitz runs test on signs about the median."""
    x = np.asarray(x)
    s = x > np.median(x)
    n1, n2 = s.sum(), (~s).sum()
    runs = 1 + np.count_nonzero(s[1:] != s[:-1])
    mu = 2 * n1 * n2 / (n1 + n2) + 1
    var = 2 * n1 * n2 * (2 * n1 * n2 - n1 - n2) / ((n1 + n2) ** 2 * (n1 + n2 - 1))
    return (runs - mu) / math.sqrt(var)


def test_replications_pass_runs_test(tiny, tmp_path):
    cfg = dataclasses.replace(tiny, replications=40, epsilons=(1.0,), policies=tiny.policies[:1],
                              slots=10_000, batch_size=1000, warmup=1000)
    rows = run_sweep(cfg, 1, tmp_path)
    assert abs(_runs_z([r["mean_sum_q"] for r in rows])) < 2.58


def test_aggregate_and_plotdata(tiny, tmp_path):
    rows = run_sweep(tiny, 1, tmp_path)
    agg = aggregate(rows)
    assert len(agg) == 6 and all(a["replications"] == 2 for a in agg)
    for a in agg:
        assert a["ci_low"] <= a["mean_delay"] <= a["ci_high"]
    paths = write_plotdata(agg, tmp_path, "tiny")
    assert len(paths) == 3
    data = np.loadtxt(paths[0])
    assert data.shape == (2, 8) and np.all(np.diff(data[:, 0]) > 0)


def test_sweep_error_has_context(tiny, tmp_path):
    bad = dataclasses.replace(tiny, slots=100, batch_size=50, replications=1)
    with pytest.raises(RuntimeError, match="epsilon=1.0, replication=0"):
        run_sweep(bad, 1, tmp_path)


def _cfg(policies, services=(D.poisson(1.0),) * 5 + (D.poisson(2.0),) * 5):
    return dataclasses.replace(preset_configs("pooled_reference")[0], services=services,
                               policies=tuple(policies))


def test_verify_ljsq_pull_heterogeneous():
    (r,) = verify_conditions(_cfg([led("ljsq", Pull(0.5))]), trials=500)
    assert r["throughput_condition"] and r["delay_condition"] and r["p"] > 0
    assert r["delta"] == pytest.approx(1 / 15) and r["delta_closed_form"] == pytest.approx(1 / 15)


def test_verify_weighted_random_only_throughput():
    (r,) = verify_conditions(_cfg([led("weighted_random", Push(0.5, 2))]), trials=200)
    assert r["throughput_condition"] and not r["delay_condition"]


def test_verify_zero_update_probability_fails():
    reps = verify_conditions(_cfg([led("ljsq", Push(0.0, 2)), led("ljba", Pull(0.0))]), trials=100)
    assert all(not r["throughput_condition"] and not r["delay_condition"] for r in reps)
    assert reps[0]["note"] == "conditions not satisfied"


def test_verify_baseline_is_not_led():
    (r,) = verify_conditions(_cfg([PolicyConfig(baseline=Baseline("jsq"))]))
    assert not r["led"]


def test_presets_expand():
    for name in ("heavy_traffic_sweep", "herd_behavior", "delayed_info", "pooled_reference"):
        cfgs = preset_configs(name)
        assert cfgs and all(c.epsilons == tuple(sorted(c.epsilons, reverse=True)) for c in cfgs)
    herd = preset_configs("herd_behavior")[0]
    assert (herd.M, herd.N) == (10, 100)
    delayed = preset_configs("delayed_info")[0]
    assert (delayed.M, delayed.N) == (10, 100)
    assert all(p.update.p_hat == 0.01 and p.update.d == 2 for p in delayed.policies)
    with pytest.raises(ValueError, match="unknown preset"):
        preset_configs("fig3")


def test_pooled_preset_smoke(tmp_path):
    rows = run_preset("pooled_reference", {"epsilons": (7.5,), "slots": 20_000, "warmup": 1000},
                      tmp_path)
    assert len(rows) == 1 and math.isfinite(rows[0]["ratio"])
    assert (tmp_path / "summary.csv").exists() and list(tmp_path.glob("plotdata_*.dat"))


# CLI -----------------------------------------------------------------------

def test_cli_simulate_and_seed_override(tmp_path, capsys):
    cfg = DATA / "tiny.yaml"
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--jobs", "1"]) == 0
    assert (tmp_path / "a/summary.csv").read_text() == (DATA / "golden_tiny.csv").read_text()
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed", "8",
                 "--jobs", "1"]) == 0
    assert (tmp_path / "b/summary.csv").read_text() != (DATA / "golden_tiny.csv").read_text()


def test_cli_verify_prints_json(capsys):
    assert main(["verify", "--config", str(DATA / "tiny.yaml"), "--trials", "50"]) == 0
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [r["policy"] for r in lines] == ["L-JSQ-Pull", "L-Pod-Push", "Po2"]


def test_cli_pooled(tmp_path, capsys):
    assert main(["pooled", "--config", str(DATA / "tiny.yaml"), "--out", str(tmp_path)]) == 0
    assert "ratio=" in capsys.readouterr().out


def test_cli_error_is_machine_readable(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("M: 1\ntraffic:\n  services: [{kind: poisson, mean: 1}]\n  epsilons: [0]\n"
                   "policy: {kind: 'baseline:jsq'}\nslots: 10\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) != 0
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and "epsilon" in err["message"]
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) != 0
    assert json.loads(capsys.readouterr().err)["error"] == "file"


def test_cli_preset_rejects_structural_override(tmp_path, capsys):
    o = tmp_path / "o.yaml"
    o.write_text("M: 3\n")
    assert main(["simulate", "--preset", "pooled_reference", "--config", str(o)]) != 0
    assert "cannot override" in json.loads(capsys.readouterr().err)["message"]
