"""Epsilon sweeps, presets, condition reports, CSV and plot-data output."""
from __future__ import annotations

import csv
import dataclasses
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from .baselines import Baseline
from .config import ExperimentConfig
from .core import STATIC, PolicyConfig, is_update_condition_satisfied
from .dispatch import Strategy, analytic_delta, certify_strategy
from .engine import simulate
from .metrics import HeavyTrafficSummary, resource_pooled_sim, summarize
from .stochastic import IntDistribution, RngStream
from .update import Pull, Push

SCHEMA_VERSION = 1
KEY_FIELDS = ["schema_version", "experiment", "policy", "estimate_mode", "epsilon", "load",
              "replication", "seed", "stream_id"]
SUMMARY_FIELDS = [f for f in HeavyTrafficSummary.csv_fields() if f != "epsilon"]
CSV_HEADER = KEY_FIELDS + SUMMARY_FIELDS
PRESETS = ("heavy_traffic_sweep", "herd_behavior", "delayed_info", "pooled_reference")


class SweepError(RuntimeError):
    pass


def stream_id(policy_idx: int, eps_idx: int, rep: int) -> int:
    return (policy_idx * 1000 + eps_idx) * 100_000 + rep


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _run_point(job):
    cfg, pi, ei, rep = job
    pol, eps = cfg.policies[pi], cfg.epsilons[ei]
    traffic = cfg.traffic(eps)
    sid = stream_id(pi, ei, rep)
    try:
        _, acc = simulate(traffic, pol, cfg.slots, RngStream(cfg.seed, sid),
                          warmup=cfg.warmup, batch_size=cfg.batch_size)
        summary = summarize(acc, traffic)
    except Exception as e:
        raise SweepError(f"{pol.label} at epsilon={eps}, replication={rep}: {e}") from e
    row = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.name,
        "policy": pol.label,
        "estimate_mode": pol.estimate_mode if pol.is_led else "",
        "epsilon": eps,
        "load": traffic.lam_sum / traffic.mu_sum,
        "replication": rep,
        "seed": cfg.seed,
        "stream_id": sid,
    }
    row.update(summary.row())
    return row, summary


def _jobs(cfg: ExperimentConfig):
    return [(cfg, pi, ei, rep)
            for pi in range(len(cfg.policies))
            for ei in range(len(cfg.epsilons))
            for rep in range(cfg.replications)]


def run_sweep(cfg: ExperimentConfig, jobs: int = 1, out_dir=None, csv_name="summary.csv",
              keep_summaries=False, append=False):
    """Run every (policy, epsilon, replication); rows are written as they complete, in key order."""
    out = Path(out_dir if out_dir is not None else cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    path = out / csv_name
    rows, summaries = [], []
    mode = "a" if append and path.exists() else "w"
    with open(path, mode, newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_HEADER, lineterminator="\n")
        if mode == "w":
            w.writeheader()
        work = _jobs(cfg)
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                results = ex.map(_run_point, work)
                for row, summ in results:
                    w.writerow({k: _fmt(row[k]) for k in CSV_HEADER})
                    f.flush()
                    rows.append(row)
                    summaries.append(summ)
        else:
            for job in work:
                row, summ = _run_point(job)
                w.writerow({k: _fmt(row[k]) for k in CSV_HEADER})
                f.flush()
                rows.append(row)
                summaries.append(summ)
    return (rows, summaries) if keep_summaries else rows


def aggregate(rows) -> list[dict]:
    """Mean delay per (experiment, policy, epsilon) with a 95% CI.

    One replication: batch-means SE. Several: Student t over replication means.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["experiment"], r["policy"], float(r["epsilon"])), []).append(r)
    out = []
    for (exp, pol, eps), rs in groups.items():
        delays = np.array([float(r["mean_delay"]) for r in rs])
        if len(rs) == 1:
            half = 1.96 * float(rs[0]["se_delay"])
        else:
            half = stats.t.ppf(0.975, len(rs) - 1) * delays.std(ddof=1) / math.sqrt(len(rs))
        m = float(delays.mean())
        out.append({"experiment": exp, "policy": pol, "epsilon": eps, "load": float(rs[0]["load"]),
                    "mean_delay": m, "ci_low": m - half, "ci_high": m + half,
                    "mean_sum_q": float(np.mean([float(r["mean_sum_q"]) for r in rs])),
                    "ratio": float(np.mean([float(r["ratio"]) for r in rs])),
                    "messages_per_arrival": float(np.mean([float(r["messages_per_arrival"]) for r in rs])),
                    "replications": len(rs)})
    return out


def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_").lower()


def write_plotdata(agg, out_dir, prefix: str) -> list[Path]:
    """One whitespace-separated file per (experiment, policy)."""
    out = Path(out_dir)
    paths = []
    by: dict = {}
    for a in agg:
        by.setdefault((a["experiment"], a["policy"]), []).append(a)
    for (exp, pol), pts in by.items():
        pts.sort(key=lambda a: a["load"])
        p = out / f"plotdata_{_slug(prefix)}_{_slug(exp)}_{_slug(pol)}.dat"
        with open(p, "w") as f:
            f.write(f"# experiment={exp} policy={pol}\n")
            f.write("# load epsilon mean_delay ci_low ci_high mean_sum_q ratio messages_per_arrival\n")
            for a in pts:
                f.write(" ".join(repr(float(a[k])) for k in (
                    "load", "epsilon", "mean_delay", "ci_low", "ci_high", "mean_sum_q", "ratio",
                    "messages_per_arrival")) + "\n")
        paths.append(p)
    return paths


# presets -----------------------------------------------------------------

HEAVY_EPS = (3.0, 1.5, 0.6, 0.3, 0.15)
HERD_LOADS = (0.5, 0.7, 0.8, 0.9, 0.95, 0.98)
DELAY_LOADS = (0.5, 0.7, 0.8, 0.9, 0.95)
HERD_SCALE = 0.1


def _hetero10():
    return (IntDistribution.poisson(1.0),) * 5 + (IntDistribution.poisson(2.0),) * 5


def led(kind, update, d=None, mode="self_increment", name=None):
    return PolicyConfig(Strategy(kind, d), update, mode, name=name)


def preset_configs(name: str, **overrides) -> list[ExperimentConfig]:
    """Expand a preset into its experiment configs (one per traffic setting)."""
    if name == "heavy_traffic_sweep":
        cfgs = [
            ExperimentConfig(
                M=4, services=_hetero10(), epsilons=HEAVY_EPS, slots=2_000_000, seed=1,
                name="heavy_hetero",
                policies=(led("ljsq", Pull(0.5)), led("ljba", Push(0.5, 2))),
            ),
            ExperimentConfig(
                M=4, services=(IntDistribution.poisson(1.5),) * 10, epsilons=HEAVY_EPS,
                slots=2_000_000, seed=1, name="heavy_homog",
                policies=(led("lpod", Push(0.5, 2), d=2),),
            ),
        ]
    elif name == "herd_behavior":
        # two classes, rates 1 and 2 scaled by HERD_SCALE: mu_sum = 15, so each
        # dispatcher sees about 1.5 arrivals per slot near full load
        s = HERD_SCALE
        services = (IntDistribution.poisson(1.0 * s),) * 50 + (IntDistribution.poisson(2.0 * s),) * 50
        mu = 150.0 * s
        cfgs = [ExperimentConfig(
            M=10, services=services, epsilons=tuple(mu * (1 - r) for r in HERD_LOADS),
            slots=1_000_000, warmup=100_000, batch_size=20_000, seed=2, name="herd",
            policies=(
                # Push(p_hat=1, d=2) spends 2d = 4 messages per decision, the same as fresh Po2
                led("ljsq", Push(1.0, 2)),
                led("ljba", Push(1.0, 2)),
                # at most one report per busy server per slot: below the Po2 budget
                led("ljsq", Pull(1.0)),
                PolicyConfig(baseline=Baseline("jsq")),
                PolicyConfig(baseline=Baseline("pod", 2)),
                PolicyConfig(baseline=Baseline("jiq")),
            ),
        )]
    elif name == "delayed_info":
        services = (IntDistribution.poisson(1.0),) * 100
        mu = 100.0
        upd = Push(0.01, 2)
        cfgs = [ExperimentConfig(
            M=10, services=services, epsilons=tuple(mu * (1 - r) for r in DELAY_LOADS),
            slots=300_000, warmup=30_000, batch_size=6_000, seed=3, name="delayed",
            # static estimates: a dispatcher learns nothing about its own dispatches
            policies=(
                led("ljsq", upd, mode=STATIC),
                led("ljba", upd, mode=STATIC),
                led("lpod", upd, d=2, mode=STATIC),
            ),
        )]
    elif name == "pooled_reference":
        cfgs = [ExperimentConfig(
            M=4, services=_hetero10(), epsilons=HEAVY_EPS, slots=2_000_000, seed=4,
            name="pooled", policies=(led("ljsq", Pull(0.5)),),
        )]
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    if overrides:
        cfgs = [dataclasses.replace(c, **overrides) for c in cfgs]
    return cfgs


def run_pooled(cfg: ExperimentConfig, out_dir=None, csv_name="pooled.csv") -> list[dict]:
    out = Path(out_dir if out_dir is not None else cfg.output_path)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    with open(out / csv_name, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for ei, eps in enumerate(cfg.epsilons):
            traffic = cfg.traffic(eps)
            for rep in range(cfg.replications):
                sid = stream_id(999, ei, rep)
                s = resource_pooled_sim(traffic, cfg.slots, RngStream(cfg.seed, sid),
                                        warmup=cfg.warmup, batch_size=cfg.batch_size)
                row = {"schema_version": SCHEMA_VERSION, "experiment": cfg.name, "policy": "pooled",
                       "estimate_mode": "", "epsilon": eps, "load": traffic.lam_sum / traffic.mu_sum,
                       "replication": rep, "seed": cfg.seed, "stream_id": sid}
                row.update(s.row())
                w.writerow({k: _fmt(row[k]) for k in CSV_HEADER})
                rows.append(row)
    return rows


def run_preset(name: str, overrides: dict | None = None, out_dir="out", jobs: int = 1) -> list[dict]:
    """Run a preset; writes summary.csv (or pooled.csv) and plotdata_*.dat into ``out_dir``."""
    cfgs = preset_configs(name, **(overrides or {}))
    rows = []
    for i, cfg in enumerate(cfgs):
        if name == "pooled_reference":
            rows += run_pooled(cfg, out_dir, csv_name="summary.csv")
        else:
            rows += run_sweep(cfg, jobs, out_dir, append=i > 0)
    write_plotdata(aggregate(rows), out_dir, name)
    return rows


# condition report -------------------------------------------------------

def verify_conditions(cfg: ExperimentConfig, trials: int = 2000) -> list[dict]:
    """Per policy: tilt certificate (delta) and update bound p over the sweep."""
    reports = []
    mu = np.array([s.mean() for s in cfg.services])
    for i, pol in enumerate(cfg.policies):
        if not pol.is_led:
            reports.append({"policy": pol.label, "led": False, "throughput_condition": False,
                            "delay_condition": False,
                            "note": "fresh-information baseline, not an LED policy"})
            continue
        rng = np.random.default_rng([cfg.seed, i])
        tilted, delta = certify_strategy(pol.strategy, mu, trials, rng)
        ps = [is_update_condition_satisfied(pol, cfg.traffic(e)) for e in cfg.epsilons]
        p = min(q for _, q in ps)
        has_p = all(ok for ok, _ in ps) and p > 0
        delta_ok = tilted and delta > 1e-12
        reports.append({
            "policy": pol.label,
            "led": True,
            "tilted": tilted,
            "delta": delta,
            "delta_closed_form": analytic_delta(pol.strategy, mu),
            "p": p,
            "throughput_condition": bool(tilted and has_p),
            "delay_condition": bool(delta_ok and has_p),
            "note": ("conditions hold" if delta_ok and has_p else
                     "throughput condition holds, delay condition not satisfied" if tilted and has_p else
                     "conditions not satisfied"),
        })
    return reports


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
