"""Command line entry point: ``ledlb simulate|verify|pooled``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ConfigError, config_from_dict, load_config, read_yaml
from .harness import (PRESETS, aggregate, default_jobs, preset_configs, run_pooled, run_preset,
                      run_sweep, verify_conditions, write_plotdata)

# config keys that may override a preset
_OVERRIDABLE = {"slots": int, "warmup": int, "batch_size": int, "replications": int, "seed": int}


def _fail(kind: str, msg: str, code: int = 2) -> int:
    print(json.dumps({"error": kind, "message": msg}), file=sys.stderr)
    return code


def _preset_overrides(path) -> dict:
    raw = read_yaml(path) if path else {}
    unknown = set(raw) - set(_OVERRIDABLE) - {"output_path", "name"}
    if unknown:
        raise ConfigError(f"keys {sorted(unknown)} cannot override a preset; "
                          f"allowed: {sorted(_OVERRIDABLE)}")
    return {k: _OVERRIDABLE[k](v) for k, v in raw.items() if k in _OVERRIDABLE and v is not None}


def cmd_simulate(args) -> int:
    if args.preset:
        overrides = _preset_overrides(args.config)
        if args.seed is not None:
            overrides["seed"] = args.seed
        out = args.out or "out"
        rows = run_preset(args.preset, overrides, out, args.jobs)
        print(f"{len(rows)} rows written to {Path(out) / 'summary.csv'}")
        return 0
    if not args.config:
        return _fail("usage", "simulate needs --config or --preset")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = args.out or cfg.output_path
    rows = run_sweep(cfg, args.jobs, out)
    write_plotdata(aggregate(rows), out, cfg.name)
    print(f"{len(rows)} rows written to {Path(out) / 'summary.csv'}")
    return 0


def cmd_verify(args) -> int:
    cfgs = preset_configs(args.preset) if args.preset else [load_config(args.config)]
    reports = [r for cfg in cfgs for r in verify_conditions(cfg, args.trials)]
    for r in reports:
        print(json.dumps(r))
    return 0


def cmd_pooled(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = args.out or cfg.output_path
    rows = run_pooled(cfg, out)
    for r in rows:
        print(f"epsilon={r['epsilon']:g} ratio={r['ratio']:.4f} +- {r['ratio_se']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ledlb", description="Multi-dispatcher load balancing simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run an epsilon sweep or a preset")
    sim.add_argument("--config", help="YAML experiment config (with --preset: overrides only)")
    sim.add_argument("--preset", choices=PRESETS)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="output directory (default: output_path from the config)")
    sim.add_argument("--jobs", type=int, default=default_jobs())
    sim.set_defaults(func=cmd_simulate)

    ver = sub.add_parser("verify", help="report tilt and update-probability conditions")
    g = ver.add_mutually_exclusive_group(required=True)
    g.add_argument("--config")
    g.add_argument("--preset", choices=PRESETS)
    ver.add_argument("--trials", type=int, default=2000)
    ver.set_defaults(func=cmd_verify)

    po = sub.add_parser("pooled", help="simulate the single pooled queue for each epsilon")
    po.add_argument("--config", required=True)
    po.add_argument("--seed", type=int)
    po.add_argument("--out")
    po.set_defaults(func=cmd_pooled)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail("config", str(e))
    except FileNotFoundError as e:
        return _fail("file", str(e))
    except Exception as e:  # noqa: BLE001 - surfaced as a machine-readable line
        return _fail(type(e).__name__, str(e), 1)


if __name__ == "__main__":
    sys.exit(main())
