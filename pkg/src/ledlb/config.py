"""Experiment configuration: a YAML file mirroring ``ExperimentConfig``.

Example::

    name: small
    M: 4
    traffic:
      arrival: {kind: poisson}        # mean set to mu_sum - epsilon per sweep point
      dispatcher_probs: [0.25, 0.25, 0.25, 0.25]   # optional, default uniform
      services:
        - {kind: poisson, mean: 1.0, count: 5}
        - {kind: poisson, mean: 2.0, count: 5}
      epsilons: [3.0, 1.5, 0.6]
    policies:                         # or a single `policy:` mapping
      - strategy: {kind: ljsq}
        update: {kind: pull, p_hat: 0.5}
        estimate_mode: self_increment
      - {kind: "baseline:pod", d: 2}
    slots: 200000
    warmup: 20000                     # optional, default max(1e5, 20/epsilon)
    batch_size: 4000                  # optional, default slots // 50
    replications: 1
    seed: 1
    output_path: out
"""
from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .baselines import Baseline
from .core import ESTIMATE_MODES, SELF_INCREMENT, PolicyConfig
from .dispatch import Strategy
from .stochastic import IntDistribution, TrafficConfig
from .update import Pull, Push


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    M: int
    services: tuple[IntDistribution, ...]
    epsilons: tuple[float, ...]
    policies: tuple[PolicyConfig, ...]
    slots: int
    arrival: IntDistribution = field(default_factory=lambda: IntDistribution.poisson(0.0))
    dispatcher_probs: tuple[float, ...] | None = None
    warmup: int | None = None
    batch_size: int | None = None
    replications: int = 1
    seed: int = 0
    output_path: str = "out"
    name: str = "experiment"

    def __post_init__(self):
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("epsilons must be a nonempty list of values > 0")
        if any(a <= b for a, b in zip(self.epsilons, self.epsilons[1:])):
            raise ConfigError("epsilons must be strictly decreasing")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.slots < 1:
            raise ConfigError("slots must be >= 1")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for pol in self.policies:
            try:
                pol.validate_for(self.M, self.N)
            except ValueError as e:
                raise ConfigError(f"policy {pol.label}: {e}") from e
        for eps in self.epsilons:
            self.traffic(eps)

    @property
    def N(self) -> int:
        return len(self.services)

    @property
    def mu_sum(self) -> float:
        return sum(s.mean() for s in self.services)

    def traffic(self, epsilon: float) -> TrafficConfig:
        try:
            return TrafficConfig.build(self.services, epsilon, self.M, self.arrival, self.dispatcher_probs)
        except ValueError as e:
            raise ConfigError(f"traffic at epsilon={epsilon}: {e}") from e


def _dist(d) -> IntDistribution:
    if not isinstance(d, dict):
        raise ConfigError(f"distribution must be a mapping with a 'kind' key, got {d!r}")
    d = {k: v for k, v in d.items() if k != "count"}
    try:
        return IntDistribution.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad distribution {d!r}: {e}") from e


def parse_policy(d: dict) -> PolicyConfig:
    if not isinstance(d, dict):
        raise ConfigError(f"policy must be a mapping, got {d!r}")
    try:
        kind = str(d.get("kind", ""))
        name = d.get("name")
        if kind.startswith("baseline:"):
            return PolicyConfig(baseline=Baseline(kind.split(":", 1)[1], int(d.get("d", 2))), name=name)
        s = d["strategy"]
        strategy = Strategy(s["kind"], s.get("d"), tuple(s["table"]) if "table" in s else None)
        u = d["update"]
        if u["kind"] == "push":
            update = Push(float(u["p_hat"]), int(u.get("d", 1)))
        elif u["kind"] == "pull":
            update = Pull(float(u["p_hat"]))
        else:
            raise ConfigError(f"update kind must be push or pull, got {u['kind']!r}")
        mode = d.get("estimate_mode", SELF_INCREMENT)
        if mode not in ESTIMATE_MODES:
            raise ConfigError(f"estimate_mode must be one of {ESTIMATE_MODES}")
        return PolicyConfig(strategy, update, mode, name=name)
    except KeyError as e:
        raise ConfigError(f"policy is missing key {e}") from e
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"bad policy {d!r}: {e}") from e


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        tr = raw["traffic"]
        services = []
        for s in tr["services"]:
            services.extend([_dist(s)] * int(s.get("count", 1)) if isinstance(s, dict) else [_dist(s)])
        if "N" in raw and int(raw["N"]) != len(services):
            raise ConfigError(f"N={raw['N']} but {len(services)} services are listed")
        pols = raw.get("policies") or ([raw["policy"]] if "policy" in raw else [])
        probs = tr.get("dispatcher_probs")
        M = int(raw.get("M", len(probs) if probs else 1))
        if probs is not None and len(probs) != M:
            raise ConfigError(f"dispatcher_probs has {len(probs)} entries, M={M}")
        return ExperimentConfig(
            M=M,
            services=tuple(services),
            epsilons=tuple(float(e) for e in tr["epsilons"]),
            policies=tuple(parse_policy(p) for p in pols),
            slots=int(raw["slots"]),
            arrival=_dist(tr.get("arrival", {"kind": "poisson"})),
            dispatcher_probs=tuple(float(p) for p in probs) if probs is not None else None,
            warmup=int(raw["warmup"]) if raw.get("warmup") is not None else None,
            batch_size=int(raw["batch_size"]) if raw.get("batch_size") is not None else None,
            replications=int(raw.get("replications", 1)),
            seed=int(raw.get("seed", 0)),
            output_path=str(raw.get("output_path", "out")),
            name=str(raw.get("name", "experiment")),
        )
    except KeyError as e:
        raise ConfigError(f"missing required key {e}") from e


def read_yaml(path) -> dict:
    try:
        with open(path) as f:
            return yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse {path}{where}: {getattr(e, 'problem', e)}") from e


def load_config(path) -> ExperimentConfig:
    return config_from_dict(read_yaml(path))
