"""Integer-valued light-tailed arrival/service processes and seeded streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KINDS = ("poisson", "geometric", "bounded_uniform", "bernoulli_scaled", "deterministic")


@dataclass(frozen=True)
class IntDistribution:
    """A nonnegative integer distribution with closed-form moments.

    Parameterisation per kind:

    * ``poisson``: ``mean``
    * ``geometric``: ``mean``; support {0, 1, 2, ...}, P(k) = q (1-q)^k with q = 1/(1+mean)
    * ``bounded_uniform``: ``lo``, ``hi``; uniform on the integers lo..hi inclusive
    * ``bernoulli_scaled``: ``batch``, ``prob``; ``batch`` w.p. ``prob``, else 0
    * ``deterministic``: ``value``
    """

    kind: str
    mean_: float = 0.0
    lo: int = 0
    hi: int = 0
    batch: int = 1
    prob: float = 0.0
    value: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind in ("poisson", "geometric") and not self.mean_ >= 0:
            raise ValueError(f"{self.kind} mean must be >= 0, got {self.mean_}")
        if self.kind == "bounded_uniform" and not 0 <= self.lo <= self.hi:
            raise ValueError(f"bounded_uniform needs 0 <= lo <= hi, got ({self.lo}, {self.hi})")
        if self.kind == "bernoulli_scaled":
            if self.batch < 0 or not 0.0 <= self.prob <= 1.0:
                raise ValueError("bernoulli_scaled needs batch >= 0 and prob in [0, 1]")
        if self.kind == "deterministic" and self.value < 0:
            raise ValueError("deterministic value must be >= 0")

    # constructors ---------------------------------------------------------

    @classmethod
    def poisson(cls, mean: float) -> "IntDistribution":
        return cls("poisson", mean_=float(mean))

    @classmethod
    def geometric(cls, mean: float) -> "IntDistribution":
        return cls("geometric", mean_=float(mean))

    @classmethod
    def bounded_uniform(cls, lo: int, hi: int) -> "IntDistribution":
        return cls("bounded_uniform", lo=int(lo), hi=int(hi))

    @classmethod
    def bernoulli_scaled(cls, batch: int, prob: float) -> "IntDistribution":
        return cls("bernoulli_scaled", batch=int(batch), prob=float(prob))

    @classmethod
    def deterministic(cls, value: int) -> "IntDistribution":
        return cls("deterministic", value=int(value))

    def with_mean(self, mean: float) -> "IntDistribution":
        """Same family, rescaled to ``mean`` (only for families with a free rate)."""
        if self.kind in ("poisson", "geometric"):
            return IntDistribution(self.kind, mean_=float(mean))
        if self.kind == "bernoulli_scaled":
            return IntDistribution.bernoulli_scaled(self.batch, mean / self.batch)
        raise ValueError(f"{self.kind} has no free rate parameter; give it explicitly")

    # moments --------------------------------------------------------------

    def mean(self) -> float:
        k = self.kind
        if k in ("poisson", "geometric"):
            return self.mean_
        if k == "bounded_uniform":
            return (self.lo + self.hi) / 2
        if k == "bernoulli_scaled":
            return self.batch * self.prob
        return float(self.value)

    def variance(self) -> float:
        k = self.kind
        if k == "poisson":
            return self.mean_
        if k == "geometric":
            return self.mean_ * (1.0 + self.mean_)
        if k == "bounded_uniform":
            w = self.hi - self.lo + 1
            return (w * w - 1) / 12
        if k == "bernoulli_scaled":
            return self.batch**2 * self.prob * (1.0 - self.prob)
        return 0.0

    def pgf(self, z: float) -> float:
        """E[z^X]."""
        k = self.kind
        if k == "poisson":
            return math.exp(self.mean_ * (z - 1.0))
        if k == "geometric":
            q = 1.0 / (1.0 + self.mean_)
            return q / (1.0 - (1.0 - q) * z)
        if k == "bounded_uniform":
            return sum(z**j for j in range(self.lo, self.hi + 1)) / (self.hi - self.lo + 1)
        if k == "bernoulli_scaled":
            return 1.0 - self.prob + self.prob * z**self.batch
        return z**self.value

    def prob_zero(self) -> float:
        return self.pgf(0.0)

    def prob_positive(self) -> float:
        return 1.0 - self.prob_zero()

    # sampling -------------------------------------------------------------

    def draw(self, gen: np.random.Generator, size=None) -> np.ndarray:
        k = self.kind
        if k == "poisson":
            out = gen.poisson(self.mean_, size)
        elif k == "geometric":
            if self.mean_ == 0:
                out = np.zeros(size, dtype=np.int64)
            else:
                out = gen.geometric(1.0 / (1.0 + self.mean_), size) - 1
        elif k == "bounded_uniform":
            out = gen.integers(self.lo, self.hi + 1, size)
        elif k == "bernoulli_scaled":
            out = self.batch * (gen.random(size) < self.prob)
        else:
            out = np.full(size if size is not None else (), self.value)
        return np.asarray(out, dtype=np.int64)

    def to_dict(self) -> dict:
        if self.kind in ("poisson", "geometric"):
            return {"kind": self.kind, "mean": self.mean_}
        if self.kind == "bounded_uniform":
            return {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.kind == "bernoulli_scaled":
            return {"kind": self.kind, "batch": self.batch, "prob": self.prob}
        return {"kind": self.kind, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "IntDistribution":
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in KINDS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        if kind in ("poisson", "geometric"):
            return cls(kind, mean_=float(d.get("mean", 0.0)))
        if kind == "bounded_uniform":
            return cls.bounded_uniform(d["lo"], d["hi"])
        if kind == "bernoulli_scaled":
            return cls.bernoulli_scaled(d["batch"], d.get("prob", 0.0))
        return cls.deterministic(d["value"])


@dataclass
class RngStream:
    """One reproducible random stream; ``stream_id`` indexes independent replications.

    Streams are children of ``SeedSequence(seed)`` via spawn keys, so distinct ids
    give independent PCG64 states.
    """

    seed: int
    stream_id: int = 0
    gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        self.gen = np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class TrafficConfig:
    total_arrival: IntDistribution
    dispatcher_probs: tuple[float, ...]
    service: tuple[IntDistribution, ...]
    epsilon: float
    # deterministic toy systems have no mass at 0; allowed only when asked for
    require_idle_mass: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dispatcher_probs", tuple(float(p) for p in self.dispatcher_probs))
        object.__setattr__(self, "service", tuple(self.service))
        p = np.asarray(self.dispatcher_probs)
        if p.size == 0 or np.any(p <= 0):
            raise ValueError("dispatcher_probs: every p_m must be > 0")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"dispatcher_probs must sum to 1 (got {p.sum():.12g})")
        if not self.service:
            raise ValueError("service: need at least one server")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0 (got {self.epsilon})")
        lam, mu = self.total_arrival.mean(), self.mu_sum
        if abs(lam - (mu - self.epsilon)) > 1e-9 * max(1.0, mu):
            raise ValueError(
                f"arrival mean {lam} != mu_sum - epsilon = {mu - self.epsilon}"
            )
        if self.require_idle_mass and not self.total_arrival.prob_zero() > 0:
            raise ValueError("total_arrival must have positive mass at 0")

    @classmethod
    def build(
        cls,
        service: Sequence[IntDistribution],
        epsilon: float,
        M: int = 1,
        arrival: IntDistribution | None = None,
        dispatcher_probs: Sequence[float] | None = None,
        **kw,
    ) -> "TrafficConfig":
        """Fix the arrival mean at mu_sum - epsilon (Poisson unless a template is given)."""
        mu = sum(s.mean() for s in service)
        template = arrival if arrival is not None else IntDistribution.poisson(0.0)
        if template.kind in ("poisson", "geometric", "bernoulli_scaled"):
            template = template.with_mean(mu - epsilon)
        probs = dispatcher_probs if dispatcher_probs is not None else [1.0 / M] * M
        return cls(template, tuple(probs), tuple(service), epsilon, **kw)

    @property
    def M(self) -> int:
        return len(self.dispatcher_probs)

    @property
    def N(self) -> int:
        return len(self.service)

    @property
    def mu(self) -> np.ndarray:
        return np.array([s.mean() for s in self.service], dtype=float)

    @property
    def mu_sum(self) -> float:
        return float(sum(s.mean() for s in self.service))

    @property
    def lam_sum(self) -> float:
        return self.total_arrival.mean()

    @property
    def dispatcher_rates(self) -> np.ndarray:
        return self.lam_sum * np.asarray(self.dispatcher_probs)

    def prob_dispatcher_active(self) -> np.ndarray:
        """P(A^m > 0) under multinomial thinning: 1 - PGF_{A_sum}(1 - p_m)."""
        return np.array([1.0 - self.total_arrival.pgf(1.0 - p) for p in self.dispatcher_probs])


def sample(dist: IntDistribution, rng: RngStream) -> int:
    return int(dist.draw(rng.gen))


def generate_arrivals(cfg: TrafficConfig, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Per-dispatcher arrivals: A_sum drawn, then split by multinomial thinning.

    Returns shape (M,) or (size, M).
    """
    total = cfg.total_arrival.draw(rng.gen, size)
    return np.asarray(rng.gen.multinomial(total, cfg.dispatcher_probs), dtype=np.int64)


def generate_services(cfg: TrafficConfig, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Independent offered service per server; shape (N,) or (size, N)."""
    cols = [s.draw(rng.gen, size) for s in cfg.service]
    return np.stack(cols, axis=-1).astype(np.int64)
