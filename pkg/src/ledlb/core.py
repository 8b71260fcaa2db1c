"""System state and the per-slot transition.

A slot runs as: arrivals land at dispatchers; each dispatcher with arrivals
picks one server from its own estimates and sends the whole batch there;
services are drawn and queues advance by the Lindley step; estimates follow the
estimate mode; at slot end the update strategy overwrites some estimates with
the end-of-slot truth.

``apply_slot`` is the readable reference for one slot, fed with pre-drawn
randomness (``SlotNoise``). ``ledlb.kernel`` runs the same rules compiled over
long blocks; the two are checked against each other slot by slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dispatch
from .baselines import Baseline, baseline_route
from .dispatch import Strategy, check_routing
from .stochastic import RngStream, TrafficConfig, generate_arrivals, generate_services
from .update import (
    Pull,
    Push,
    UpdateConditionError,
    analytic_update_lower_bound,
    pull_update,
    push_update,
    sample_distinct,
)

STATIC = "static"
SELF_INCREMENT = "self_increment"
ESTIMATE_MODES = (STATIC, SELF_INCREMENT)


@dataclass(frozen=True)
class PolicyConfig:
    """An LED policy (strategy + update + estimate mode) or a fresh-information baseline."""

    strategy: Strategy | None = None
    update: Push | Pull | None = None
    estimate_mode: str = SELF_INCREMENT
    baseline: Baseline | None = None
    name: str | None = None

    def __post_init__(self):
        if self.baseline is None:
            if self.strategy is None or self.update is None:
                raise ValueError("an LED policy needs both a strategy and an update rule")
        elif self.strategy is not None or self.update is not None:
            raise ValueError("a baseline policy takes no strategy/update")
        if self.estimate_mode not in ESTIMATE_MODES:
            raise ValueError(f"estimate_mode must be one of {ESTIMATE_MODES}")

    @property
    def is_led(self) -> bool:
        return self.baseline is None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if not self.is_led:
            return self.baseline.label
        upd = "Push" if isinstance(self.update, Push) else "Pull"
        return f"{self.strategy.label}-{upd}"

    def route_width(self) -> int:
        if not self.is_led:
            return self.baseline.route_width()
        return self.strategy.d if self.strategy.kind == "lpod" else 1

    def update_width(self, M: int, N: int) -> int:
        return self.update.width(M, N) if self.is_led else 0

    def validate_for(self, M: int, N: int):
        if self.is_led:
            self.strategy.validate_for(N)
            if isinstance(self.update, Push) and self.update.d > N:
                raise ValueError(f"push d={self.update.d} exceeds N={N}")
        elif self.baseline.kind == "pod" and self.baseline.d > N:
            raise ValueError(f"pod d={self.baseline.d} exceeds N={N}")


@dataclass
class SystemState:
    queues: np.ndarray  # (N,)
    estimates: np.ndarray  # (M, N)
    slot: int = 0

    @classmethod
    def empty(cls, M: int, N: int) -> "SystemState":
        return cls(np.zeros(N, dtype=np.int64), np.zeros((M, N), dtype=np.int64), 0)

    def copy(self) -> "SystemState":
        return SystemState(self.queues.copy(), self.estimates.copy(), self.slot)


@dataclass
class SlotRecord:
    arrivals_per_dispatcher: np.ndarray  # (M,)
    arrivals_per_dispatcher_server: np.ndarray  # (M, N)
    arrivals_per_server: np.ndarray  # (N,)
    services: np.ndarray
    unused: np.ndarray
    departures: np.ndarray
    update_indicators: np.ndarray  # (M, N) bool
    messages: int
    chosen: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


@dataclass
class SlotNoise:
    """Exogenous randomness for T consecutive slots."""

    arrivals: np.ndarray  # (T, M)
    services: np.ndarray  # (T, N)
    u_route: np.ndarray  # (T, M, route_width)
    u_update: np.ndarray  # (T, max(update_width, 1))

    def __len__(self):
        return self.arrivals.shape[0]

    def slot(self, t: int):
        return self.arrivals[t], self.services[t], self.u_route[t], self.u_update[t]


def draw_noise(traffic: TrafficConfig, policy: PolicyConfig, rng: RngStream, T: int) -> SlotNoise:
    M, N = traffic.M, traffic.N
    arrivals = generate_arrivals(traffic, rng, T)
    services = generate_services(traffic, rng, T)
    u_route = rng.gen.random((T, M, policy.route_width()))
    u_update = rng.gen.random((T, max(policy.update_width(M, N), 1)))
    return SlotNoise(arrivals, services, u_route, u_update)


def advance_queues(queues, arrivals, services) -> tuple[np.ndarray, np.ndarray]:
    """Q' = Q + A - S + U with U = max(S - Q - A, 0)."""
    q = np.asarray(queues, dtype=np.int64)
    a = np.asarray(arrivals, dtype=np.int64)
    s = np.asarray(services, dtype=np.int64)
    unused = np.maximum(s - q - a, 0)
    return q + a - s + unused, unused


def inverse_cdf(probs: np.ndarray, u: float) -> int:
    c = np.cumsum(probs)
    i = int(np.searchsorted(c, u, side="right"))
    if i >= probs.size or probs[i] <= 0:
        i = int(np.flatnonzero(probs > 0)[-1])
    return i


def led_route(strategy: Strategy, estimates, mu, u) -> int:
    """One dispatcher's server choice from its own estimates."""
    est = np.asarray(estimates)
    if strategy.kind == "ljsq":
        ties = np.flatnonzero(est == est.min())
        return int(ties[min(int(u[0] * ties.size), ties.size - 1)])
    if strategy.kind == "lpod":
        probe = sample_distinct(est.size, u[:strategy.d])
        return int(min(probe, key=lambda n: (est[n], n)))
    if strategy.kind == "custom":
        # invert over ranks, then map the rank to its server
        return int(dispatch.rank_order(est)[inverse_cdf(np.asarray(strategy.table), u[0])])
    probs = check_routing(dispatch.strategy_probs(strategy, est, mu))
    return inverse_cdf(probs, u[0])


def apply_slot(state: SystemState, mu, policy: PolicyConfig, arrivals, services, u_route, u_update):
    """Advance ``state`` by one slot with the given randomness.

    Returns (new_state, SlotRecord); ``state`` is not modified.
    """
    mu = np.asarray(mu, dtype=float)
    arrivals = np.asarray(arrivals, dtype=np.int64)
    M, N = state.estimates.shape
    q0 = state.queues
    est = state.estimates.copy()

    amn = np.zeros((M, N), dtype=np.int64)
    chosen = np.full(M, -1, dtype=np.int64)
    messages = 0
    for m in range(M):
        if arrivals[m] == 0:
            continue
        if policy.is_led:
            n = led_route(policy.strategy, state.estimates[m], mu, u_route[m])
        else:
            n = baseline_route(policy.baseline, q0, mu, u_route[m])
            messages += policy.baseline.decision_messages(N)
        chosen[m] = n
        amn[m, n] += arrivals[m]

    if policy.is_led and policy.estimate_mode == SELF_INCREMENT:
        est += amn

    a = amn.sum(axis=0)
    q1, unused = advance_queues(q0, a, services)
    departures = np.minimum(q0 + a, services)

    ind = np.zeros((M, N), dtype=bool)
    if policy.is_led:
        if isinstance(policy.update, Push):
            out = push_update(N, arrivals, policy.update, u_update)
        else:
            out = pull_update(M, departures, q1, policy.update, u_update)
        ind = out.indicators
        messages += out.messages
        est = np.where(ind, q1[None, :], est)
    elif policy.baseline.kind == "jiq":
        # idle notifications
        messages += int(np.count_nonzero((departures > 0) & (q1 == 0)))

    record = SlotRecord(
        arrivals_per_dispatcher=arrivals.copy(),
        arrivals_per_dispatcher_server=amn,
        arrivals_per_server=a,
        services=np.asarray(services, dtype=np.int64).copy(),
        unused=unused,
        departures=departures,
        update_indicators=ind,
        messages=messages,
        chosen=chosen,
    )
    return SystemState(q1, est, state.slot + 1), record


def step(state: SystemState, traffic: TrafficConfig, policy: PolicyConfig, rng: RngStream):
    """Draw one slot of randomness from ``rng`` and apply it."""
    noise = draw_noise(traffic, policy, rng, 1)
    return apply_slot(state, traffic.mu, policy, *noise.slot(0))


def is_update_condition_satisfied(policy: PolicyConfig, traffic: TrafficConfig) -> tuple[bool, float]:
    if not policy.is_led:
        return False, 0.0
    try:
        p = analytic_update_lower_bound(policy.update, traffic)
    except UpdateConditionError:
        return False, 0.0
    return True, p
