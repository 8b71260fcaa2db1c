"""Push- and pull-based refresh of the dispatchers' local estimates.

The update functions here consume pre-drawn uniforms so that the same slot can
be replayed exactly (see ``core.apply_slot``). Layout of the per-slot update
uniforms:

* Push: for dispatcher m, ``u[m*(1+d)]`` is the sampling coin and the next
  ``d`` entries drive a partial Fisher-Yates draw of d distinct servers.
* Pull: for server n, ``u[2n]`` picks the dispatcher, ``u[2n+1]`` is the
  report coin for a non-idle server.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .stochastic import TrafficConfig


class UpdateConditionError(ValueError):
    """The per-slot update probability bound is zero."""


@dataclass(frozen=True)
class Push:
    p_hat: float
    d: int = 1

    def __post_init__(self):
        # p_hat = 0 is accepted so the degenerate case can be examined
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError(f"push p_hat must be in [0, 1], got {self.p_hat}")
        if self.d < 1:
            raise ValueError(f"push d must be >= 1, got {self.d}")

    kind = "push"

    def width(self, M: int, N: int) -> int:
        return M * (1 + self.d)


@dataclass(frozen=True)
class Pull:
    p_hat: float

    def __post_init__(self):
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError(f"pull p_hat must be in [0, 1], got {self.p_hat}")

    kind = "pull"

    def width(self, M: int, N: int) -> int:
        return 2 * N


UpdateStrategy = Push | Pull


@dataclass
class UpdateOutcome:
    indicators: np.ndarray  # (M, N) bool
    messages: int


def sample_distinct(N: int, u) -> np.ndarray:
    """len(u) distinct indices from range(N), partial Fisher-Yates driven by u."""
    pool = list(range(N))
    out = []
    for i, ui in enumerate(u):
        j = i + min(int(ui * (N - i)), N - i - 1)
        pool[i], pool[j] = pool[j], pool[i]
        out.append(pool[i])
    return np.array(out, dtype=np.int64)


def push_update(N: int, arrivals_per_dispatcher, strat: Push, u) -> UpdateOutcome:
    """Each dispatcher that received arrivals samples d servers w.p. p_hat.

    A probe is a query plus a reply: 2 messages per sampled server.
    """
    if strat.d > N:
        raise ValueError(f"push d={strat.d} exceeds N={N}")
    arrivals = np.asarray(arrivals_per_dispatcher)
    M = arrivals.size
    ind = np.zeros((M, N), dtype=bool)
    messages = 0
    w = 1 + strat.d
    for m in range(M):
        if arrivals[m] == 0:
            continue
        block = u[m * w:(m + 1) * w]
        if block[0] < strat.p_hat:
            ind[m, sample_distinct(N, block[1:])] = True
            messages += 2 * strat.d
    return UpdateOutcome(ind, messages)


def pull_update(M: int, departures, queues_end, strat: Pull, u) -> UpdateOutcome:
    """Servers with completed tasks report to one uniformly chosen dispatcher.

    An idle server always reports (n, 0); a busy one reports its length w.p.
    p_hat. One message per report.
    """
    departures = np.asarray(departures)
    queues_end = np.asarray(queues_end)
    N = departures.size
    ind = np.zeros((M, N), dtype=bool)
    messages = 0
    for n in range(N):
        if departures[n] <= 0:
            continue
        m = min(int(u[2 * n] * M), M - 1)
        if queues_end[n] == 0 or u[2 * n + 1] < strat.p_hat:
            ind[m, n] = True
            messages += 1
    return UpdateOutcome(ind, messages)


def min_service_activity(traffic: TrafficConfig) -> float:
    """min_n P(S_n > 0): a busy server completes a task at least this often."""
    return float(min(s.prob_positive() for s in traffic.service))


def analytic_update_lower_bound(strat: UpdateStrategy, traffic: TrafficConfig) -> float:
    """Lower bound p on P(I^m_n = 1) per (m, n) and slot.

    Push: P(A^m > 0) * p_hat * d / N, exact for every state.
    Pull: p_hat * min_n P(S_n > 0) / M. This holds for every state in which
    server n is nonempty at slot start; an empty server that receives no
    arrivals completes nothing and so cannot report.
    """
    if isinstance(strat, Push):
        p0 = float(traffic.prob_dispatcher_active().min())
        p = p0 * strat.p_hat * min(strat.d, traffic.N) / traffic.N
    else:
        p = strat.p_hat * min_service_activity(traffic) / traffic.M
    if not p > 0:
        raise UpdateConditionError(f"update probability bound is 0 for {strat}")
    return p
