"""Fresh-information baselines: JSQ, power-of-d with fresh probes, JIQ.

All read the true queue lengths at slot start, so every dispatcher sees the
same state within a slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .update import sample_distinct

BASELINE_KINDS = ("jsq", "pod", "jiq")


@dataclass(frozen=True)
class Baseline:
    kind: str
    d: int = 2

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}")
        if self.kind == "pod" and self.d < 2:
            raise ValueError("fresh power-of-d needs d >= 2")

    @property
    def label(self) -> str:
        return {"jsq": "JSQ", "pod": f"Po{self.d}", "jiq": "JIQ"}[self.kind]

    def route_width(self) -> int:
        return self.d if self.kind == "pod" else 1

    def decision_messages(self, N: int) -> int:
        """Messages charged per dispatching decision (JIQ pays per idle report instead)."""
        if self.kind == "jsq":
            return 2 * N
        if self.kind == "pod":
            return 2 * self.d
        return 0


def _uniform_pick(candidates: np.ndarray, u: float) -> int:
    return int(candidates[min(int(u * candidates.size), candidates.size - 1)])


def baseline_route(kind: Baseline, true_queues, mu, u) -> int:
    """Server chosen for one dispatcher's batch; ``u`` holds route_width() uniforms."""
    q = np.asarray(true_queues)
    N = q.size
    if kind.kind == "jsq":
        return _uniform_pick(np.flatnonzero(q == q.min()), u[0])
    if kind.kind == "pod":
        if not 2 <= kind.d <= N:
            raise ValueError(f"pod needs 2 <= d <= N (d={kind.d}, N={N})")
        probe = sample_distinct(N, u[:kind.d])
        # shortest probed queue, lowest index on ties
        return int(min(probe, key=lambda n: (q[n], n)))
    idle = np.flatnonzero(q == 0)
    if idle.size:
        return _uniform_pick(idle, u[0])
    return _uniform_pick(np.arange(N), u[0])
