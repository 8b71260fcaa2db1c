"""Dispatching strategies over local estimates, and the preference analysis.

Every strategy maps one dispatcher's estimate vector (plus service rates) to a
routing distribution over servers. ``compute_preference`` turns a routing
distribution into the rank-ordered preference vector; ``check_tilted`` and
``check_delta_tilted`` test its sign pattern.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

SUM_TOL = 1e-9
SIGN_TOL = 1e-12

STRATEGY_KINDS = ("weighted_random", "ljsq", "ljba", "lpod", "custom")


@dataclass(frozen=True)
class Strategy:
    kind: str
    d: int | None = None
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "lpod" and (self.d is None or self.d < 2):
            raise ValueError("lpod needs d >= 2")
        if self.kind == "custom":
            if not self.table:
                raise ValueError("custom strategy needs a rank table")
            t = np.asarray(self.table, dtype=float)
            if np.any(t < 0) or abs(t.sum() - 1.0) > SUM_TOL:
                raise ValueError("custom table must be a probability vector over ranks")
            object.__setattr__(self, "table", tuple(float(x) for x in t))

    @property
    def label(self) -> str:
        return {"weighted_random": "WR", "ljsq": "L-JSQ", "ljba": "L-JBA",
                "lpod": "L-Pod", "custom": "Custom"}[self.kind]

    def validate_for(self, N: int):
        if self.kind == "lpod" and not 2 <= self.d <= N:
            raise ValueError(f"lpod needs 2 <= d <= N (d={self.d}, N={N})")
        if self.kind == "custom" and len(self.table) != N:
            raise ValueError(f"custom table has {len(self.table)} ranks, need N={N}")


@dataclass(frozen=True)
class PreferenceVector:
    delta: np.ndarray
    sort_perm: np.ndarray


class RoutingError(ValueError):
    pass


def check_routing(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if np.any(p < -SUM_TOL) or abs(p.sum() - 1.0) > SUM_TOL:
        raise RoutingError(f"routing distribution must be a probability vector (sum={p.sum():.12g})")
    return p


def rank_order(estimates) -> np.ndarray:
    """Servers sorted by (estimate, index)."""
    return np.argsort(np.asarray(estimates), kind="stable")


def weighted_random_probs(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    total = mu.sum()
    if not total > 0:
        raise ValueError("weighted random routing needs a positive total service rate")
    return mu / total


def ljsq_probs(estimates, mu=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Shortest local estimate.

    With ``rng`` the tie among minima is resolved now and the result is a point
    mass on the chosen server; without it, the mass is split evenly over ties.
    """
    est = np.asarray(estimates)
    ties = np.flatnonzero(est == est.min())
    p = np.zeros(est.size)
    if rng is None:
        p[ties] = 1.0 / ties.size
    else:
        p[ties[rng.integers(ties.size)]] = 1.0
    return p


def ljba_probs(estimates, mu) -> np.ndarray:
    """Rate-weighted choice among servers at or below the mean estimate."""
    est = np.asarray(estimates, dtype=np.int64)
    mu = np.asarray(mu, dtype=float)
    # integer form of est <= mean(est)
    below = est * est.size <= est.sum()
    w = np.where(below, mu, 0.0)
    return w / w.sum()


def lpod_rank_probs(N: int, d: int) -> np.ndarray:
    """P(the rank-i server is picked) when the best of a uniform d-subset wins."""
    if not 2 <= d <= N:
        raise ValueError(f"lpod needs 2 <= d <= N (d={d}, N={N})")
    total = comb(N, d)
    return np.array([(comb(N - i + 1, d) - comb(N - i, d)) / total for i in range(1, N + 1)])


def lpod_probs(estimates, d: int) -> np.ndarray:
    est = np.asarray(estimates)
    order = rank_order(est)
    p = np.empty(est.size)
    p[order] = lpod_rank_probs(est.size, d)
    return p


def custom_probs(estimates, table) -> np.ndarray:
    est = np.asarray(estimates)
    p = np.empty(est.size)
    p[rank_order(est)] = np.asarray(table, dtype=float)
    return p


def strategy_probs(strategy: Strategy, estimates, mu, rng=None) -> np.ndarray:
    k = strategy.kind
    if k == "weighted_random":
        return weighted_random_probs(mu)
    if k == "ljsq":
        return ljsq_probs(estimates, mu, rng)
    if k == "ljba":
        return ljba_probs(estimates, mu)
    if k == "lpod":
        return lpod_probs(estimates, strategy.d)
    return custom_probs(estimates, strategy.table)


def compute_preference(probs, estimates, mu) -> PreferenceVector:
    """Delta_n = beta at the n-th shortest estimate, beta = P - mu/mu_sum.

    Equal estimates are ordered by decreasing routing probability, then by index.
    Any order of tied servers is a legal sort permutation; this one lets a
    tie-broken point mass read as "shortest first".
    """
    p = check_routing(probs)
    est = np.asarray(estimates)
    beta = p - weighted_random_probs(mu)
    perm = np.lexsort((np.arange(est.size), -p, est))
    return PreferenceVector(beta[perm], perm)


def check_tilted(pref, tol: float = SIGN_TOL) -> tuple[bool, int | None]:
    """Smallest k in 2..N with Delta >= 0 on ranks 1..k-1 and <= 0 on ranks k..N.

    Reading the rank-k inequality on both sides would force Delta_k = 0, which
    L-JSQ (one positive entry, the rest negative) never satisfies; the split
    form is the one under which L-JSQ is tilted.
    """
    delta = np.asarray(getattr(pref, "delta", pref), dtype=float)
    N = delta.size
    if N == 1:
        return True, 1
    nonneg = delta >= -tol
    nonpos = delta <= tol
    # prefix_ok[j]: ranks 1..j+1 nonneg; suffix_ok[j]: ranks j+1..N nonpos
    prefix_ok = np.cumprod(nonneg).astype(bool)
    suffix_ok = np.cumprod(nonpos[::-1])[::-1].astype(bool)
    for k in range(2, N + 1):
        if prefix_ok[k - 2] and suffix_ok[k - 1]:
            return True, k
    return False, None


def check_delta_tilted(pref, delta_min: float, tol: float = SIGN_TOL) -> bool:
    if not delta_min > 0:
        raise ValueError("delta_min must be > 0")
    delta = np.asarray(getattr(pref, "delta", pref), dtype=float)
    tilted, _ = check_tilted(delta, tol)
    return tilted and delta[0] >= delta_min - tol and delta[-1] <= -delta_min + tol


def corner_states(N: int) -> list[np.ndarray]:
    ramp = np.arange(N)
    states = [np.zeros(N, dtype=np.int64), ramp.copy(), ramp[::-1].copy()]
    for n in range(N):
        hot = np.zeros(N, dtype=np.int64)
        hot[n] = 1
        states.append(hot)
        cold = np.ones(N, dtype=np.int64)
        cold[n] = 0
        states.append(cold)
    return states


def certify_strategy(strategy: Strategy, mu, trials: int, rng: np.random.Generator) -> tuple[bool, float]:
    """Check the tilt on corner states plus ``trials`` random estimate vectors.

    Returns (tilted on every state, min over states of min(Delta_1, -Delta_N)).
    States with all estimates equal count for the tilt but not for the margin:
    the balancing term (estimate - mean estimate) is zero there whatever the
    routing, and any rate-weighted rule (L-JBA included) has Delta = 0 on them.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    mu = np.asarray(mu, dtype=float)
    N = mu.size
    strategy.validate_for(N)
    states = corner_states(N)
    for _ in range(trials):
        hi = int(rng.choice([2, N + 1, 50, 1000]))
        states.append(rng.integers(0, hi, N))
    always, worst = True, np.inf
    for est in states:
        pref = compute_preference(strategy_probs(strategy, est, mu, rng), est, mu)
        always &= check_tilted(pref)[0]
        if np.any(est != est[0]):
            worst = min(worst, pref.delta[0], -pref.delta[-1])
    return bool(always), float(worst)


def analytic_delta(strategy: Strategy, mu) -> float | None:
    """Closed-form delta for the named strategies, None when there is none."""
    mu = np.asarray(mu, dtype=float)
    N = mu.size
    if strategy.kind == "ljsq":
        return float(mu.min() / mu.sum())
    if strategy.kind == "lpod" and np.allclose(mu, mu[0]):
        return 1.0 / N
    if strategy.kind == "weighted_random":
        return 0.0
    return None
