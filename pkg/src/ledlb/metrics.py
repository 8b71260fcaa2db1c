"""Steady-state estimation (warmup + batch means) and heavy-traffic observables."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from . import kernel
from .stochastic import RngStream, TrafficConfig, generate_services

SCALARS = ("sum_q", "qperp_sq", "u1", "u2sq", "messages", "arrivals")
DEFAULT_BATCHES = 50
MIN_BATCHES = 10


class InsufficientDataError(ValueError):
    pass


def zeta(traffic: TrafficConfig) -> float:
    """Total arrival variance plus total service variance, from analytic moments."""
    return traffic.total_arrival.variance() + sum(s.variance() for s in traffic.service)


def perp_component(q) -> tuple[np.ndarray, float]:
    """Split q along c = (1,...,1)/sqrt(N): returns (q_perp, norm of the parallel part)."""
    q = np.asarray(q, dtype=float)
    return q - q.mean(), abs(q.sum()) / math.sqrt(q.size)


def default_warmup(epsilon: float) -> int:
    return int(max(100_000, math.ceil(20 / epsilon)))


def batch_means(series, batch_size: int) -> tuple[float, float]:
    """Mean and batch-means standard error; a trailing partial batch is dropped."""
    x = np.asarray(series, dtype=float)
    B = x.size // batch_size
    if B < 2:
        raise InsufficientDataError("need at least two full batches")
    means = x[: B * batch_size].reshape(B, batch_size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(B))


def _mean_se(batches: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B = batches.shape[0]
    return batches.mean(axis=0), batches.std(axis=0, ddof=1) / math.sqrt(B)


@dataclass
class MetricsAccumulator:
    """Batch-level sums of every observable, recorded from slot ``warmup_slots`` on.

    Scalars are kept as batch means. Per-(m, n) quantities keep batch sums:
    estimation error |Q - Q~|, update counts, and update counts restricted to
    slots where the server was busy at slot start (with the busy counts).
    """

    M: int
    N: int
    warmup_slots: int
    batch_size: int
    track_estimates: bool = True
    scalar_batches: list = field(default_factory=list)
    x_batches: list = field(default_factory=list)
    i_batches: list = field(default_factory=list)
    busy_batches: list = field(default_factory=list)
    busy_i_batches: list = field(default_factory=list)
    max_sum_q: int = 0
    max_queue: int = 0
    # partial batch for slot-by-slot recording
    _scal: list = field(default_factory=list, repr=False)
    _mat: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def n_batches(self) -> int:
        return len(self.scalar_batches)

    def record_block(self, scal, x_sum, i_cnt, busy_cnt, busy_i):
        """Whole batches produced by ``kernel.run_block`` with record on."""
        B = x_sum.shape[0]
        if scal.shape[0] != B * self.batch_size:
            raise ValueError("block must hold a whole number of batches")
        if self._scal:
            raise ValueError("cannot mix block recording into a partial batch")
        per = scal.reshape(B, self.batch_size, kernel.N_SCALARS)
        means = per[:, :, : len(SCALARS)].mean(axis=1)
        self.scalar_batches.extend(means)
        self.x_batches.extend(x_sum)
        self.i_batches.extend(i_cnt)
        self.busy_batches.extend(busy_cnt)
        self.busy_i_batches.extend(busy_i)
        if scal.shape[0]:
            self.max_sum_q = max(self.max_sum_q, int(scal[:, kernel.SUM_Q].max()))
            self.max_queue = max(self.max_queue, int(scal[:, kernel.MAX_Q].max()))

    def record_slot(self, state, slot):
        """Record one transition; ``state`` is the slot-start state that produced ``slot``."""
        if state.slot < self.warmup_slots:
            return
        q = state.queues
        qperp, _ = perp_component(q)
        u = slot.unused
        self._scal.append((
            float(q.sum()), float(qperp @ qperp), float(u.sum()), float(u @ u),
            float(slot.messages), float(slot.arrivals_per_dispatcher.sum()),
        ))
        busy = q > 0
        x = np.abs(q[None, :] - state.estimates) if self.track_estimates else np.zeros((self.M, self.N))
        ind = slot.update_indicators.astype(np.int64)
        self._mat.append((x, ind, busy.astype(np.int64), ind * busy[None, :]))
        self.max_sum_q = max(self.max_sum_q, int(q.sum()))
        self.max_queue = max(self.max_queue, int(q.max()))
        if len(self._scal) == self.batch_size:
            self.scalar_batches.append(np.mean(self._scal, axis=0))
            for dst, k in ((self.x_batches, 0), (self.i_batches, 1),
                           (self.busy_batches, 2), (self.busy_i_batches, 3)):
                dst.append(np.sum([row[k] for row in self._mat], axis=0))
            self._scal, self._mat = [], []

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        """Pool the batches of two accumulators with the same layout."""
        if (self.M, self.N, self.batch_size) != (other.M, other.N, other.batch_size):
            raise ValueError("accumulators differ in layout")
        out = MetricsAccumulator(self.M, self.N, self.warmup_slots, self.batch_size,
                                 self.track_estimates and other.track_estimates)
        for name in ("scalar_batches", "x_batches", "i_batches", "busy_batches", "busy_i_batches"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.max_sum_q = max(self.max_sum_q, other.max_sum_q)
        out.max_queue = max(self.max_queue, other.max_queue)
        return out


@dataclass
class HeavyTrafficSummary:
    epsilon: float
    lam_sum: float
    mu_sum: float
    n_batches: int
    slots: int
    mean_sum_q: float
    se_sum_q: float
    scaled: float
    zeta_half: float
    ratio: float
    ratio_se: float
    mean_delay: float
    se_delay: float
    mean_u1: float
    se_u1: float
    mean_u2sq: float
    se_u2sq: float
    mean_qperp_sq: float
    se_qperp_sq: float
    mean_x_max: float
    messages_per_arrival: float
    max_sum_q: int
    x_mean: np.ndarray = field(repr=False, default=None)
    x_se: np.ndarray = field(repr=False, default=None)
    update_freq: np.ndarray = field(repr=False, default=None)
    update_freq_se: np.ndarray = field(repr=False, default=None)
    busy_update_freq: np.ndarray = field(repr=False, default=None)
    busy_update_freq_se: np.ndarray = field(repr=False, default=None)

    @classmethod
    def csv_fields(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.repr]

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.csv_fields()}


def summarize(acc: MetricsAccumulator, traffic: TrafficConfig) -> HeavyTrafficSummary:
    B = acc.n_batches
    if B < MIN_BATCHES:
        raise InsufficientDataError(f"{B} batches recorded, need at least {MIN_BATCHES}")
    sb = np.asarray(acc.scalar_batches)
    mean, se = _mean_se(sb)
    col = {name: i for i, name in enumerate(SCALARS)}
    eps = traffic.epsilon
    zh = zeta(traffic) / 2
    lam = traffic.lam_sum
    sum_q, sum_q_se = mean[col["sum_q"]], se[col["sum_q"]]
    arrivals_total = sb[:, col["arrivals"]].sum()
    msgs_per_arrival = sb[:, col["messages"]].sum() / arrivals_total if arrivals_total else 0.0

    nan = np.full((acc.M, acc.N), np.nan)
    x_mean = x_se = nan
    if acc.track_estimates:
        x_mean, x_se = _mean_se(np.asarray(acc.x_batches) / acc.batch_size)
    freq, freq_se = _mean_se(np.asarray(acc.i_batches) / acc.batch_size)
    busy = np.asarray(acc.busy_batches, dtype=float)[:, None, :]
    busy_i = np.asarray(acc.busy_i_batches, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        pooled = busy_i.sum(axis=0) / busy.sum(axis=0)
        per_batch = np.where(busy > 0, busy_i / busy, np.nan)
    n_ok = np.sum(~np.isnan(per_batch), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"), warnings.catch_warnings():
        # a server busy in fewer than two batches has no SE; nan is the answer
        warnings.simplefilter("ignore", RuntimeWarning)
        busy_se = np.nanstd(per_batch, axis=0, ddof=1) / np.sqrt(n_ok) if B > 1 else nan

    return HeavyTrafficSummary(
        epsilon=eps,
        lam_sum=lam,
        mu_sum=traffic.mu_sum,
        n_batches=B,
        slots=B * acc.batch_size,
        mean_sum_q=float(sum_q),
        se_sum_q=float(sum_q_se),
        scaled=float(eps * sum_q),
        zeta_half=zh,
        ratio=float(eps * sum_q / zh) if zh > 0 else math.nan,
        ratio_se=float(eps * sum_q_se / zh) if zh > 0 else math.nan,
        mean_delay=float(sum_q / lam) if lam > 0 else math.nan,
        se_delay=float(sum_q_se / lam) if lam > 0 else math.nan,
        mean_u1=float(mean[col["u1"]]),
        se_u1=float(se[col["u1"]]),
        mean_u2sq=float(mean[col["u2sq"]]),
        se_u2sq=float(se[col["u2sq"]]),
        mean_qperp_sq=float(mean[col["qperp_sq"]]),
        se_qperp_sq=float(se[col["qperp_sq"]]),
        mean_x_max=float(np.max(x_mean)) if acc.track_estimates else math.nan,
        messages_per_arrival=float(msgs_per_arrival),
        max_sum_q=int(acc.max_sum_q),
        x_mean=x_mean,
        x_se=x_se,
        update_freq=freq,
        update_freq_se=freq_se,
        busy_update_freq=pooled,
        busy_update_freq_se=busy_se,
    )


def resource_pooled_sim(traffic: TrafficConfig, slots: int, rng: RngStream,
                        warmup: int | None = None, batch_size: int | None = None,
                        chunk: int = 1 << 16) -> HeavyTrafficSummary:
    """One queue fed by A_sum and served by S_sum = sum_n S_n."""
    warmup = default_warmup(traffic.epsilon) if warmup is None else warmup
    batch_size = batch_size or max(1, slots // DEFAULT_BATCHES)
    acc = MetricsAccumulator(1, 1, warmup, batch_size, track_estimates=False)
    q = 0
    left = warmup
    dummy = np.zeros((0, kernel.N_SCALARS))
    while left > 0:
        T = min(chunk, left)
        a = traffic.total_arrival.draw(rng.gen, T)
        s = generate_services(traffic, rng, T).sum(axis=1)
        q = kernel.pooled_block(q, a, s, False, dummy)
        left -= T
    per_chunk = max(1, chunk // batch_size)
    remaining = slots // batch_size
    while remaining > 0:
        B = min(per_chunk, remaining)
        T = B * batch_size
        a = traffic.total_arrival.draw(rng.gen, T)
        s = generate_services(traffic, rng, T).sum(axis=1)
        scal = np.zeros((T, kernel.N_SCALARS))
        q = kernel.pooled_block(q, a, s, True, scal)
        z = np.zeros((B, 1, 1))
        acc.record_block(scal, z, z.astype(np.int64), np.zeros((B, 1), np.int64), z.astype(np.int64))
        remaining -= B
    return summarize(acc, traffic)
