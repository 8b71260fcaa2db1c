"""Long runs: warmup then measured batches, through the compiled kernel."""
from __future__ import annotations

import numpy as np

from . import kernel
from .core import SELF_INCREMENT, PolicyConfig, SystemState, draw_noise
from .metrics import DEFAULT_BATCHES, MetricsAccumulator, default_warmup
from .stochastic import RngStream, TrafficConfig
from .update import Push

CHUNK = 1 << 15

_STRATEGY_CODES = {"weighted_random": kernel.WR, "ljsq": kernel.LJSQ, "ljba": kernel.LJBA,
                   "lpod": kernel.LPOD, "custom": kernel.CUSTOM}
_BASELINE_CODES = {"jsq": kernel.JSQ, "pod": kernel.FRESH_POD, "jiq": kernel.JIQ}


def kernel_params(policy: PolicyConfig, N: int) -> dict:
    table = np.zeros(N)
    if policy.is_led:
        s = policy.strategy
        code = _STRATEGY_CODES[s.kind]
        if s.kind == "custom":
            table = np.asarray(s.table, dtype=float)
        upd = kernel.PUSH if isinstance(policy.update, Push) else kernel.PULL
        return dict(code=code, d_route=s.d or 1, table=table, upd=upd,
                    p_hat=float(policy.update.p_hat), d_upd=getattr(policy.update, "d", 1),
                    self_inc=policy.estimate_mode == SELF_INCREMENT, decision_msgs=0)
    b = policy.baseline
    return dict(code=_BASELINE_CODES[b.kind], d_route=b.d, table=table, upd=kernel.NO_UPDATE,
                p_hat=0.0, d_upd=1, self_inc=False, decision_msgs=b.decision_messages(N))


def run_noise(state: SystemState, mu, policy: PolicyConfig, noise, record=False,
              batch_size=None, params=None):
    """Advance ``state`` in place through ``noise``; returns kernel outputs when recording."""
    M, N = state.estimates.shape
    T = len(noise)
    params = params or kernel_params(policy, N)
    batch_size = batch_size or max(T, 1)
    B = -(-T // batch_size) if record else 0
    scal = np.zeros((T if record else 0, kernel.N_SCALARS))
    x_sum = np.zeros((B, M, N))
    i_cnt = np.zeros((B, M, N), dtype=np.int64)
    busy_cnt = np.zeros((B, N), dtype=np.int64)
    busy_i = np.zeros((B, M, N), dtype=np.int64)
    kernel.run_block(
        state.queues, state.estimates, noise.arrivals, noise.services, noise.u_route,
        noise.u_update, np.asarray(mu, dtype=float), params["code"], params["d_route"],
        params["table"], params["upd"], params["p_hat"], params["d_upd"], params["self_inc"],
        params["decision_msgs"], record, batch_size, scal, x_sum, i_cnt, busy_cnt, busy_i,
    )
    state.slot += T
    return scal, x_sum, i_cnt, busy_cnt, busy_i


def simulate(traffic: TrafficConfig, policy: PolicyConfig, slots: int, rng: RngStream,
             warmup: int | None = None, batch_size: int | None = None,
             state: SystemState | None = None) -> tuple[SystemState, MetricsAccumulator]:
    """Run ``warmup`` unrecorded slots, then ``slots`` (rounded down to whole batches) recorded."""
    M, N = traffic.M, traffic.N
    policy.validate_for(M, N)
    warmup = default_warmup(traffic.epsilon) if warmup is None else int(warmup)
    batch_size = int(batch_size or max(1, slots // DEFAULT_BATCHES))
    state = state or SystemState.empty(M, N)
    params = kernel_params(policy, N)
    mu = traffic.mu

    left = warmup
    while left > 0:
        T = min(CHUNK, left)
        run_noise(state, mu, policy, draw_noise(traffic, policy, rng, T), params=params)
        left -= T

    acc = MetricsAccumulator(M, N, state.slot, batch_size, track_estimates=policy.is_led)
    per_chunk = max(1, CHUNK // batch_size)
    remaining = slots // batch_size
    while remaining > 0:
        B = min(per_chunk, remaining)
        noise = draw_noise(traffic, policy, rng, B * batch_size)
        acc.record_block(*run_noise(state, mu, policy, noise, True, batch_size, params))
        remaining -= B
    return state, acc
