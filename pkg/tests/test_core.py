"""Slot semantics, and the compiled kernel replayed against ``apply_slot``."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ledlb import kernel
from ledlb.baselines import Baseline
from ledlb.core import (
    STATIC,
    PolicyConfig,
    SystemState,
    advance_queues,
    apply_slot,
    draw_noise,
    inverse_cdf,
    is_update_condition_satisfied,
    step,
)
from ledlb.dispatch import Strategy
from ledlb.engine import run_noise
from ledlb.metrics import MetricsAccumulator
from ledlb.stochastic import IntDistribution as D, RngStream, TrafficConfig
from ledlb.update import Pull, Push


def led(kind, update, d=None, mode="self_increment", table=None):
    return PolicyConfig(Strategy(kind, d, table), update, mode)


ALL_POLICIES = [
    led("weighted_random", Pull(0.5)),
    led("ljsq", Pull(0.5)),
    led("ljsq", Push(0.5, 2)),
    led("ljsq", Push(0.3, 1), mode=STATIC),
    led("ljba", Push(0.5, 2)),
    led("ljba", Pull(0.2), mode=STATIC),
    led("lpod", Push(0.5, 2), d=2),
    led("lpod", Pull(1.0), d=3),
    led("custom", Pull(0.7), table=(0.4, 0.3, 0.2, 0.1, 0.0)),
    PolicyConfig(baseline=Baseline("jsq")),
    PolicyConfig(baseline=Baseline("pod", 2)),
    PolicyConfig(baseline=Baseline("jiq")),
]


def _traffic(M=3, eps=0.5):
    return TrafficConfig.build([D.poisson(0.5), D.poisson(1.0), D.geometric(0.7),
                                D.bounded_uniform(0, 2), D.bernoulli_scaled(2, 0.3)], eps, M)


@given(st.lists(st.integers(0, 20), min_size=1, max_size=8), st.data())
@settings(max_examples=300, deadline=None)
def test_lindley_step_identities(q, data):
    n = len(q)
    a = data.draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))
    s = data.draw(st.lists(st.integers(0, 20), min_size=n, max_size=n))
    q1, u = advance_queues(q, a, s)
    q, a, s = map(np.array, (q, a, s))
    assert np.all(q1 >= 0) and np.all(u >= 0)
    assert np.array_equal(q1, np.maximum(q + a - s, 0))
    assert np.all(q1 * u == 0)
    assert np.array_equal(q1, q + a - s + u)


def test_lindley_example():
    q1, u = advance_queues([3], [2], [7])
    assert q1.tolist() == [0] and u.tolist() == [2]


def test_inverse_cdf_skips_zero_mass():
    assert inverse_cdf(np.array([0.5, 0.5, 0.0]), 0.9999999999999999) == 1
    assert inverse_cdf(np.array([0.0, 1.0]), 0.0) == 1


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: f"{p.label}-{p.estimate_mode}")
def test_slot_conservation_and_routing(policy):
    tr = _traffic()
    rng = RngStream(3)
    state = SystemState.empty(tr.M, tr.N)
    for _ in range(300):
        new, rec = step(state, tr, policy, rng)
        assert rec.arrivals_per_dispatcher_server.sum() == rec.arrivals_per_dispatcher.sum()
        assert np.array_equal(rec.arrivals_per_dispatcher_server.sum(axis=1), rec.arrivals_per_dispatcher)
        # one server per dispatcher batch
        assert np.all((rec.arrivals_per_dispatcher_server > 0).sum(axis=1) <= 1)
        assert np.array_equal(new.queues, state.queues + rec.arrivals_per_server - rec.services + rec.unused)
        assert np.all(new.queues * rec.unused == 0)
        assert np.array_equal(rec.departures, np.minimum(state.queues + rec.arrivals_per_server, rec.services))
        if policy.is_led:
            upd = rec.update_indicators
            assert np.all(new.estimates[upd] == np.broadcast_to(new.queues, upd.shape)[upd])
            kept = ~upd
            expected = state.estimates + (rec.arrivals_per_dispatcher_server
                                          if policy.estimate_mode == "self_increment" else 0)
            assert np.array_equal(new.estimates[kept], expected[kept])
        state = new


def test_jsq_herd_property():
    # with a unique argmin every active dispatcher sends to the same server
    tr = TrafficConfig.build([D.poisson(1.0)] * 4, 0.5, M=5)
    pol = PolicyConfig(baseline=Baseline("jsq"))
    state = SystemState(np.array([3, 1, 4, 2]), np.zeros((5, 4), dtype=np.int64))
    _, rec = apply_slot(state, tr.mu, pol, np.ones(5, dtype=np.int64), np.zeros(4, dtype=np.int64),
                        np.random.default_rng(0).random((5, 1)), np.zeros(1))
    assert set(rec.chosen.tolist()) == {1}


def test_ljsq_self_increment_example():
    pol = led("ljsq", Push(0.0, 1))
    state = SystemState(np.zeros(3, dtype=np.int64), np.array([[0, 2, 5]]))
    new, rec = apply_slot(state, [1, 1, 1], pol, np.array([3]), np.zeros(3, dtype=np.int64),
                          np.array([[0.5]]), np.array([0.9, 0.1]))
    assert new.estimates.tolist() == [[3, 2, 5]]
    assert new.queues.tolist() == [3, 0, 0]
    assert rec.messages == 0


def test_step_is_reproducible():
    tr = _traffic()
    pol = ALL_POLICIES[1]
    s1 = s2 = SystemState.empty(tr.M, tr.N)
    r1, r2 = RngStream(9), RngStream(9)
    for _ in range(50):
        s1, _ = step(s1, tr, pol, r1)
        s2, _ = step(s2, tr, pol, r2)
    assert np.array_equal(s1.queues, s2.queues) and np.array_equal(s1.estimates, s2.estimates)


@pytest.mark.parametrize("policy", ALL_POLICIES, ids=lambda p: f"{p.label}-{p.estimate_mode}")
def test_kernel_matches_reference_slot_by_slot(policy):
    tr = _traffic(eps=0.3)
    mu = tr.mu
    T, batch = 2000, 250
    noise = draw_noise(tr, policy, RngStream(21), T)
    start = SystemState(np.array([4, 0, 2, 7, 1]), np.array([[4, 1, 0, 9, 1], [0, 0, 0, 0, 0], [3, 3, 3, 3, 3]]))

    ref = MetricsAccumulator(tr.M, tr.N, 0, batch, track_estimates=policy.is_led)
    state = start.copy()
    queue_path = []
    for t in range(T):
        new, rec = apply_slot(state, mu, policy, *noise.slot(t))
        ref.record_slot(state, rec)
        queue_path.append(state.queues.sum())
        state = new

    fast = start.copy()
    out = run_noise(fast, mu, policy, noise, record=True, batch_size=batch)
    acc = MetricsAccumulator(tr.M, tr.N, 0, batch, track_estimates=policy.is_led)
    acc.record_block(*out)

    assert np.array_equal(fast.queues, state.queues)
    assert np.array_equal(fast.estimates, state.estimates)
    assert fast.slot == state.slot == T
    assert np.array_equal(out[0][:, kernel.SUM_Q], queue_path)
    assert np.allclose(np.array(acc.scalar_batches), np.array(ref.scalar_batches), rtol=1e-12, atol=1e-12)
    for name in ("i_batches", "busy_batches", "busy_i_batches"):
        assert np.array_equal(np.array(getattr(acc, name)), np.array(getattr(ref, name))), name
    if policy.is_led:
        assert np.allclose(np.array(acc.x_batches), np.array(ref.x_batches))
    assert acc.max_sum_q == ref.max_sum_q


def test_update_condition_report():
    tr = _traffic()
    assert is_update_condition_satisfied(led("ljsq", Pull(0.5)), tr)[0]
    assert is_update_condition_satisfied(led("ljsq", Push(0.0, 2)), tr) == (False, 0.0)
    assert is_update_condition_satisfied(PolicyConfig(baseline=Baseline("jsq")), tr) == (False, 0.0)


def test_policy_validation():
    with pytest.raises(ValueError):
        PolicyConfig(Strategy("ljsq"))
    with pytest.raises(ValueError):
        PolicyConfig(Strategy("ljsq"), Pull(0.5), baseline=Baseline("jsq"))
    with pytest.raises(ValueError):
        PolicyConfig(Strategy("ljsq"), Pull(0.5), "lazy")
    with pytest.raises(ValueError):
        led("ljsq", Push(0.5, 4)).validate_for(2, 3)
    assert led("ljsq", Pull(0.5)).label == "L-JSQ-Pull"
