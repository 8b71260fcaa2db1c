import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ledlb.stochastic import IntDistribution as D, TrafficConfig
from ledlb.update import (
    Pull,
    Push,
    UpdateConditionError,
    analytic_update_lower_bound,
    pull_update,
    push_update,
    sample_distinct,
)


@given(st.integers(1, 30), st.data())
@settings(max_examples=200, deadline=None)
def test_sample_distinct_gives_distinct_indices(N, data):
    k = data.draw(st.integers(1, N))
    u = data.draw(st.lists(st.floats(0, 1, exclude_max=False), min_size=k, max_size=k))
    s = sample_distinct(N, u)
    assert len(set(s.tolist())) == k
    assert s.min() >= 0 and s.max() < N


def test_sample_distinct_uniform_pairs():
    rng = np.random.default_rng(0)
    N, T = 5, 100_000
    counts = np.zeros((N, N))
    for u in rng.random((T, 2)):
        a, b = sample_distinct(N, u)
        counts[a, b] += 1
    p = 1 / (N * (N - 1))
    off = counts[~np.eye(N, dtype=bool)] / T
    assert np.all(np.abs(off - p) < 4 * math.sqrt(p * (1 - p) / T))
    assert np.trace(counts) == 0


def test_push_no_arrivals_no_update():
    out = push_update(4, [0, 0], Push(1.0, 2), np.zeros(6))
    assert not out.indicators.any() and out.messages == 0


def test_push_updates_d_servers_for_active_dispatchers():
    u = np.array([0.1, 0.0, 0.0, 0.9, 0.5, 0.5])
    out = push_update(4, [3, 2], Push(0.5, 2), u)
    assert out.indicators[0].sum() == 2 and not out.indicators[1].any()
    assert out.messages == 4


def test_push_frequency_matches_bound():
    rng = np.random.default_rng(1)
    N, T = 5, 40_000
    strat = Push(0.5, 2)
    hits = np.zeros(N)
    for _ in range(T):
        hits += push_update(N, [1], strat, rng.random(3)).indicators[0]
    f = hits / T
    p = 0.5 * 2 / 5
    assert np.all(np.abs(f - p) < 4 * math.sqrt(p * (1 - p) / T))


def test_pull_idle_always_reports_busy_with_p_hat():
    u = np.array([0.0, 0.99, 0.6, 0.99, 0.0, 0.1, 0.0, 0.0])
    out = pull_update(2, departures=[1, 1, 2, 0], queues_end=[0, 4, 3, 0], strat=Pull(0.5), u=u)
    # server 0 idle: reports to dispatcher 0; server 1 busy, coin 0.99 fails;
    # server 2 busy, coin 0.1 passes; server 3 had no departure
    assert out.indicators.tolist() == [[True, False, True, False], [False, False, False, False]]
    assert out.messages == 2


def test_pull_zero_p_hat_only_idle_reports():
    out = pull_update(1, [1, 1], [0, 5], Pull(0.0), np.zeros(4))
    assert out.indicators.tolist() == [[True, False]]


def _traffic(M=4, mus=(1.0,) * 5 + (2.0,) * 5, eps=0.15):
    return TrafficConfig.build([D.poisson(m) for m in mus], eps, M)


def test_bound_push_formula():
    tr = _traffic()
    lam_m = tr.lam_sum / 4
    p = analytic_update_lower_bound(Push(0.5, 2), tr)
    assert p == pytest.approx((1 - math.exp(-lam_m)) * 0.5 * 2 / 10)


def test_bound_pull_formula():
    tr = _traffic()
    assert analytic_update_lower_bound(Pull(0.5), tr) == pytest.approx(0.5 * (1 - math.exp(-1)) / 4)


def test_bound_zero_raises():
    with pytest.raises(UpdateConditionError):
        analytic_update_lower_bound(Push(0.0, 2), _traffic())
    with pytest.raises(UpdateConditionError):
        analytic_update_lower_bound(Pull(0.0), _traffic())


@pytest.mark.parametrize("bad", [lambda: Push(1.5), lambda: Push(0.5, 0), lambda: Pull(-0.1)])
def test_update_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_push_d_larger_than_n():
    with pytest.raises(ValueError):
        push_update(2, [1], Push(1.0, 3), np.zeros(4))
