"""Compiled slot loop. Mirrors ``core.apply_slot`` over blocks of pre-drawn noise.

Strategy codes below 10 are LED strategies (decide from local estimates);
codes from 10 are fresh-information baselines (decide from true queues).
"""
from __future__ import annotations

import numpy as np
from numba import njit

WR, LJSQ, LJBA, LPOD, CUSTOM = 0, 1, 2, 3, 4
JSQ, FRESH_POD, JIQ = 10, 11, 12
NO_UPDATE, PUSH, PULL = 0, 1, 2

# per-slot scalar columns written when recording
SUM_Q, QPERP_SQ, U1, U2SQ, MESSAGES, ARRIVALS, MAX_Q = range(7)
N_SCALARS = 7


@njit(cache=True)
def _inverse_cdf(p, u):
    acc = 0.0
    last = -1
    for n in range(p.shape[0]):
        if p[n] > 0.0:
            last = n
        acc += p[n]
        if u < acc:
            return n
    return last


@njit(cache=True)
def _shortest(est, u):
    lo = est[0]
    for n in range(1, est.shape[0]):
        if est[n] < lo:
            lo = est[n]
    cnt = 0
    for n in range(est.shape[0]):
        if est[n] == lo:
            cnt += 1
    k = min(int(u * cnt), cnt - 1)
    for n in range(est.shape[0]):
        if est[n] == lo:
            if k == 0:
                return n
            k -= 1
    return -1


@njit(cache=True)
def _best_of_sample(est, u, d, pool):
    N = est.shape[0]
    for i in range(N):
        pool[i] = i
    best = -1
    for i in range(d):
        j = i + min(int(u[i] * (N - i)), N - i - 1)
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
        n = pool[i]
        if best < 0 or est[n] < est[best] or (est[n] == est[best] and n < best):
            best = n
    return best


@njit(cache=True)
def _below_average(est, mu, p):
    N = est.shape[0]
    total = 0
    for n in range(N):
        total += est[n]
    w = 0.0
    for n in range(N):
        if est[n] * N <= total:
            w += mu[n]
    for n in range(N):
        p[n] = mu[n] / w if est[n] * N <= total else 0.0


@njit(cache=True)
def _route(code, est, mu, wr, table, u, d, pool, p):
    if code == LJSQ or code == JSQ:
        return _shortest(est, u[0])
    if code == LPOD or code == FRESH_POD:
        return _best_of_sample(est, u, d, pool)
    if code == WR:
        return _inverse_cdf(wr, u[0])
    if code == LJBA:
        _below_average(est, mu, p)
        return _inverse_cdf(p, u[0])
    if code == CUSTOM:
        order = np.argsort(est, kind="mergesort")
        return order[_inverse_cdf(table, u[0])]
    # JIQ
    N = est.shape[0]
    idle = 0
    for n in range(N):
        if est[n] == 0:
            idle += 1
    if idle == 0:
        return min(int(u[0] * N), N - 1)
    k = min(int(u[0] * idle), idle - 1)
    for n in range(N):
        if est[n] == 0:
            if k == 0:
                return n
            k -= 1
    return -1


@njit(cache=True)
def run_block(Q, Qt, arrivals, services, u_route, u_update, mu, code, d_route, table,
              upd, p_hat, d_upd, self_inc, decision_msgs, record, batch_size,
              scal, x_sum, i_cnt, busy_cnt, busy_i):
    """Advance (Q, Qt) in place through len(arrivals) slots.

    With ``record`` set, slot-start observables go to ``scal`` (one row per
    slot) and per-(m, n) sums to the batch-indexed arrays.
    """
    T = arrivals.shape[0]
    M = Qt.shape[0]
    N = Q.shape[0]
    wr = mu / mu.sum()
    led = code < 10
    A = np.zeros(N, dtype=np.int64)
    q0 = np.zeros(N, dtype=np.int64)
    dep = np.zeros(N, dtype=np.int64)
    chosen = np.zeros(M, dtype=np.int64)
    pool = np.zeros(N, dtype=np.int64)
    p = np.zeros(N, dtype=np.float64)
    for t in range(T):
        b = t // batch_size
        for n in range(N):
            q0[n] = Q[n]
            A[n] = 0
        if record:
            sq = 0
            mx = 0
            for n in range(N):
                sq += Q[n]
                if Q[n] > mx:
                    mx = Q[n]
            mean = sq / N
            qp = 0.0
            for n in range(N):
                qp += (Q[n] - mean) ** 2
            scal[t, SUM_Q] = sq
            scal[t, QPERP_SQ] = qp
            scal[t, MAX_Q] = mx
            for n in range(N):
                if Q[n] > 0:
                    busy_cnt[b, n] += 1
            if led:
                for m in range(M):
                    for n in range(N):
                        x_sum[b, m, n] += abs(Q[n] - Qt[m, n])

        msgs = 0
        arr = 0
        for m in range(M):
            a = arrivals[t, m]
            arr += a
            chosen[m] = -1
            if a == 0:
                continue
            if led:
                n = _route(code, Qt[m], mu, wr, table, u_route[t, m], d_route, pool, p)
            else:
                n = _route(code, q0, mu, wr, table, u_route[t, m], d_route, pool, p)
                msgs += decision_msgs
            chosen[m] = n
            A[n] += a
        if led and self_inc:
            for m in range(M):
                if chosen[m] >= 0:
                    Qt[m, chosen[m]] += arrivals[t, m]

        u1 = 0
        u2 = 0
        for n in range(N):
            tot = Q[n] + A[n]
            s = services[t, n]
            if s > tot:
                un = s - tot
                dep[n] = tot
                Q[n] = 0
            else:
                un = 0
                dep[n] = s
                Q[n] = tot - s
            u1 += un
            u2 += un * un

        if upd == PUSH:
            w = 1 + d_upd
            for m in range(M):
                if arrivals[t, m] == 0:
                    continue
                base = m * w
                if u_update[t, base] < p_hat:
                    for i in range(N):
                        pool[i] = i
                    for i in range(d_upd):
                        j = i + min(int(u_update[t, base + 1 + i] * (N - i)), N - i - 1)
                        tmp = pool[i]
                        pool[i] = pool[j]
                        pool[j] = tmp
                        n = pool[i]
                        Qt[m, n] = Q[n]
                        if record:
                            i_cnt[b, m, n] += 1
                            if q0[n] > 0:
                                busy_i[b, m, n] += 1
                    msgs += 2 * d_upd
        elif upd == PULL:
            for n in range(N):
                if dep[n] <= 0:
                    continue
                m = min(int(u_update[t, 2 * n] * M), M - 1)
                if Q[n] == 0 or u_update[t, 2 * n + 1] < p_hat:
                    Qt[m, n] = Q[n]
                    msgs += 1
                    if record:
                        i_cnt[b, m, n] += 1
                        if q0[n] > 0:
                            busy_i[b, m, n] += 1
        elif code == JIQ:
            for n in range(N):
                if dep[n] > 0 and Q[n] == 0:
                    msgs += 1

        if record:
            scal[t, U1] = u1
            scal[t, U2SQ] = u2
            scal[t, MESSAGES] = msgs
            scal[t, ARRIVALS] = arr


@njit(cache=True)
def pooled_block(q, a_tot, s_tot, record, scal):
    """Single resource-pooled queue; returns the final length."""
    for t in range(a_tot.shape[0]):
        tot = q + a_tot[t]
        s = s_tot[t]
        if s > tot:
            un = s - tot
            q_next = 0
        else:
            un = 0
            q_next = tot - s
        if record:
            scal[t, SUM_Q] = q
            scal[t, MAX_Q] = q
            scal[t, U1] = un
            scal[t, U2SQ] = un * un
            scal[t, ARRIVALS] = a_tot[t]
        q = q_next
    return q
