"""Numba-accelerated rollout kernels for Monte Carlo planning and evaluation.

The kernels mirror the semantics of `engine` and `policies` exactly but
operate on packed arrays with an inline counter-derived PRNG, so millions of
closed-loop rollouts stay cheap.  Every rollout's stream is derived from
(base seed, candidate index, continuation index, replicate index), which
makes results independent of evaluation order and worker count.

Node sets are int64 bitmasks, so kernels require at most 63 nodes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

PARAM = 0
EMPIR = 1


@njit(cache=True, nogil=True, inline="always")
def _mix(x):
    """splitmix64 finalizer."""
    z = x
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, inline="always")
def _next(state):
    """Advance the splitmix64 state and return (state, 64 random bits)."""
    state = state + _GOLD
    return state, _mix(state)


@njit(cache=True, nogil=True, inline="always")
def _unit(z):
    """Uniform double in [0, 1) from 64 random bits."""
    return float(z >> _S11) * _INV53


@njit(cache=True, nogil=True)
def derive_seed(base, a, b, c):
    """Stream seed for (candidate a, continuation b, replicate c)."""
    h = _mix(base + _GOLD * (np.uint64(a) + np.uint64(1)))
    h = _mix(h + _GOLD * (np.uint64(b) + np.uint64(1)))
    h = _mix(h + _GOLD * (np.uint64(c) + np.uint64(1)))
    return h


@njit(cache=True, nogil=True, inline="always")
def _attempt(mode, p, cost, tau, pool_n, pool_succ, pool_cost, pool_lat, v, m, k, state):
    """Launch k parallel samples of (v, m); return realized outcome.

    Returns (state, succeeded, cost_micro, duration_ms).  Parametric mode
    charges the deterministic estimates; empirical mode draws k pool records
    with replacement, succeeds on any success flag and takes the max latency.
    """
    if mode == PARAM:
        pp = p[v, m]
        if pp >= 1.0:
            q = 1.0
        else:
            q = -np.expm1(k * np.log1p(-pp))
        state, z = _next(state)
        ok = _unit(z) < q
        return state, ok, k * cost[v, m], tau[v, m]
    nrec = np.uint64(pool_n[v, m])
    rc = np.int64(0)
    nd = np.int64(0)
    ok = False
    for _ in range(k):
        state, z = _next(state)
        j = np.int64(z % nrec)
        rc += pool_cost[v, m, j]
        if pool_lat[v, m, j] > nd:
            nd = pool_lat[v, m, j]
        if pool_succ[v, m, j] != 0:
            ok = True
    return state, ok, rc, nd


@njit(cache=True, nogil=True)
def _rollout(
    mode,
    pred,
    full_mask,
    p,
    cost,
    tau,
    pool_n,
    pool_succ,
    pool_cost,
    pool_lat,
    s_mask,
    budget,
    time_left,
    first_nodes,
    first_models,
    first_widths,
    use_first,
    mu_m,
    mu_k,
    seed,
):
    """One closed-loop simulation; returns 1 on constrained completion.

    If `use_first`, the first round executes the explicit action given by the
    `first_*` arrays; all later rounds assign (mu_m, mu_k) to every ready
    node.  A round whose estimated cost/duration exceeds the remaining
    limits, or whose realized consumption drives them negative, fails.
    """
    n = pred.shape[0]
    S = s_mask
    b = budget
    h = time_left
    state = seed
    first = use_first
    while S != full_mask:
        # Estimated cost and duration of this round's action.
        est_c = np.int64(0)
        est_d = np.int64(0)
        if first:
            for i in range(first_nodes.shape[0]):
                v = first_nodes[i]
                m = first_models[i]
                k = first_widths[i]
                est_c += k * cost[v, m]
                if tau[v, m] > est_d:
                    est_d = tau[v, m]
        else:
            for v in range(n):
                if (S >> v) & 1 == 0 and (pred[v] & S) == pred[v]:
                    est_c += mu_k * cost[v, mu_m]
                    if tau[v, mu_m] > est_d:
                        est_d = tau[v, mu_m]
        if est_c > b or est_d > h:
            return 0
        # Realized outcome.
        rc = np.int64(0)
        rd = np.int64(0)
        new_s = S
        if first:
            for i in range(first_nodes.shape[0]):
                v = first_nodes[i]
                state, ok, ac, ad = _attempt(
                    mode, p, cost, tau, pool_n, pool_succ, pool_cost, pool_lat,
                    v, first_models[i], first_widths[i], state,
                )
                rc += ac
                if ad > rd:
                    rd = ad
                if ok:
                    new_s |= np.int64(1) << v
            first = False
        else:
            for v in range(n):
                if (S >> v) & 1 == 0 and (pred[v] & S) == pred[v]:
                    state, ok, ac, ad = _attempt(
                        mode, p, cost, tau, pool_n, pool_succ, pool_cost, pool_lat,
                        v, mu_m, mu_k, state,
                    )
                    rc += ac
                    if ad > rd:
                        rd = ad
                    if ok:
                        new_s |= np.int64(1) << v
        S = new_s
        b -= rc
        h -= rd
        if b < 0 or h < 0:
            return 0
    return 1


@njit(cache=True, nogil=True)
def mc_pairs(
    mode,
    pred,
    full_mask,
    p,
    cost,
    tau,
    pool_n,
    pool_succ,
    pool_cost,
    pool_lat,
    s_mask,
    budget,
    time_left,
    act_nodes,
    cand_models,
    cand_widths,
    mu_ms,
    mu_ks,
    n_sim,
    base_seed,
):
    """Success counts for every (candidate action, continuation) pair.

    cand_models/cand_widths are (n_cand, r) with act_nodes the shared node
    list; mu_ms/mu_ks enumerate the continuation portfolio.
    """
    n_cand = cand_models.shape[0]
    n_mu = mu_ms.shape[0]
    counts = np.zeros((n_cand, n_mu), dtype=np.int64)
    for c in range(n_cand):
        for j in range(n_mu):
            acc = 0
            for i in range(n_sim):
                seed = derive_seed(base_seed, c, j, i)
                acc += _rollout(
                    mode, pred, full_mask, p, cost, tau,
                    pool_n, pool_succ, pool_cost, pool_lat,
                    s_mask, budget, time_left,
                    act_nodes, cand_models[c], cand_widths[c], True,
                    mu_ms[j], mu_ks[j], seed,
                )
            counts[c, j] = acc
    return counts


@njit(cache=True, nogil=True)
def base_policy_runs(
    mode,
    pred,
    full_mask,
    p,
    cost,
    tau,
    pool_n,
    pool_succ,
    pool_cost,
    pool_lat,
    budget,
    time_left,
    mu_m,
    mu_k,
    n_runs,
    base_seed,
):
    """Per-run success indicators for the closed-loop Retry-(m, k) policy."""
    out = np.zeros(n_runs, dtype=np.int64)
    empty = np.empty(0, dtype=np.int64)
    for i in range(n_runs):
        seed = derive_seed(base_seed, 0, 0, i)
        out[i] = _rollout(
            mode, pred, full_mask, p, cost, tau,
            pool_n, pool_succ, pool_cost, pool_lat,
            np.int64(0), budget, time_left,
            empty, empty, empty, False, mu_m, mu_k, seed,
        )
    return out


@njit(cache=True, nogil=True)
def uniform_runs(
    mode,
    pred,
    full_mask,
    p,
    cost,
    tau,
    pool_n,
    pool_succ,
    pool_cost,
    pool_lat,
    budget,
    time_left,
    uni_m,
    widths,
    n_runs,
    base_seed,
):
    """Per-run success indicators for the static Uniform plan.

    Each node is dispatched exactly once with its precomputed width when it
    becomes ready; a failed dispatch aborts the run.
    """
    n = pred.shape[0]
    out = np.zeros(n_runs, dtype=np.int64)
    for i in range(n_runs):
        seed = derive_seed(base_seed, 0, 0, i)
        S = np.int64(0)
        b = budget
        h = time_left
        state = seed
        ok_run = 1
        for v in range(n):
            if widths[v] < 1:
                ok_run = 0
        while ok_run == 1 and S != full_mask:
            est_c = np.int64(0)
            est_d = np.int64(0)
            for v in range(n):
                if (S >> v) & 1 == 0 and (pred[v] & S) == pred[v]:
                    est_c += widths[v] * cost[v, uni_m]
                    if tau[v, uni_m] > est_d:
                        est_d = tau[v, uni_m]
            if est_c > b or est_d > h:
                ok_run = 0
                break
            rc = np.int64(0)
            rd = np.int64(0)
            new_s = S
            for v in range(n):
                if (S >> v) & 1 == 0 and (pred[v] & S) == pred[v]:
                    state, ok, ac, ad = _attempt(
                        mode, p, cost, tau, pool_n, pool_succ, pool_cost, pool_lat,
                        v, uni_m, widths[v], state,
                    )
                    rc += ac
                    if ad > rd:
                        rd = ad
                    if ok:
                        new_s |= np.int64(1) << v
                    else:
                        ok_run = 0  # single dispatch failed: run cannot complete
            S = new_s
            b -= rc
            h -= rd
            if b < 0 or h < 0:
                ok_run = 0
        out[i] = 1 if (ok_run == 1 and S == full_mask) else 0
    return out
