"""Acceptance suite: one test per release criterion.

Each test is the single pass/fail line for its criterion in `pytest -v`
output; the printed summary carries the measured numbers.
"""

import math
import time
from itertools import product

import numpy as np
import pytest

from conftest import make_parametric, random_small_instance
from mcpp.engine import ExecState, initial_state, success_prob
from mcpp.harness import (
    SyntheticSpec,
    best_rows,
    ci_radius,
    generate_instance,
    m_sweep,
    sweep,
)
from mcpp.model import EMPIRICAL
from mcpp.noise import SUCCESS_RATE, TOKEN_LENGTH, NoiseSpec, perturb_success_rate, perturb_token_lengths
from mcpp.oracle import ExactOracle
from mcpp.planner import PlannerConfig, hoeffding_radius, mc_value, run_mcpp, select_action
from mcpp.policies import BasePolicy
from mcpp.rng import stream_key, substream
from mcpp import rng as rngmod

import test_kernel

SUITE_WIDTHS = (1, 2)
SUITE_SIZE = 100


@pytest.fixture(scope="module")
def suite():
    """100 random small parametric instances with fully solved oracles."""
    out = []
    for seed in range(SUITE_SIZE):
        inst = random_small_instance(seed, max_nodes=5)
        oracle = ExactOracle(inst, widths=SUITE_WIDTHS)
        oracle.value(initial_state(inst))
        out.append((inst, oracle))
    return out


@pytest.fixture(scope="module")
def suite12():
    """The 12-node empirical benchmark instance shared by criteria 6 and 7."""
    return generate_instance(
        SyntheticSpec(n_nodes=12, shape="chain", n_models=3, mode=EMPIRICAL, pool_size=512, seed=11)
    )


def state_from_key(mask, b, h, n):
    return ExecState(
        completed=frozenset(v for v in range(n) if (mask >> v) & 1), budget_left=b, time_left=h
    )


def test_criterion_01_oracle_equivalence(suite):
    # Bellman consistency and brute-force Q agreement at 1e-12 on the suite.
    t0 = time.perf_counter()
    states_checked = 0
    q_checked = 0
    worst = 0.0
    for inst, oracle in suite:
        prof = inst.planning_profiles
        n = inst.graph.n_nodes
        pairs = [(m, k) for m in range(len(inst.catalog)) for k in SUITE_WIDTHS]
        for mask, b, h in oracle.enumerated_states():
            ready = [
                v
                for v in range(n)
                if not (mask >> v) & 1 and (oracle._pred[v] & mask) == oracle._pred[v]
            ]
            best = 0.0
            for combo in product(pairs, repeat=len(ready)):
                assignment = [(v, m, k) for v, (m, k) in zip(ready, combo)]
                cost = sum(k * int(prof.cost_micro[v, m]) for v, m, k in assignment)
                dur = max(int(prof.latency_ms[v, m]) for v, m, _ in assignment)
                if cost > b or dur > h:
                    continue
                qs = [success_prob(float(prof.p[v, m]), k) for v, m, k in assignment]
                r = len(assignment)
                total = 0.0
                for bits in range(1 << r):
                    prob = 1.0
                    s2 = mask
                    for i in range(r):
                        if (bits >> i) & 1:
                            prob *= qs[i]
                            s2 |= 1 << assignment[i][0]
                        else:
                            prob *= 1.0 - qs[i]
                    if prob != 0.0:
                        total += prob * oracle._value(s2, b - cost, h - dur)
                best = max(best, total)
            worst = max(worst, abs(best - oracle._value(mask, b, h)))
            states_checked += 1
        # Brute-force Q for one action and continuation at the initial state.
        s0 = initial_state(inst)
        ready = [v for v in range(n) if not inst.graph.predecessors[v]]
        from mcpp.engine import Action

        act = Action.from_mapping({v: (0, 1) for v in ready})
        mu = BasePolicy(1, 2)
        cost = sum(int(prof.cost_micro[v, 0]) for v in ready)
        dur = max(int(prof.latency_ms[v, 0]) for v in ready)
        if cost <= s0.budget_left and dur <= s0.time_left:
            qs = [success_prob(float(prof.p[v, 0]), 1) for v in ready]
            total = 0.0
            for bits in range(1 << len(ready)):
                prob = 1.0
                done = set()
                for i, v in enumerate(ready):
                    if (bits >> i) & 1:
                        prob *= qs[i]
                        done.add(v)
                    else:
                        prob *= 1.0 - qs[i]
                nxt = ExecState(
                    completed=frozenset(done),
                    budget_left=s0.budget_left - cost,
                    time_left=s0.time_left - dur,
                )
                total += prob * oracle.policy_value(nxt, mu)
            assert abs(oracle.q(s0, act, mu) - total) <= 1e-12
            q_checked += 1
    elapsed = time.perf_counter() - t0
    assert worst <= 1e-12
    assert elapsed < 60.0
    print(
        f"criterion 1 PASS: {states_checked} Bellman states, {q_checked} brute-force Q checks, "
        f"worst diff {worst:.2e}, {elapsed:.1f} s"
    )


def test_criterion_02_statewise_improvement(suite):
    # Exact planner score dominates every base policy at every enumerated state.
    from mcpp.planner import portfolio

    checked = 0
    for inst, oracle in suite:
        pi0 = portfolio(inst, PlannerConfig(widths=SUITE_WIDTHS))
        n = inst.graph.n_nodes
        for mask, b, h in oracle.enumerated_states():
            s = state_from_key(mask, b, h, n)
            picked = oracle.portfolio_plan(s)
            score = picked[1] if picked is not None else 0.0
            best_base = max(oracle.policy_value(s, mu) for mu in pi0)
            assert score >= best_base  # zero tolerance
            checked += 1
    print(f"criterion 2 PASS: Q_pi0(s, a(s)) >= max_mu V^mu(s) at {checked} states, zero tolerance")


def test_criterion_03_closed_loop_improvement(suite):
    from mcpp.planner import portfolio

    for inst, oracle in suite:
        s0 = initial_state(inst)
        v_plan = oracle.closed_loop_plan_value(s0)
        best_base = max(
            oracle.policy_value(s0, mu) for mu in portfolio(inst, PlannerConfig(widths=SUITE_WIDTHS))
        )
        assert v_plan >= best_base  # zero tolerance
    print(f"criterion 3 PASS: closed-loop plan value >= best base policy on {len(suite)} instances")


def test_criterion_04_selection_concentration(suite):
    # With N_sim=64, the chosen pair is within 2*eps of the exact best pair.
    spot = hoeffding_radius(12, 64, 0.05)
    assert abs(spot - 0.2196) <= 1e-4
    cfg = PlannerConfig(widths=SUITE_WIDTHS, n_sim=64, delta=0.05)
    from mcpp.planner import candidates, portfolio
    from mcpp.engine import is_feasible

    hits = 0
    calls = 0
    target_calls = 1000
    for idx, (inst, oracle) in enumerate(suite):
        if calls >= target_calls:
            break
        prof = inst.planning_profiles
        n = inst.graph.n_nodes
        pi0 = portfolio(inst, cfg)
        for mask, b, h in oracle.enumerated_states():
            if calls >= target_calls:
                break
            s = state_from_key(mask, b, h, n)
            exact_best = oracle.portfolio_plan(s)
            if exact_best is None:
                continue
            picked = select_action(s, inst, cfg, seed=10_000 + calls)
            assert picked is not None
            action, scores = picked
            chosen = next(sc for sc in scores if sc.action == action)
            q_exact = oracle.q(s, action, chosen.best_continuation)
            n_feasible = sum(
                1 for a in candidates(s, inst, cfg) if is_feasible(s, a, prof)
            )
            eps = hoeffding_radius(n_feasible * len(pi0), cfg.n_sim, cfg.delta)
            if q_exact >= exact_best[1] - 2 * eps:
                hits += 1
            calls += 1
    freq = hits / calls
    slack = 3 * math.sqrt(0.95 * 0.05 / calls)
    assert calls >= target_calls
    assert freq >= 0.95 - slack
    print(
        f"criterion 4 PASS: coverage {freq:.4f} over {calls} selections "
        f"(bound 0.95 - {slack:.4f}); eps spot value {spot:.4f}"
    )


def test_criterion_05_estimator_unbiasedness():
    # Exact action value 0.75; the Monte Carlo mean must sit in the 3-sigma band.
    from mcpp.engine import Action

    inst = make_parametric(1, (), [[0.75]], 1, 1, 1, 1)
    oracle = ExactOracle(inst, widths=(1,))
    s0 = initial_state(inst)
    assert oracle.value(s0) == 0.75
    act = Action.from_mapping({0: (0, 1)})
    mu = BasePolicy(0, 1)
    n_calls, n_sim = 1000, 64
    mean = np.mean([mc_value(s0, act, mu, n_sim, inst, seed=s) for s in range(n_calls)])
    band = 3 * math.sqrt(0.75 * 0.25 / (n_sim * n_calls))
    assert abs(mean - 0.75) <= band
    print(f"criterion 5 PASS: estimator mean {mean:.5f} within 0.75 +/- {band:.5f}")


def test_criterion_06_closed_loop_dominance(suite12):
    # MCPP matches or beats the best tuned baseline in every budget/deadline cell.
    budgets = [0.05, 0.2]
    deadlines = [180.0, 240.0]
    n_eval = 5000
    cfg = PlannerConfig(n_sim=64)
    t0 = time.perf_counter()
    report = sweep(
        suite12, ["mcpp", "retry", "uniform"], budgets, deadlines, cfg, n_eval, 0.05, 99
    )
    elapsed = time.perf_counter() - t0
    assert elapsed < 1800.0
    tol = 2 * ci_radius(n_eval, 0.05)
    margins = {}
    for b in budgets:
        for d in deadlines:
            mcpp = next(
                r.success_rate
                for r in report.rows
                if r.method == "mcpp" and r.budget_usd == b and r.deadline_s == d
            )
            best_base = max(
                r.success_rate
                for r in report.rows
                if r.model_set == "best" and r.budget_usd == b and r.deadline_s == d
            )
            margins[(b, d)] = mcpp - best_base
            assert mcpp >= best_base - tol
    detail = ", ".join(f"(B={b},D={int(d)}): {m:+.4f}" for (b, d), m in sorted(margins.items()))
    print(f"criterion 6 PASS: margins {detail} (tolerance -{tol:.4f}), {elapsed:.0f} s")


def test_criterion_07_simulation_budget_sweep(suite12):
    m_values = [16, 32, 64, 128, 256]
    n_eval = 300
    report = m_sweep(
        suite12, m_values, [0.2], [240.0], PlannerConfig(), n_eval, 0.05, 7
    )
    rows = sorted(report.rows, key=lambda r: r.n_sim)
    assert [r.n_sim for r in rows] == m_values
    tol = 2 * ci_radius(n_eval, 0.05)
    for prev, cur in zip(rows, rows[1:]):
        assert cur.success_rate >= prev.success_rate - tol
        assert cur.mean_planner_s > prev.mean_planner_s
    # Planner step latency sanity anchor on a 20-node workflow at M=64.
    big = generate_instance(
        SyntheticSpec(n_nodes=20, shape="diamond", n_models=3, mode=EMPIRICAL, pool_size=512, seed=21)
    ).with_limits(2.0, 1200.0)
    steps = []
    for s in range(3):
        result = run_mcpp(big, PlannerConfig(n_sim=64), seed=s)
        steps.extend(r.planner_seconds for r in result.trace)
    mean_step = float(np.mean(steps))
    assert mean_step <= 5.0
    rates = ", ".join(f"M={r.n_sim}: {r.success_rate:.3f}/{r.mean_planner_s * 1e3:.1f}ms" for r in rows)
    print(f"criterion 7 PASS: {rates}; 20-node mean planner step {mean_step:.3f} s")


def test_criterion_08_monotone_in_constraints(suite12, suite):
    # Exact values: non-decreasing in budget and deadline, zero tolerance.
    lattice_points = 0
    for inst, oracle in suite[:20]:
        for b in range(inst.budget_micro + 1):
            for h in range(inst.deadline_ms + 1):
                v = oracle._value(0, b, h)
                assert oracle._value(0, b + 1, h) >= v
                assert oracle._value(0, b, h + 1) >= v
                lattice_points += 1
    # Estimated success of the best tuned Retry baseline at scale.
    budgets = [0.05, 0.2, 1.0]
    deadlines = [180.0, 240.0, 300.0, 600.0]
    n_eval = 2000
    report = sweep(
        suite12, ["retry"], budgets, deadlines, PlannerConfig(), n_eval, 0.05, 31
    )
    rate = {
        (r.budget_usd, r.deadline_s): r.success_rate for r in best_rows(report, "retry")
    }
    tol = 2 * ci_radius(n_eval, 0.05)
    for d in deadlines:
        for b_lo, b_hi in zip(budgets, budgets[1:]):
            assert rate[(b_hi, d)] >= rate[(b_lo, d)] - tol
    for b in budgets:
        for d_lo, d_hi in zip(deadlines, deadlines[1:]):
            assert rate[(b, d_hi)] >= rate[(b, d_lo)] - tol
    print(
        f"criterion 8 PASS: exact monotonicity at {lattice_points} lattice points; "
        f"empirical grid monotone within {tol:.4f}"
    )


def test_criterion_09_noise_contracts(suite12):
    pools = suite12.pools
    # Success-rate noise: exact post-flip count, minimal flips.
    spec = NoiseSpec(kind=SUCCESS_RATE, sigma=0.3, eps_clip=1e-3, seed=17)
    noisy = perturb_success_rate(pools, spec)
    for (v, m), rec in pools.pools.items():
        gen = substream(spec.seed, rngmod.NOISE, v, m)
        n = len(rec)
        p_tilde = float(np.clip(rec.success_rate + spec.sigma * gen.standard_normal(), 1e-3, 1 - 1e-3))
        target = int(round(p_tilde * n))
        new = noisy.pools[(v, m)].success
        assert int(np.count_nonzero(new)) == target
        assert int(np.count_nonzero(new != rec.success)) == abs(
            target - int(np.count_nonzero(rec.success))
        )
    # Token noise: normalized values clipped into [eps, 1-eps]; sigma=0 identity
    # on strictly interior samples.
    tok_spec = NoiseSpec(kind=TOKEN_LENGTH, sigma=0.5, eps_clip=1e-3, seed=17)
    tok_noisy = perturb_token_lengths(pools, tok_spec, suite12.catalog)
    for (v, m), rec in pools.pools.items():
        gen = substream(tok_spec.seed, rngmod.NOISE, v, m)
        c_max = float(rec.tokens.max())
        z = gen.standard_normal(len(rec))
        normalized = np.clip(rec.tokens / c_max + tok_spec.sigma * z, 1e-3, 1 - 1e-3)
        assert np.all(normalized >= 1e-3) and np.all(normalized <= 1 - 1e-3)
        np.testing.assert_array_equal(
            tok_noisy.pools[(v, m)].tokens,
            np.maximum(1, np.round(normalized * c_max)).astype(np.int64),
        )
    zero = perturb_token_lengths(pools, NoiseSpec(kind=TOKEN_LENGTH, sigma=0.0, seed=1), suite12.catalog)
    for (v, m), rec in pools.pools.items():
        c_max = float(rec.tokens.max())
        interior = (rec.tokens / c_max > 1e-3) & (rec.tokens / c_max < 1 - 1e-3)
        np.testing.assert_array_equal(zero.pools[(v, m)].tokens[interior], rec.tokens[interior])
    # Execution unaffected: originals untouched, and a run that plans from an
    # identically-distributed perturbed copy is bitwise identical.
    for (v, m), rec in pools.pools.items():
        assert not np.shares_memory(rec.success, noisy.pools[(v, m)].success)
        assert not np.shares_memory(rec.tokens, tok_noisy.pools[(v, m)].tokens)
    inst = suite12.with_limits(0.2, 240.0)
    identity = perturb_success_rate(pools, NoiseSpec(kind=SUCCESS_RATE, sigma=0.0, seed=5))
    cfg = PlannerConfig(n_sim=16)
    clean = run_mcpp(inst, cfg, seed=123)
    shadow = run_mcpp(inst, cfg, seed=123, planning_instance=inst.with_pools(identity))
    assert clean.status == shadow.status
    assert [(r.action, r.completed_now, r.cost, r.duration) for r in clean.trace] == [
        (r.action, r.completed_now, r.cost, r.duration) for r in shadow.trace
    ]
    print("criterion 9 PASS: flip counts exact and minimal, clips in bounds, execution unaffected")


def test_criterion_10_interval_coverage(suite):
    # Hoeffding interval around the estimated rate covers the exact value.
    n_eval, delta, reps = 2000, 0.05, 500
    radius = math.sqrt(math.log(2 / delta) / (2 * n_eval))
    inst = oracle = None
    for cand_inst, cand_oracle in suite:
        value = cand_oracle.policy_value(initial_state(cand_inst), BasePolicy(1, 2))
        if 0.3 <= value <= 0.9:
            inst, oracle = cand_inst, cand_oracle
            break
    assert inst is not None
    exact = oracle.policy_value(initial_state(inst), BasePolicy(1, 2))
    covered = 0
    for r in range(reps):
        rate = test_kernel.kernel_base_rate(inst, 1, 2, n_eval, stream_key(400, rngmod.EVAL, r))
        covered += abs(rate - exact) <= radius
    assert covered >= 0.95 * reps
    print(
        f"criterion 10 PASS: {covered}/{reps} intervals cover the exact value "
        f"{exact:.4f} (radius {radius:.4f})"
    )


def test_criterion_11_cli_determinism(tmp_path):
    from mcpp.cli import main

    wf = tmp_path / "w.json"
    rc = main(
        [
            "gen", "--nodes", "6", "--shape", "chain", "--models", "2",
            "--mode", "empirical", "--pool-size", "64", "--seed", "13", "--out", str(wf),
        ]
    )
    assert rc == 0
    outputs = []
    for name, workers in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "8")):
        out = tmp_path / name
        rc = main(
            [
                "eval", "--workflow", str(wf), "--methods", "mcpp,retry,uniform",
                "--budgets", "0.05,0.5", "--deadlines", "120", "--sims", "8",
                "--n-eval", "50", "--seed", "6", "--workers", workers, "--out", str(out),
            ]
        )
        assert rc == 0
        outputs.append(out.read_bytes().decode())
    import csv as csv_mod
    import io

    def strip_timing(text):
        rows = list(csv_mod.reader(io.StringIO(text)))
        drop = rows[0].index("mean_planner_s")
        return [[c for i, c in enumerate(row) if i != drop] for row in rows]

    assert strip_timing(outputs[0]) == strip_timing(outputs[1])
    assert strip_timing(outputs[0]) == strip_timing(outputs[2])
    print("criterion 11 PASS: eval output identical across invocations and worker counts 1 and 8")
