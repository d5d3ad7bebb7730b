"""Monte Carlo portfolio planning: candidates, rollout scoring, closed loop.

At each state the planner enumerates candidate allocation actions, scores
every feasible candidate by its best continuation policy from the Retry
portfolio via simulated rollouts, executes only the argmax action, observes
the realized outcome, and replans.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from . import _kernel
from . import rng as rngmod
from .arrays import pack
from .engine import (
    Action,
    ContractViolation,
    ExecState,
    apply_outcome,
    initial_state,
    is_feasible,
    ready_nodes,
    sample_transition,
)
from .model import InputError, WorkflowInstance
from .policies import FAILURE, SUCCESS, BasePolicy, RoundRecord, RunResult

DEFAULT_WIDTHS = (1, 4, 16, 64)


@dataclass(frozen=True)
class PlannerConfig:
    widths: tuple[int, ...] = DEFAULT_WIDTHS
    n_sim: int = 64
    enumeration_cap: int = 4096
    delta: float = 0.05
    tie_break: str = "lexicographic"

    def __post_init__(self):
        if not self.widths or list(self.widths) != sorted(set(self.widths)):
            raise InputError("widths must be non-empty and strictly increasing")
        if any(k < 1 for k in self.widths):
            raise InputError("widths must be positive")
        if self.n_sim < 1:
            raise InputError("n_sim must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise InputError("delta must be in (0,1)")


@dataclass(frozen=True)
class ActionScore:
    action: Action
    per_continuation: tuple[float, ...]  # one estimate per portfolio policy
    portfolio_score: float
    best_continuation: BasePolicy
    radius: float  # Hoeffding radius at the configured confidence


def portfolio(instance: WorkflowInstance, config: PlannerConfig) -> list[BasePolicy]:
    """All Retry-(m, k) base policies over the catalog and width grid."""
    return [
        BasePolicy(model=m, width=k)
        for m in range(len(instance.catalog))
        for k in config.widths
    ]


def hoeffding_radius(n_pairs: int, n_sim: int, delta: float) -> float:
    """Union-bound concentration radius over n_pairs estimates of n_sim sims."""
    if n_pairs < 1 or n_sim < 1:
        raise InputError("n_pairs and n_sim must be >= 1")
    if not 0.0 < delta < 1.0:
        raise InputError("delta must be in (0,1)")
    return math.sqrt(math.log(2.0 * n_pairs / delta) / (2.0 * n_sim))


def candidates(state: ExecState, instance: WorkflowInstance, config: PlannerConfig) -> list[Action]:
    """Candidate allocation actions at `state`, sorted by canonical encoding.

    The full (model, width) product over the ready set is enumerated when it
    fits under the cap; otherwise the set is pruned to all homogeneous
    actions (the portfolio's base actions, kept by construction) plus every
    single-node deviation from each homogeneous action.
    """
    ready = sorted(ready_nodes(instance, state))
    if not ready:
        raise ContractViolation("candidates called at a terminal state")
    pairs = [(m, k) for m in range(len(instance.catalog)) for k in config.widths]
    n_pairs = len(pairs)
    if n_pairs ** len(ready) <= config.enumeration_cap:
        return [
            Action.from_mapping({v: mk for v, mk in zip(ready, combo)})
            for combo in product(pairs, repeat=len(ready))
        ]
    seen: set[tuple] = set()
    out: list[Action] = []
    for base_pair in pairs:
        base = {v: base_pair for v in ready}
        for assignment in _with_deviations(base, ready, pairs):
            act = Action.from_mapping(assignment)
            if act.assignments not in seen:
                seen.add(act.assignments)
                out.append(act)
    out.sort()
    return out


def _with_deviations(base: dict, ready: list[int], pairs: list) -> list[dict]:
    variants = [dict(base)]
    for v in ready:
        for mk in pairs:
            if mk != base[v]:
                dev = dict(base)
                dev[v] = mk
                variants.append(dev)
    return variants


def _candidate_arrays(actions: list[Action]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nodes = np.array(actions[0].nodes, dtype=np.int64)
    n_cand, r = len(actions), len(nodes)
    models = np.empty((n_cand, r), dtype=np.int64)
    widths = np.empty((n_cand, r), dtype=np.int64)
    for c, act in enumerate(actions):
        for i, (_, m, k) in enumerate(act.assignments):
            models[c, i] = m
            widths[c, i] = k
    return nodes, models, widths


def _state_mask(state: ExecState) -> int:
    mask = 0
    for v in state.completed:
        mask |= 1 << v
    return mask


def mc_value(
    state: ExecState,
    action: Action,
    continuation: BasePolicy,
    n_sim: int,
    instance: WorkflowInstance,
    seed: int,
) -> float:
    """Monte Carlo estimate of the action's constrained completion value.

    Runs n_sim simulations that first apply `action` (an infeasible or
    constraint-violating round counts as failure) and then follow the
    continuation policy until completion or violation.
    """
    arr = pack(instance)
    nodes, models, widths = _candidate_arrays([action])
    counts = _kernel.mc_pairs(
        arr.mode, arr.pred, arr.full_mask, arr.p, arr.cost, arr.tau,
        arr.pool_n, arr.pool_succ, arr.pool_cost, arr.pool_lat,
        np.int64(_state_mask(state)), np.int64(state.budget_left), np.int64(state.time_left),
        nodes, models, widths,
        np.array([continuation.model], dtype=np.int64),
        np.array([continuation.width], dtype=np.int64),
        n_sim, np.uint64(seed),
    )
    return counts[0, 0] / n_sim


def select_action(
    state: ExecState,
    instance: WorkflowInstance,
    config: PlannerConfig,
    seed: int,
    round_index: int = 0,
) -> Optional[tuple[Action, list[ActionScore]]]:
    """Score feasible candidates and return the argmax with its score table.

    Returns None (NO_FEASIBLE) when no candidate fits the remaining budget
    and deadline.  Ties break to the lexicographically smallest action
    encoding; the per-pair simulation streams are derived from
    (seed, round, candidate index, continuation index, replicate index).
    """
    prof = instance.planning_profiles
    cands = candidates(state, instance, config)
    feasible = [a for a in cands if is_feasible(state, a, prof)]
    if not feasible:
        return None
    pi0 = portfolio(instance, config)
    arr = pack(instance)
    nodes, models, widths = _candidate_arrays(feasible)
    mu_ms = np.array([mu.model for mu in pi0], dtype=np.int64)
    mu_ks = np.array([mu.width for mu in pi0], dtype=np.int64)
    base_seed = rngmod.stream_key(seed, rngmod.PLAN, round_index)
    counts = _kernel.mc_pairs(
        arr.mode, arr.pred, arr.full_mask, arr.p, arr.cost, arr.tau,
        arr.pool_n, arr.pool_succ, arr.pool_cost, arr.pool_lat,
        np.int64(_state_mask(state)), np.int64(state.budget_left), np.int64(state.time_left),
        nodes, models, widths, mu_ms, mu_ks, config.n_sim, np.uint64(base_seed),
    )
    radius = hoeffding_radius(len(feasible) * len(pi0), config.n_sim, config.delta)
    scores = []
    best_idx = 0
    best_score = -1.0
    for c, act in enumerate(feasible):
        per_mu = tuple(counts[c, j] / config.n_sim for j in range(len(pi0)))
        j_best = int(np.argmax(counts[c]))
        score = per_mu[j_best]
        scores.append(
            ActionScore(
                action=act,
                per_continuation=per_mu,
                portfolio_score=score,
                best_continuation=pi0[j_best],
                radius=radius,
            )
        )
        if score > best_score:  # candidates are encoding-sorted: first max wins
            best_score = score
            best_idx = c
    return feasible[best_idx], scores


def run_mcpp(
    instance: WorkflowInstance,
    config: PlannerConfig,
    seed: int,
    planning_instance: Optional[WorkflowInstance] = None,
) -> RunResult:
    """Closed-loop planning run: select, execute, observe, replan.

    `planning_instance` lets the planner simulate from a different (for
    example noise-perturbed) copy of the statistics; real outcomes are always
    sampled from `instance`.
    """
    plan_inst = instance if planning_instance is None else planning_instance
    state = initial_state(instance)
    trace: list[RoundRecord] = []
    n_all = frozenset(range(instance.graph.n_nodes))
    round_idx = 0
    while state.completed != n_all:
        t0 = time.perf_counter()
        plan_state = ExecState(
            completed=state.completed,
            budget_left=state.budget_left,
            time_left=state.time_left,
        )
        picked = select_action(plan_state, plan_inst, config, seed, round_index=round_idx)
        planner_seconds = time.perf_counter() - t0
        if picked is None:
            return RunResult(status=FAILURE, state=state, trace=trace)
        action, scores = picked
        # The planner filtered on its own (possibly perturbed) estimates;
        # execution still enforces the true remaining limits.
        if not is_feasible(state, action, instance.planning_profiles):
            return RunResult(status=FAILURE, state=state, trace=trace)
        stream = rngmod.substream(seed, rngmod.EXECUTE, round_idx)
        outcome = sample_transition(state, action, instance, stream)
        state = apply_outcome(state, action, outcome)
        chosen = next(s for s in scores if s.action == action)
        trace.append(
            RoundRecord(
                action=action,
                completed_now=tuple(sorted(outcome.completed_now)),
                cost=outcome.cost,
                duration=outcome.duration,
                planner_seconds=planner_seconds,
                score=chosen.portfolio_score,
            )
        )
        if state.budget_left < 0 or state.time_left < 0:
            return RunResult(status=FAILURE, state=state, trace=trace)
        round_idx += 1
    return RunResult(status=SUCCESS, state=state, trace=trace)
