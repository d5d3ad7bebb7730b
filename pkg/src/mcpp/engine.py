"""Stochastic execution: states, allocation actions, transitions.

All operations are pure given (state, action, rng stream); the engine holds
no shared mutable state, so any number of simulations may run concurrently
over one read-only instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    EMPIRICAL,
    PARAMETRIC,
    InputError,
    ProfileTable,
    WorkflowInstance,
    ready_set,
)


class ContractViolation(RuntimeError):
    """An operation was invoked outside its stated precondition."""


@dataclass(frozen=True)
class ExecState:
    """Planner/simulator state: completed set plus remaining budget and time.

    Invariant along a run: spent + budget_left == B and
    elapsed + time_left == D (both in exact integer units).
    """

    completed: frozenset[int]
    budget_left: int  # micro-USD
    time_left: int  # ms
    spent: int = 0
    elapsed: int = 0


def initial_state(instance: WorkflowInstance) -> ExecState:
    return ExecState(
        completed=frozenset(),
        budget_left=instance.budget_micro,
        time_left=instance.deadline_ms,
    )


@dataclass(frozen=True, order=True)
class Action:
    """Per-ready-subtask (model, width) assignment.

    Stored as a tuple of (node, model_index, width) sorted by node; the tuple
    is also the canonical encoding used for deduplication and deterministic
    tie-breaking.
    """

    assignments: tuple[tuple[int, int, int], ...]

    @classmethod
    def from_mapping(cls, mapping: dict[int, tuple[int, int]]) -> "Action":
        items = tuple(sorted((v, m, k) for v, (m, k) in mapping.items()))
        for v, m, k in items:
            if k < 1:
                raise InputError(f"width must be >= 1, got {k} at node {v}")
        return cls(assignments=items)

    def as_mapping(self) -> dict[int, tuple[int, int]]:
        return {v: (m, k) for v, m, k in self.assignments}

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(v for v, _, _ in self.assignments)

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass(frozen=True)
class TransitionOutcome:
    """Realized result of executing one action."""

    completed_now: frozenset[int]
    cost: int  # micro-USD actually charged
    duration: int  # ms actually consumed
    per_node: dict[int, dict]  # node -> {"samples": k, "succeeded": bool}


def success_prob(p: float, k: int) -> float:
    """Probability that at least one of k independent attempts succeeds."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p={p} outside [0,1]")
    if k < 1:
        raise InputError(f"k={k} must be >= 1")
    if p == 1.0:
        return 1.0
    # 1 - (1-p)^k via expm1/log1p, stable for p near 0.
    return -math.expm1(k * math.log1p(-p))


def action_cost(action: Action, profiles: ProfileTable) -> int:
    """Estimated budget consumption: sum of width x per-attempt cost."""
    return int(sum(k * int(profiles.cost_micro[v, m]) for v, m, k in action.assignments))


def action_duration(action: Action, profiles: ProfileTable) -> int:
    """Estimated wall-clock duration under ideal parallelism (max latency)."""
    if not action.assignments:
        return 0
    return int(max(int(profiles.latency_ms[v, m]) for v, m, _ in action.assignments))


def is_feasible(state: ExecState, action: Action, profiles: ProfileTable) -> bool:
    """True iff the action's estimated cost and duration fit the remaining limits."""
    return (
        action_cost(action, profiles) <= state.budget_left
        and action_duration(action, profiles) <= state.time_left
    )


def subset_probability(
    state: ExecState, action: Action, subset: set[int] | frozenset[int], profiles: ProfileTable
) -> float:
    """Probability that exactly `subset` of the assigned subtasks completes."""
    assigned = set(action.nodes)
    if not set(subset) <= assigned:
        raise InputError(f"subset {sorted(subset)} not within assigned nodes {sorted(assigned)}")
    prob = 1.0
    for v, m, k in action.assignments:
        q = success_prob(float(profiles.p[v, m]), k)
        prob *= q if v in subset else 1.0 - q
    return prob


def sample_transition(
    state: ExecState,
    action: Action,
    instance: WorkflowInstance,
    rng: np.random.Generator,
) -> TransitionOutcome:
    """Draw one realized outcome of executing `action` at `state`.

    Parametric mode: each node succeeds with probability q = 1-(1-p)^k and
    cost/duration equal their deterministic estimates; an infeasible action
    is a contract violation.  Empirical mode: k records are drawn with
    replacement per node, success is the OR of the drawn flags, duration is
    the max drawn latency, and the realized token costs are charged.
    """
    prof = instance.planning_profiles
    if instance.mode == PARAMETRIC:
        if not is_feasible(state, action, prof):
            raise ContractViolation("sample_transition called with infeasible action")
        done = set()
        detail = {}
        for v, m, k in action.assignments:
            q = success_prob(float(prof.p[v, m]), k)
            ok = bool(rng.random() < q)
            if ok:
                done.add(v)
            detail[v] = {"samples": k, "succeeded": ok}
        return TransitionOutcome(
            completed_now=frozenset(done),
            cost=action_cost(action, prof),
            duration=action_duration(action, prof),
            per_node=detail,
        )
    assert instance.mode == EMPIRICAL and instance.pools is not None
    done = set()
    detail = {}
    cost = 0
    duration = 0
    for v, m, k in action.assignments:
        rec = instance.pools.pool(v, m)
        idx = rng.integers(0, len(rec), size=k)
        cost += int(rec.cost_micro[idx].sum())
        duration = max(duration, int(rec.latency_ms[idx].max()))
        ok = bool(rec.success[idx].any())
        if ok:
            done.add(v)
        detail[v] = {"samples": k, "succeeded": ok}
    return TransitionOutcome(
        completed_now=frozenset(done), cost=cost, duration=duration, per_node=detail
    )


def apply_outcome(state: ExecState, action: Action, outcome: TransitionOutcome) -> ExecState:
    """Advance the state by one realized transition (value semantics)."""
    return ExecState(
        completed=state.completed | outcome.completed_now,
        budget_left=state.budget_left - outcome.cost,
        time_left=state.time_left - outcome.duration,
        spent=state.spent + outcome.cost,
        elapsed=state.elapsed + outcome.duration,
    )


def ready_nodes(instance: WorkflowInstance, state: ExecState) -> set[int]:
    return ready_set(instance.graph, state.completed)
