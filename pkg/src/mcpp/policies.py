"""Base (Retry) policies, the static Uniform baseline, and the policy runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from . import rng as rngmod
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

SUCCESS = "SUCCESS"
FAILURE = "FAILURE"

# Zero-cost models would make the Uniform width rule unbounded; cap dispatches.
UNIFORM_WIDTH_CAP = 4096


@dataclass(frozen=True, order=True)
class BasePolicy:
    """Retry-(m, k): assign model m with width k to every ready subtask."""

    model: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise InputError(f"width must be >= 1, got {self.width}")


def base_action(policy: BasePolicy, state: ExecState, instance: WorkflowInstance) -> Action:
    ready = ready_nodes(instance, state)
    if not ready:
        raise ContractViolation("base_action called at a terminal state")
    return Action.from_mapping({v: (policy.model, policy.width) for v in ready})


@dataclass(frozen=True)
class UniformPlan:
    """Static plan: per-node widths fixed before execution, dispatched once."""

    model: int
    widths: tuple[int, ...]

    @property
    def feasible(self) -> bool:
        return all(k >= 1 for k in self.widths)


def uniform_plan(instance: WorkflowInstance, model: int) -> UniformPlan:
    """Distribute the budget uniformly: k_v = floor((B/|V|) / c_{v,m})."""
    n = instance.graph.n_nodes
    prof = instance.planning_profiles
    widths = []
    for v in range(n):
        c = int(prof.cost_micro[v, model])
        if c == 0:
            widths.append(UNIFORM_WIDTH_CAP)
        else:
            widths.append(instance.budget_micro // (n * c))
    return UniformPlan(model=model, widths=tuple(widths))


@dataclass
class RoundRecord:
    action: Action
    completed_now: tuple[int, ...]
    cost: int
    duration: int
    planner_seconds: float = 0.0
    score: Optional[float] = None


@dataclass
class RunResult:
    status: str
    state: ExecState
    trace: list[RoundRecord] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


PolicyLike = Union[BasePolicy, UniformPlan, Callable[[ExecState, WorkflowInstance], Optional[Action]]]


def run_policy(instance: WorkflowInstance, policy: PolicyLike, seed: int) -> RunResult:
    """Execute a policy closed-loop on the instance; deterministic per seed.

    Each round the policy proposes an action for the current ready set; an
    infeasible or missing action ends the run as FAILURE.  Success requires
    all subtasks completed with realized spend <= B and elapsed <= D.
    """
    state = initial_state(instance)
    trace: list[RoundRecord] = []
    prof = instance.planning_profiles
    n_all = frozenset(range(instance.graph.n_nodes))
    if isinstance(policy, UniformPlan) and not policy.feasible:
        return RunResult(status=FAILURE, state=state, trace=trace)
    round_idx = 0
    while state.completed != n_all:
        action = _policy_action(policy, state, instance)
        if action is None or len(action) == 0 or not is_feasible(state, action, prof):
            return RunResult(status=FAILURE, state=state, trace=trace)
        stream = rngmod.substream(seed, rngmod.EXECUTE, round_idx)
        outcome = sample_transition(state, action, instance, stream)
        state = apply_outcome(state, action, outcome)
        trace.append(
            RoundRecord(
                action=action,
                completed_now=tuple(sorted(outcome.completed_now)),
                cost=outcome.cost,
                duration=outcome.duration,
            )
        )
        if state.budget_left < 0 or state.time_left < 0:
            return RunResult(status=FAILURE, state=state, trace=trace)
        if isinstance(policy, UniformPlan):
            # Single dispatch per node: any node that failed its one attempt
            # can never complete, so the run is already lost.
            if any(v not in state.completed for v in action.nodes):
                return RunResult(status=FAILURE, state=state, trace=trace)
        round_idx += 1
    return RunResult(status=SUCCESS, state=state, trace=trace)


def _policy_action(
    policy: PolicyLike, state: ExecState, instance: WorkflowInstance
) -> Optional[Action]:
    if isinstance(policy, BasePolicy):
        return base_action(policy, state, instance)
    if isinstance(policy, UniformPlan):
        ready = ready_nodes(instance, state)
        return Action.from_mapping({v: (policy.model, policy.widths[v]) for v in ready})
    return policy(state, instance)
