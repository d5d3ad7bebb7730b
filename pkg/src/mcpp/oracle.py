"""Exact dynamic programming over small parametric instances.

Budget and time are exact integers (micro-USD, ms), so the reachable state
lattice is finite and memoization is exact.  The oracle is a verification
tool: it refuses empirical instances and enforces explicit size guards
instead of truncating silently.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Iterable, Optional

from .engine import Action, ExecState, success_prob
from .model import PARAMETRIC, InputError, WorkflowInstance
from .planner import PlannerConfig, candidates as planner_candidates, portfolio
from .policies import BasePolicy

MAX_ORACLE_NODES = 12


class UnsupportedModeError(InputError):
    """The oracle only handles parametric instances."""


class SizeGuardError(InputError):
    """The instance exceeds the exact-enumeration guards."""


@dataclass(frozen=True)
class GapDiagnostics:
    candidate_gap: float  # eta: loss from pruning the action space
    continuation_gap: float  # zeta: loss from portfolio continuations


class ExactOracle:
    """Memoized Bellman recursion for one (instance, width grid) pair."""

    def __init__(
        self,
        instance: WorkflowInstance,
        widths: Iterable[int],
        max_nodes: int = MAX_ORACLE_NODES,
        action_cap: int = 4096,
    ):
        if instance.mode != PARAMETRIC:
            raise UnsupportedModeError("exact oracle requires a parametric instance")
        if instance.graph.n_nodes > max_nodes:
            raise SizeGuardError(
                f"{instance.graph.n_nodes} nodes exceeds the oracle guard ({max_nodes})"
            )
        self.instance = instance
        self.widths = tuple(sorted(set(widths)))
        self.action_cap = action_cap
        self._prof = instance.planning_profiles
        g = instance.graph
        self._n = g.n_nodes
        self._full = (1 << self._n) - 1
        self._pred = [0] * self._n
        for v, ps in enumerate(g.predecessors):
            for u in ps:
                self._pred[v] |= 1 << u
        self._pairs = [(m, k) for m in range(len(instance.catalog)) for k in self.widths]
        self._v_opt: dict[tuple[int, int, int], float] = {}
        self._v_pol: dict[tuple[int, int, int, int, int], float] = {}
        self._v_plan: dict[tuple[int, int, int], float] = {}

    # -- state helpers ------------------------------------------------------

    def _mask(self, state: ExecState) -> tuple[int, int, int]:
        mask = 0
        for v in state.completed:
            mask |= 1 << v
        return mask, state.budget_left, state.time_left

    def _ready(self, s_mask: int) -> list[int]:
        return [
            v
            for v in range(self._n)
            if not (s_mask >> v) & 1 and (self._pred[v] & s_mask) == self._pred[v]
        ]

    def _action_cost_dur(self, assignment: list[tuple[int, int, int]]) -> tuple[int, int]:
        cost = 0
        dur = 0
        for v, m, k in assignment:
            cost += k * int(self._prof.cost_micro[v, m])
            dur = max(dur, int(self._prof.latency_ms[v, m]))
        return cost, dur

    def _expect(self, assignment: list[tuple[int, int, int]], s_mask: int, b: int, h: int, value_fn) -> float:
        """Expectation of value_fn over all success subsets of the assignment.

        The subset iteration order is fixed (bitmask counter over the sorted
        node list) so that identical expectations are bitwise identical
        everywhere they appear; this is what makes the zero-tolerance
        improvement checks exact.
        """
        cost, dur = self._action_cost_dur(assignment)
        nb, nh = b - cost, h - dur
        qs = [success_prob(float(self._prof.p[v, m]), k) for v, m, k in assignment]
        r = len(assignment)
        total = 0.0
        for bits in range(1 << r):
            prob = 1.0
            s2 = s_mask
            for i in range(r):
                if (bits >> i) & 1:
                    prob *= qs[i]
                    s2 |= 1 << assignment[i][0]
                else:
                    prob *= 1.0 - qs[i]
            if prob != 0.0:
                total += prob * value_fn(s2, nb, nh)
        return total

    def _feasible(self, assignment: list[tuple[int, int, int]], b: int, h: int) -> bool:
        cost, dur = self._action_cost_dur(assignment)
        return cost <= b and dur <= h

    def _enumerate_actions(self, ready: list[int]) -> list[list[tuple[int, int, int]]]:
        count = len(self._pairs) ** len(ready)
        if count > self.action_cap:
            raise SizeGuardError(
                f"full action space of size {count} exceeds the cap ({self.action_cap})"
            )
        return [
            [(v, m, k) for v, (m, k) in zip(ready, combo)]
            for combo in product(self._pairs, repeat=len(ready))
        ]

    # -- values -------------------------------------------------------------

    def value(self, state: ExecState) -> float:
        """Optimal constrained completion probability from `state`."""
        s_mask, b, h = self._mask(state)
        return self._value(s_mask, b, h)

    def _value(self, s_mask: int, b: int, h: int) -> float:
        if s_mask == self._full:
            return 1.0
        key = (s_mask, b, h)
        hit = self._v_opt.get(key)
        if hit is not None:
            return hit
        best = 0.0
        for assignment in self._enumerate_actions(self._ready(s_mask)):
            if self._feasible(assignment, b, h):
                q = self._expect(assignment, s_mask, b, h, self._value)
                if q > best:
                    best = q
        self._v_opt[key] = best
        return best

    def policy_value(self, state: ExecState, policy: BasePolicy) -> float:
        """Exact value of a fixed Retry-(m, k) policy from `state`."""
        s_mask, b, h = self._mask(state)
        return self._policy_value(s_mask, b, h, policy.model, policy.width)

    def _policy_value(self, s_mask: int, b: int, h: int, m: int, k: int) -> float:
        if s_mask == self._full:
            return 1.0
        key = (s_mask, b, h, m, k)
        hit = self._v_pol.get(key)
        if hit is not None:
            return hit
        assignment = [(v, m, k) for v in self._ready(s_mask)]
        if not self._feasible(assignment, b, h):
            value = 0.0
        else:
            value = self._expect(
                assignment, s_mask, b, h, lambda s2, nb, nh: self._policy_value(s2, nb, nh, m, k)
            )
        self._v_pol[key] = value
        return value

    def q(self, state: ExecState, action: Action, continuation: BasePolicy) -> float:
        """Exact Q_mu(s, a): expected continuation value after executing a."""
        s_mask, b, h = self._mask(state)
        assignment = list(action.assignments)
        if not self._feasible(assignment, b, h):
            return 0.0
        m, k = continuation.model, continuation.width
        return self._expect(
            assignment, s_mask, b, h, lambda s2, nb, nh: self._policy_value(s2, nb, nh, m, k)
        )

    def q_star(self, state: ExecState, action: Action) -> float:
        """Exact optimal Bellman action value E[V*(s')] (0 if infeasible)."""
        s_mask, b, h = self._mask(state)
        assignment = list(action.assignments)
        if not self._feasible(assignment, b, h):
            return 0.0
        return self._expect(assignment, s_mask, b, h, self._value)

    def portfolio_plan(
        self, state: ExecState, config: Optional[PlannerConfig] = None
    ) -> Optional[tuple[Action, float]]:
        """Exact portfolio planner: argmax over candidates of max_mu Q_mu.

        Uses the same candidate generator and tie-break rule as the Monte
        Carlo planner. Returns None when no candidate is feasible.
        """
        if config is None:
            config = PlannerConfig(widths=self.widths, enumeration_cap=self.action_cap)
        cands = planner_candidates(state, self.instance, config)
        pi0 = portfolio(self.instance, config)
        best: Optional[tuple[Action, float]] = None
        s_mask, b, h = self._mask(state)
        for act in cands:
            if not self._feasible(list(act.assignments), b, h):
                continue
            score = max(self.q(state, act, mu) for mu in pi0)
            if best is None or score > best[1]:
                best = (act, score)
        return best

    def closed_loop_plan_value(self, state: ExecState, config: Optional[PlannerConfig] = None) -> float:
        """Value of applying the exact portfolio planner at every state."""
        if config is None:
            config = PlannerConfig(widths=self.widths, enumeration_cap=self.action_cap)
        s_mask, b, h = self._mask(state)
        return self._plan_value(s_mask, b, h, config)

    def _plan_value(self, s_mask: int, b: int, h: int, config: PlannerConfig) -> float:
        if s_mask == self._full:
            return 1.0
        key = (s_mask, b, h)
        hit = self._v_plan.get(key)
        if hit is not None:
            return hit
        state = _state_from_mask(s_mask, b, h, self._n)
        picked = self.portfolio_plan(state, config)
        if picked is None:
            value = 0.0
        else:
            action, _ = picked
            value = self._expect(
                list(action.assignments), s_mask, b, h,
                lambda s2, nb, nh: self._plan_value(s2, nb, nh, config),
            )
        self._v_plan[key] = value
        return value

    def gap_diagnostics(self, state: ExecState, pruned: list[Action], config: Optional[PlannerConfig] = None) -> GapDiagnostics:
        """Candidate-set gap eta and continuation gap zeta at `state`."""
        if config is None:
            config = PlannerConfig(widths=self.widths, enumeration_cap=self.action_cap)
        pi0 = portfolio(self.instance, config)
        s_mask, b, h = self._mask(state)
        full_actions = [
            Action.from_mapping({v: (m, k) for v, m, k in assignment})
            for assignment in self._enumerate_actions(self._ready(s_mask))
        ]
        best_full = max(max(self.q(state, a, mu) for mu in pi0) for a in full_actions)
        best_pruned = max(max(self.q(state, a, mu) for mu in pi0) for a in pruned)
        q_star_best = max(self.q_star(state, a) for a in full_actions)
        return GapDiagnostics(
            candidate_gap=best_full - best_pruned,
            continuation_gap=q_star_best - best_full,
        )

    def enumerated_states(self) -> list[tuple[int, int, int]]:
        """All (S mask, b, h) keys memoized so far by the optimal recursion."""
        return sorted(self._v_opt.keys())


def _state_from_mask(s_mask: int, b: int, h: int, n: int) -> ExecState:
    completed = frozenset(v for v in range(n) if (s_mask >> v) & 1)
    return ExecState(completed=completed, budget_left=b, time_left=h)


# -- module-level wrappers matching the operation surface --------------------


def exact_value(state: ExecState, instance: WorkflowInstance, widths: Iterable[int]) -> float:
    return ExactOracle(instance, widths).value(state)


def exact_policy_value(state: ExecState, policy: BasePolicy, instance: WorkflowInstance, widths: Iterable[int]) -> float:
    return ExactOracle(instance, widths).policy_value(state, policy)


def exact_q(state: ExecState, action: Action, continuation: BasePolicy, instance: WorkflowInstance, widths: Iterable[int]) -> float:
    return ExactOracle(instance, widths).q(state, action, continuation)


def exact_portfolio_plan(state: ExecState, instance: WorkflowInstance, widths: Iterable[int]) -> Optional[tuple[Action, float]]:
    return ExactOracle(instance, widths).portfolio_plan(state)


def gap_diagnostics(state: ExecState, instance: WorkflowInstance, pruned: list[Action], widths: Iterable[int]) -> GapDiagnostics:
    return ExactOracle(instance, widths).gap_diagnostics(state, pruned)
