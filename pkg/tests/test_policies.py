import math

import numpy as np
import pytest

from conftest import make_parametric, single_node_instance
from mcpp.engine import ContractViolation, ExecState, initial_state
from mcpp.model import usd_to_micro
from mcpp.policies import (
    FAILURE,
    SUCCESS,
    BasePolicy,
    UniformPlan,
    base_action,
    run_policy,
    uniform_plan,
)


class TestBaseAction:
    def test_assigns_every_ready_node(self):
        inst = make_parametric(3, ((0, 1), (0, 2)), np.full((3, 2), 0.5), 1, 1, 50, 50)
        state = ExecState(completed=frozenset({0}), budget_left=49, time_left=49)
        act = base_action(BasePolicy(model=0, width=4), state, inst)
        assert act.as_mapping() == {1: (0, 4), 2: (0, 4)}

    def test_single_ready_node(self):
        inst = single_node_instance()
        act = base_action(BasePolicy(model=0, width=1), initial_state(inst), inst)
        assert act.as_mapping() == {0: (0, 1)}

    def test_terminal_state_rejected(self):
        inst = single_node_instance()
        done = ExecState(completed=frozenset({0}), budget_left=1, time_left=1)
        with pytest.raises(ContractViolation):
            base_action(BasePolicy(model=0, width=1), done, inst)


class TestUniformPlan:
    def test_even_split(self):
        inst = make_parametric(4, (), np.full((4, 1), 0.5), usd_to_micro(0.05), 1, usd_to_micro(1.0), 100)
        plan = uniform_plan(inst, 0)
        assert plan.widths == (5, 5, 5, 5)
        assert plan.feasible

    def test_floor_to_zero_is_infeasible(self):
        inst = make_parametric(4, (), np.full((4, 1), 0.5), usd_to_micro(0.05), 1, usd_to_micro(0.04), 100)
        plan = uniform_plan(inst, 0)
        assert plan.widths == (0, 0, 0, 0)
        assert not plan.feasible

    def test_heterogeneous_costs(self):
        cost = [[usd_to_micro(0.05)], [usd_to_micro(0.10)]]
        inst = make_parametric(2, (), np.full((2, 1), 0.5), cost, 1, usd_to_micro(1.0), 100)
        assert uniform_plan(inst, 0).widths == (10, 5)


class TestRunPolicy:
    def test_certain_success_one_round(self):
        inst = single_node_instance(p=1.0, cost=1, lat=1, budget=10, deadline=10)
        result = run_policy(inst, BasePolicy(model=0, width=1), seed=0)
        assert result.status == SUCCESS
        assert len(result.trace) == 1

    def test_retry_width_two_one_round_frequency(self):
        # One affordable round, k=2: success probability exactly 0.75.
        inst = single_node_instance(p=0.5, cost=1, lat=1, budget=2, deadline=1)
        n = 20_000
        hits = sum(run_policy(inst, BasePolicy(model=0, width=2), seed=s).success for s in range(n))
        sigma = math.sqrt(0.75 * 0.25 / n)
        assert abs(hits / n - 0.75) <= 3 * sigma

    def test_chain_deadline_too_short(self):
        inst = make_parametric(2, ((0, 1),), np.full((2, 1), 1.0), 1, 5, 100, 5)
        result = run_policy(inst, BasePolicy(model=0, width=1), seed=0)
        assert result.status == FAILURE  # second node cannot start before the deadline

    def test_zero_budget_fails_immediately(self):
        inst = single_node_instance(p=1.0, cost=1, budget=0, deadline=10)
        result = run_policy(inst, BasePolicy(model=0, width=1), seed=0)
        assert result.status == FAILURE and result.trace == []

    def test_infeasible_uniform_plan_fails(self):
        inst = single_node_instance(budget=0)
        result = run_policy(inst, UniformPlan(model=0, widths=(0,)), seed=0)
        assert result.status == FAILURE

    def test_uniform_single_dispatch_aborts_on_miss(self):
        inst = single_node_instance(p=0.0, cost=1, budget=10, deadline=10)
        result = run_policy(inst, UniformPlan(model=0, widths=(2,)), seed=0)
        assert result.status == FAILURE
        assert len(result.trace) == 1  # no second dispatch for a missed node

    def test_deterministic_per_seed(self):
        inst = make_parametric(3, ((0, 1),), np.full((3, 1), 0.6), 1, 1, 12, 12)
        a = run_policy(inst, BasePolicy(model=0, width=1), seed=7)
        b = run_policy(inst, BasePolicy(model=0, width=1), seed=7)
        assert a.status == b.status
        assert [r.completed_now for r in a.trace] == [r.completed_now for r in b.trace]

    def test_callable_policy(self):
        inst = single_node_instance(p=1.0, budget=5, deadline=5)

        def give_up(state, instance):
            return None

        assert run_policy(inst, give_up, seed=0).status == FAILURE
