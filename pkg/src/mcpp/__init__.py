"""Constraint-driven workflow execution: Monte Carlo portfolio planning,
baselines, an exact dynamic-programming oracle, and an evaluation harness."""

from .engine import (
    Action,
    ExecState,
    TransitionOutcome,
    action_cost,
    action_duration,
    apply_outcome,
    initial_state,
    is_feasible,
    sample_transition,
    subset_probability,
    success_prob,
)
from .harness import (
    EvaluationReport,
    ReportRow,
    SyntheticSpec,
    ci_radius,
    emit_report,
    estimate_success_probability,
    generate_instance,
    m_sweep,
    sweep,
)
from .model import (
    ModelCatalog,
    ModelSpec,
    PoolTable,
    ProfileTable,
    WorkflowGraph,
    WorkflowInstance,
    derive_profile,
    load_workflow,
    ready_set,
    save_workflow,
    validate,
)
from .noise import NoiseSpec, perturb_success_rate, perturb_token_lengths
from .oracle import ExactOracle, exact_policy_value, exact_portfolio_plan, exact_q, exact_value
from .planner import (
    ActionScore,
    PlannerConfig,
    candidates,
    hoeffding_radius,
    mc_value,
    run_mcpp,
    select_action,
)
from .policies import BasePolicy, RunResult, UniformPlan, base_action, run_policy, uniform_plan

__all__ = [
    "Action",
    "ActionScore",
    "BasePolicy",
    "EvaluationReport",
    "ExactOracle",
    "ExecState",
    "ModelCatalog",
    "ModelSpec",
    "NoiseSpec",
    "PlannerConfig",
    "PoolTable",
    "ProfileTable",
    "ReportRow",
    "RunResult",
    "SyntheticSpec",
    "TransitionOutcome",
    "UniformPlan",
    "WorkflowGraph",
    "WorkflowInstance",
    "action_cost",
    "action_duration",
    "apply_outcome",
    "base_action",
    "candidates",
    "ci_radius",
    "derive_profile",
    "emit_report",
    "estimate_success_probability",
    "exact_policy_value",
    "exact_portfolio_plan",
    "exact_q",
    "exact_value",
    "generate_instance",
    "hoeffding_radius",
    "initial_state",
    "is_feasible",
    "load_workflow",
    "m_sweep",
    "mc_value",
    "perturb_success_rate",
    "perturb_token_lengths",
    "ready_set",
    "run_mcpp",
    "run_policy",
    "sample_transition",
    "save_workflow",
    "select_action",
    "subset_probability",
    "success_prob",
    "sweep",
    "uniform_plan",
    "validate",
]
