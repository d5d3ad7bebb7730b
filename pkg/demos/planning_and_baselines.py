"""Plan one round, then compare closed-loop planning against the baselines.

The planner scores every feasible candidate allocation by simulating it
followed by the best fixed Retry continuation, executes the argmax, observes
what actually happened, and replans. Retry-(m, k) applies one (model, width)
pair forever; Uniform splits the budget evenly up front and dispatches each
node once.
"""

from mcpp import PlannerConfig, estimate_success_probability, generate_instance
from mcpp.engine import initial_state
from mcpp.harness import SyntheticSpec
from mcpp.planner import select_action

instance = generate_instance(
    SyntheticSpec(n_nodes=8, shape="chain", n_models=3, mode="empirical", pool_size=256, seed=5)
).with_limits(budget_usd=0.05, deadline_s=150.0)

config = PlannerConfig(n_sim=64)

# What does the first planning round look like?
action, scores = select_action(initial_state(instance), instance, config, seed=0)
print("first-round score table (top 5 of", len(scores), "candidates):")
for sc in sorted(scores, key=lambda s: -s.portfolio_score)[:5]:
    (node, model, width), = sc.action.assignments
    mu = sc.best_continuation
    print(
        f"  node {node} <- model {model} width {width:2d}   "
        f"score {sc.portfolio_score:.3f} +/- {sc.radius:.3f}  "
        f"(best continuation: Retry-({mu.model},{mu.width}))"
    )
print("selected:", action.assignments)

# Closed-loop comparison at matched evaluation seeds.
n_eval = 400
print(f"\nsuccess rates over {n_eval} evaluation runs:")
row = estimate_success_probability(instance, "mcpp", config, n_eval, 0.05, seed=1)
print(f"  mcpp                     {row.success_rate:.3f} +/- {row.ci_radius:.3f} "
      f"(mean planner step {row.mean_planner_s * 1e3:.1f} ms)")
for model in range(3):
    for width in (1, 4, 16):
        row = estimate_success_probability(
            instance, "retry", config, n_eval, 0.05, seed=1, model=model, width=width
        )
        print(f"  retry model={model} width={width:2d}  {row.success_rate:.3f}")
for model in range(3):
    row = estimate_success_probability(instance, "uniform", config, n_eval, 0.05, seed=1, model=model)
    print(f"  uniform model={model}        {row.success_rate:.3f}")
