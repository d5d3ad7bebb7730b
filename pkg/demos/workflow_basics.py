"""Build a workflow by hand, validate it, and poke at the execution model.

A workflow is a DAG of subtasks. Each subtask is attempted by invoking a
model at some width k (parallel samples); an attempt either succeeds or
fails, and costs money and wall-clock time. This script assembles a small
diamond-shaped workflow, inspects ready sets, and walks one random episode.
"""

import numpy as np

from mcpp import (
    Action,
    ModelCatalog,
    ModelSpec,
    ProfileTable,
    WorkflowGraph,
    WorkflowInstance,
    apply_outcome,
    initial_state,
    ready_set,
    sample_transition,
    success_prob,
    validate,
)
from mcpp.rng import substream

# A diamond: node 0 fans out to 1 and 2, which join at 3.
graph = WorkflowGraph(n_nodes=4, edges=((0, 1), (0, 2), (1, 3), (2, 3)))

catalog = ModelCatalog(
    (
        ModelSpec(id="small", price_per_1k_tokens_usd=0.0008, tokens_per_second=90.0),
        ModelSpec(id="large", price_per_1k_tokens_usd=0.0060, tokens_per_second=35.0),
    )
)

# Per-(node, model) single-attempt success probability and mean output tokens.
p = np.array([[0.55, 0.85], [0.40, 0.75], [0.60, 0.90], [0.35, 0.70]])
tokens = np.full((4, 2), 600.0)
profiles = ProfileTable.from_stats(p, tokens, catalog)

instance = WorkflowInstance(
    graph=graph, catalog=catalog, mode="parametric", profiles=profiles
).with_limits(budget_usd=0.25, deadline_s=120.0)

problems = validate(instance)
print("validation:", problems if problems else "ok")

print("\nready sets as work completes:")
for done in (set(), {0}, {0, 1}, {0, 1, 2, 3}):
    print(f"  completed={sorted(done)} -> ready={sorted(ready_set(graph, done))}")

# Width buys success probability with geometrically decaying returns.
print("\nsuccess probability of node 1 on 'small' by width:")
for k in (1, 2, 4, 8, 16):
    print(f"  k={k:2d}  q={success_prob(p[1, 0], k):.4f}")

# One random episode: attempt every ready node with ('large', 2) each round.
print("\none seeded episode:")
state = initial_state(instance)
stream = substream(7, 1)
round_idx = 0
while state.completed != frozenset(range(4)):
    ready = sorted(ready_set(graph, state.completed))
    action = Action.from_mapping({v: (1, 2) for v in ready})
    outcome = sample_transition(state, action, instance, stream)
    state = apply_outcome(state, action, outcome)
    print(
        f"  round {round_idx}: tried {ready}, finished {sorted(outcome.completed_now)}, "
        f"spent ${outcome.cost / 1e6:.4f}, {outcome.duration / 1e3:.1f} s elapsed"
    )
    round_idx += 1
print(f"done with ${state.budget_left / 1e6:.4f} and {state.time_left / 1e3:.1f} s to spare")
