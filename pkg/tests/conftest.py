"""Shared instance builders for the test suite.

Small parametric instances use tiny integer costs and latencies so the exact
recursion enumerates a manageable state lattice.
"""

from __future__ import annotations

import numpy as np

from mcpp.model import (
    PARAMETRIC,
    ModelCatalog,
    ModelSpec,
    ProfileTable,
    WorkflowGraph,
    WorkflowInstance,
)
from mcpp.rng import substream

# Path tag for test-local draws, distinct from the library's purpose tags.
TEST_STREAM = 100


def make_catalog(n_models: int) -> ModelCatalog:
    return ModelCatalog(
        tuple(
            ModelSpec(id=f"m{i}", price_per_1k_tokens_usd=0.001 * (i + 1), tokens_per_second=50.0)
            for i in range(n_models)
        )
    )


def make_parametric(
    n_nodes: int,
    edges,
    p,
    cost,
    lat,
    budget: int,
    deadline: int,
    n_models: int | None = None,
) -> WorkflowInstance:
    """Parametric instance with explicit integer per-attempt costs/latencies."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if n_models is None:
        n_models = p.shape[1]
    profiles = ProfileTable(
        p=p,
        cost_micro=np.broadcast_to(np.asarray(cost, dtype=np.int64), p.shape).copy(),
        latency_ms=np.broadcast_to(np.asarray(lat, dtype=np.int64), p.shape).copy(),
    )
    return WorkflowInstance(
        graph=WorkflowGraph(n_nodes=n_nodes, edges=tuple(edges)),
        catalog=make_catalog(n_models),
        mode=PARAMETRIC,
        profiles=profiles,
        budget_micro=budget,
        deadline_ms=deadline,
    )


def single_node_instance(
    p: float = 0.5, cost: int = 1, lat: int = 1, budget: int = 2, deadline: int = 1
) -> WorkflowInstance:
    """One node, one model: the smallest instance with a non-trivial choice."""
    return make_parametric(1, (), [[p]], [[cost]], [[lat]], budget, deadline)


def random_small_instance(seed: int, max_nodes: int = 5, n_models: int = 2) -> WorkflowInstance:
    """Random DAG instance small enough for exhaustive exact computation."""
    gen = substream(seed, TEST_STREAM)
    n = int(gen.integers(1, max_nodes + 1))
    edges = tuple(
        (u, v) for u in range(n) for v in range(u + 1, n) if gen.random() < 0.4
    )
    p = np.round(gen.uniform(0.15, 0.95, size=(n, n_models)), 2)
    cost = gen.integers(1, 4, size=(n, n_models))
    lat = gen.integers(1, 4, size=(n, n_models))
    budget = int(gen.integers(2, 11))
    deadline = int(gen.integers(2, 9))
    return make_parametric(n, edges, p, cost, lat, budget, deadline, n_models=n_models)
