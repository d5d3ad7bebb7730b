"""Workflow instances: DAG, model catalog, profiles, rollout pools, file I/O.

Internal units are exact integers so that dynamic-programming memoization
keys never drift: money is micro-USD, time is milliseconds.  USD and
seconds appear only at the I/O boundary.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

MICRO_PER_USD = 1_000_000
MS_PER_S = 1000

PARAMETRIC = "parametric"
EMPIRICAL = "empirical"


def usd_to_micro(usd: float) -> int:
    return int(round(usd * MICRO_PER_USD))


def micro_to_usd(micro: int) -> float:
    return micro / MICRO_PER_USD


def seconds_to_ms(seconds: float) -> int:
    return int(round(seconds * MS_PER_S))


def ms_to_seconds(ms: int) -> float:
    return ms / MS_PER_S


class InputError(ValueError):
    """Raised when an operation is called with out-of-contract arguments."""


class ParseError(ValueError):
    """Raised when a workflow or pool file cannot be read or decoded."""


@dataclass(frozen=True)
class WorkflowGraph:
    """A DAG of subtasks with dense integer node ids."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", tuple(f"n{i}" for i in range(self.n_nodes)))
        preds: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for u, v in self.edges:
            if 0 <= u < self.n_nodes and 0 <= v < self.n_nodes:
                preds[v].add(u)
        object.__setattr__(self, "_preds", tuple(frozenset(p) for p in preds))

    @property
    def predecessors(self) -> tuple[frozenset[int], ...]:
        return self._preds  # type: ignore[attr-defined]

    def pred_masks(self) -> np.ndarray:
        """Predecessor sets as int64 bitmasks (requires n_nodes <= 63)."""
        masks = np.zeros(self.n_nodes, dtype=np.int64)
        for v, ps in enumerate(self.predecessors):
            m = 0
            for u in ps:
                m |= 1 << u
            masks[v] = m
        return masks

    def violations(self) -> list[str]:
        out = []
        seen = set()
        for u, v in self.edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                out.append(f"edge ({u},{v}) references a missing node")
                continue
            if u == v:
                out.append(f"self-loop at node {u}")
            if (u, v) in seen:
                out.append(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if not out and topological_order(self) is None:
            out.append("graph contains a cycle")
        return out


def topological_order(graph: WorkflowGraph) -> list[int] | None:
    """Kahn's algorithm; None if the graph has a cycle."""
    indeg = [len(p) for p in graph.predecessors]
    succ: list[list[int]] = [[] for _ in range(graph.n_nodes)]
    for u, v in graph.edges:
        succ[u].append(v)
    frontier = [v for v in range(graph.n_nodes) if indeg[v] == 0]
    order = []
    while frontier:
        v = frontier.pop()
        order.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                frontier.append(w)
    return order if len(order) == graph.n_nodes else None


def ready_set(graph: WorkflowGraph, completed: set[int] | frozenset[int]) -> set[int]:
    """Subtasks not yet completed whose predecessors are all completed."""
    for v in completed:
        if not (0 <= v < graph.n_nodes):
            raise InputError(f"unknown node id {v} in completed set")
    return {
        v
        for v in range(graph.n_nodes)
        if v not in completed and graph.predecessors[v] <= completed
    }


@dataclass(frozen=True)
class ModelSpec:
    id: str
    price_per_1k_tokens_usd: float
    tokens_per_second: float


@dataclass(frozen=True)
class ModelCatalog:
    models: tuple[ModelSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {m.id: i for i, m in enumerate(self.models)})

    def __len__(self) -> int:
        return len(self.models)

    def index(self, model_id: str) -> int:
        try:
            return self._index[model_id]  # type: ignore[attr-defined]
        except KeyError:
            raise InputError(f"unknown model id {model_id!r}") from None

    def ids(self) -> list[str]:
        return [m.id for m in self.models]

    def violations(self) -> list[str]:
        out = []
        if len(self._index) != len(self.models):  # type: ignore[attr-defined]
            out.append("duplicate model ids in catalog")
        for m in self.models:
            if m.tokens_per_second <= 0:
                out.append(f"model {m.id}: throughput must be > 0")
            if m.price_per_1k_tokens_usd < 0:
                out.append(f"model {m.id}: price must be >= 0")
        return out


def attempt_cost_micro(tokens: float, price_per_1k_usd: float) -> int:
    """Cost of generating `tokens` output tokens, in micro-USD."""
    return int(round(tokens * price_per_1k_usd * 1000.0))


def attempt_latency_ms(tokens: float, tokens_per_second: float) -> int:
    """Latency of one attempt in ms; at least 1 so every round consumes time."""
    return max(1, int(round(tokens / tokens_per_second * 1000.0)))


@dataclass(frozen=True)
class ProfileTable:
    """Per-(node, model) single-attempt statistics and derived cost/latency.

    p[v, m] is the single-attempt success probability, cost_micro[v, m] the
    per-attempt cost in micro-USD, latency_ms[v, m] the per-attempt latency.
    mean_tokens is kept for reporting and pool synthesis.
    """

    p: np.ndarray
    cost_micro: np.ndarray
    latency_ms: np.ndarray
    mean_tokens: np.ndarray | None = None

    @classmethod
    def from_stats(cls, p: np.ndarray, mean_tokens: np.ndarray, catalog: ModelCatalog) -> "ProfileTable":
        p = np.asarray(p, dtype=np.float64)
        mean_tokens = np.asarray(mean_tokens, dtype=np.float64)
        n_nodes, n_models = p.shape
        cost = np.zeros((n_nodes, n_models), dtype=np.int64)
        lat = np.zeros((n_nodes, n_models), dtype=np.int64)
        for m, spec in enumerate(catalog.models):
            for v in range(n_nodes):
                cost[v, m] = attempt_cost_micro(mean_tokens[v, m], spec.price_per_1k_tokens_usd)
                lat[v, m] = attempt_latency_ms(mean_tokens[v, m], spec.tokens_per_second)
        return cls(p=p, cost_micro=cost, latency_ms=lat, mean_tokens=mean_tokens)

    @property
    def n_nodes(self) -> int:
        return self.p.shape[0]

    @property
    def n_models(self) -> int:
        return self.p.shape[1]

    def violations(self) -> list[str]:
        out = []
        bad_p = np.argwhere((self.p < 0.0) | (self.p > 1.0))
        for v, m in bad_p:
            out.append(f"profile ({v},{m}): p={self.p[v, m]} outside [0,1]")
        for v, m in np.argwhere(self.cost_micro < 0):
            out.append(f"profile ({v},{m}): negative cost")
        for v, m in np.argwhere(self.latency_ms <= 0):
            out.append(f"profile ({v},{m}): latency must be > 0")
        if self.mean_tokens is not None:
            for v, m in np.argwhere(np.asarray(self.mean_tokens) <= 0):
                out.append(f"profile ({v},{m}): mean_tokens must be > 0")
        return out


@dataclass(frozen=True)
class PoolRecords:
    """Samples for one (node, model) pair. Latency is stored in ms."""

    success: np.ndarray  # bool
    tokens: np.ndarray  # int64, > 0
    latency_ms: np.ndarray  # int64, > 0
    cost_micro: np.ndarray  # int64, per-record cost under the pair's model

    def __len__(self) -> int:
        return len(self.success)

    @property
    def success_rate(self) -> float:
        return float(np.count_nonzero(self.success)) / len(self.success)

    @property
    def mean_tokens(self) -> float:
        return float(np.mean(self.tokens))


@dataclass(frozen=True)
class PoolTable:
    """Rollout pools for every (node, model) pair."""

    pools: dict[tuple[int, int], PoolRecords]

    def pool(self, node: int, model: int) -> PoolRecords:
        try:
            return self.pools[(node, model)]
        except KeyError:
            raise InputError(f"no rollout pool for (node={node}, model={model})") from None

    def violations(self) -> list[str]:
        out = []
        for (v, m), rec in sorted(self.pools.items()):
            if len(rec) == 0:
                out.append(f"pool ({v},{m}): empty")
                continue
            if np.any(rec.tokens <= 0):
                out.append(f"pool ({v},{m}): non-positive token count")
            if np.any(rec.latency_ms <= 0):
                out.append(f"pool ({v},{m}): non-positive latency")
        return out


def make_pool_records(success, tokens, latency_s, model: ModelSpec) -> PoolRecords:
    success = np.asarray(success, dtype=bool)
    tokens = np.asarray(tokens, dtype=np.int64)
    latency_ms = np.maximum(1, np.round(np.asarray(latency_s, dtype=np.float64) * MS_PER_S)).astype(np.int64)
    cost = np.array(
        [attempt_cost_micro(t, model.price_per_1k_tokens_usd) for t in tokens], dtype=np.int64
    )
    return PoolRecords(success=success, tokens=tokens, latency_ms=latency_ms, cost_micro=cost)


def derive_profile(pools: PoolTable, catalog: ModelCatalog, n_nodes: int) -> ProfileTable:
    """Raw empirical profile: p = success fraction, tokens = arithmetic mean.

    No smoothing is applied; cost/latency estimates use the pool means.
    """
    n_models = len(catalog)
    p = np.zeros((n_nodes, n_models))
    mean_tokens = np.zeros((n_nodes, n_models))
    for v in range(n_nodes):
        for m in range(n_models):
            rec = pools.pool(v, m)
            if len(rec) == 0:
                raise InputError(f"empty pool for (node={v}, model={m})")
            p[v, m] = rec.success_rate
            mean_tokens[v, m] = rec.mean_tokens
    return ProfileTable.from_stats(p, mean_tokens, catalog)


@dataclass
class WorkflowInstance:
    """A workflow execution instance: graph, catalog, statistics, limits.

    Exactly one of profiles/pools is the source of truth depending on mode;
    empirical instances cache a derived parametric profile for feasibility
    estimates. Instances are immutable after construction.
    """

    graph: WorkflowGraph
    catalog: ModelCatalog
    mode: str
    profiles: ProfileTable | None = None
    pools: PoolTable | None = None
    budget_micro: int = 0
    deadline_ms: int = 0
    _derived: ProfileTable | None = field(default=None, repr=False, compare=False)
    _arrays: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in (PARAMETRIC, EMPIRICAL):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.mode == PARAMETRIC and self.profiles is None:
            raise InputError("parametric mode requires profiles")
        if self.mode == EMPIRICAL and self.pools is None:
            raise InputError("empirical mode requires pools")

    @property
    def planning_profiles(self) -> ProfileTable:
        """Parametric profiles (derived from pools in empirical mode)."""
        if self.mode == PARAMETRIC:
            assert self.profiles is not None
            return self.profiles
        if self._derived is None:
            assert self.pools is not None
            self._derived = derive_profile(self.pools, self.catalog, self.graph.n_nodes)
        return self._derived

    def with_limits(self, budget_usd: float, deadline_s: float) -> "WorkflowInstance":
        return WorkflowInstance(
            graph=self.graph,
            catalog=self.catalog,
            mode=self.mode,
            profiles=self.profiles,
            pools=self.pools,
            budget_micro=usd_to_micro(budget_usd),
            deadline_ms=seconds_to_ms(deadline_s),
        )

    def with_pools(self, pools: PoolTable) -> "WorkflowInstance":
        """Same instance with replacement pools (used for planner-side noise)."""
        if self.mode != EMPIRICAL:
            raise InputError("with_pools only applies to empirical instances")
        return WorkflowInstance(
            graph=self.graph,
            catalog=self.catalog,
            mode=EMPIRICAL,
            profiles=None,
            pools=pools,
            budget_micro=self.budget_micro,
            deadline_ms=self.deadline_ms,
        )


def validate(instance: WorkflowInstance) -> list[str]:
    """Return every invariant violation; an empty list means valid."""
    out = list(instance.graph.violations())
    out.extend(instance.catalog.violations())
    n_nodes, n_models = instance.graph.n_nodes, len(instance.catalog)
    if instance.mode == PARAMETRIC:
        prof = instance.profiles
        assert prof is not None
        if prof.p.shape != (n_nodes, n_models):
            out.append(
                f"profile table shape {prof.p.shape} does not cover "
                f"{n_nodes} nodes x {n_models} models"
            )
        else:
            out.extend(prof.violations())
    else:
        pools = instance.pools
        assert pools is not None
        missing = [
            (v, m)
            for v in range(n_nodes)
            for m in range(n_models)
            if (v, m) not in pools.pools
        ]
        for v, m in missing:
            out.append(f"missing rollout pool for (node={v}, model={instance.catalog.models[m].id})")
        out.extend(pools.violations())
    if instance.budget_micro < 0:
        out.append("budget must be >= 0")
    if instance.deadline_ms < 0:
        out.append("deadline must be >= 0")
    return out


# ---------------------------------------------------------------------------
# File formats: workflow JSON and pool JSON Lines.
# ---------------------------------------------------------------------------


def load_workflow(path: str, budget_usd: float = 0.0, deadline_s: float = 0.0) -> WorkflowInstance:
    """Read a workflow JSON file (and its pool file in empirical mode)."""
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read workflow file {path}: {exc}") from exc
    try:
        nodes = doc["nodes"]
        n_nodes = len(nodes)
        names = tuple(str(nd.get("name", f"n{nd['id']}")) for nd in sorted(nodes, key=lambda nd: nd["id"]))
        edges = tuple((int(u), int(v)) for u, v in doc["edges"])
        catalog = ModelCatalog(
            tuple(
                ModelSpec(
                    id=str(m["id"]),
                    price_per_1k_tokens_usd=float(m["price_per_1k_tokens_usd"]),
                    tokens_per_second=float(m["tokens_per_second"]),
                )
                for m in doc["models"]
            )
        )
        mode = doc["mode"]
        graph = WorkflowGraph(n_nodes=n_nodes, edges=edges, names=names)
        if mode == PARAMETRIC:
            p = np.full((n_nodes, len(catalog)), np.nan)
            tok = np.full((n_nodes, len(catalog)), np.nan)
            for row in doc["profiles"]:
                v, m = int(row["node"]), catalog.index(str(row["model"]))
                p[v, m] = float(row["p"])
                tok[v, m] = float(row["mean_tokens"])
            if np.isnan(p).any():
                missing = [tuple(ix) for ix in np.argwhere(np.isnan(p))]
                raise ParseError(f"profiles missing for (node, model) pairs {missing}")
            profiles = ProfileTable.from_stats(p, tok, catalog)
            inst = WorkflowInstance(graph=graph, catalog=catalog, mode=PARAMETRIC, profiles=profiles)
        elif mode == EMPIRICAL:
            pool_path = os.path.join(os.path.dirname(os.path.abspath(path)), doc["pools"])
            pools = load_pools(pool_path, catalog)
            inst = WorkflowInstance(graph=graph, catalog=catalog, mode=EMPIRICAL, pools=pools)
        else:
            raise ParseError(f"unknown mode {mode!r}")
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed workflow file {path}: {exc}") from exc
    return inst.with_limits(budget_usd, deadline_s)


def save_workflow(instance: WorkflowInstance, path: str, pool_filename: str | None = None) -> None:
    """Write the workflow JSON file (and pool JSONL in empirical mode)."""
    doc: dict = {
        "nodes": [{"id": i, "name": instance.graph.names[i]} for i in range(instance.graph.n_nodes)],
        "edges": [[u, v] for u, v in instance.graph.edges],
        "models": [
            {
                "id": m.id,
                "price_per_1k_tokens_usd": m.price_per_1k_tokens_usd,
                "tokens_per_second": m.tokens_per_second,
            }
            for m in instance.catalog.models
        ],
        "mode": instance.mode,
    }
    if instance.mode == PARAMETRIC:
        prof = instance.profiles
        assert prof is not None
        tok = prof.mean_tokens
        doc["profiles"] = [
            {
                "node": v,
                "model": instance.catalog.models[m].id,
                "p": float(prof.p[v, m]),
                "mean_tokens": float(tok[v, m]) if tok is not None else 0.0,
            }
            for v in range(prof.n_nodes)
            for m in range(prof.n_models)
        ]
    else:
        if pool_filename is None:
            stem, _ = os.path.splitext(os.path.basename(path))
            pool_filename = stem + ".pools.jsonl"
        doc["pools"] = pool_filename
        assert instance.pools is not None
        save_pools(
            instance.pools,
            instance.catalog,
            os.path.join(os.path.dirname(os.path.abspath(path)), pool_filename),
        )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_pools(path: str, catalog: ModelCatalog) -> PoolTable:
    """Read a pool JSONL file: one {node, model, success, tokens, latency_s} per line."""
    raw: dict[tuple[int, int], list[tuple[bool, int, float]]] = {}
    try:
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    key = (int(rec["node"]), catalog.index(str(rec["model"])))
                    raw.setdefault(key, []).append(
                        (bool(rec["success"]), int(rec["tokens"]), float(rec["latency_s"]))
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ParseError(f"{path}:{line_no}: bad pool record: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"cannot read pool file {path}: {exc}") from exc
    pools = {}
    for (v, m), rows in raw.items():
        succ, toks, lats = zip(*rows)
        pools[(v, m)] = make_pool_records(succ, toks, lats, catalog.models[m])
    return PoolTable(pools=pools)


def save_pools(pools: PoolTable, catalog: ModelCatalog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (v, m), rec in sorted(pools.pools.items()):
            for i in range(len(rec)):
                f.write(
                    json.dumps(
                        {
                            "node": v,
                            "model": catalog.models[m].id,
                            "success": bool(rec.success[i]),
                            "tokens": int(rec.tokens[i]),
                            "latency_s": rec.latency_ms[i] / MS_PER_S,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
