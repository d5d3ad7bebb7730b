"""Experiment harness: closed-loop success estimation, sweeps, generation.

Evaluation replicates use seeds derived from (seed, replicate index), so
reports are reproducible at any worker count; only wall-clock timing columns
vary between identical invocations.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernel
from . import rng as rngmod
from .arrays import pack
from .model import (
    EMPIRICAL,
    PARAMETRIC,
    InputError,
    ModelCatalog,
    ModelSpec,
    PoolTable,
    ProfileTable,
    WorkflowGraph,
    WorkflowInstance,
    make_pool_records,
    micro_to_usd,
    ms_to_seconds,
    validate,
)
from .planner import PlannerConfig, run_mcpp
from .policies import uniform_plan

METHOD_MCPP = "mcpp"
METHOD_RETRY = "retry"
METHOD_BASE = "base"  # alias of retry at a fixed (model, width)
METHOD_UNIFORM = "uniform"

_METHOD_CODES = {METHOD_MCPP: 1, METHOD_RETRY: 2, METHOD_BASE: 2, METHOD_UNIFORM: 3}

CSV_COLUMNS = [
    "method",
    "model_set",
    "width_set",
    "budget_usd",
    "deadline_s",
    "n_eval",
    "n_sim",
    "success_rate",
    "ci_radius",
    "mean_planner_s",
    "seed",
]


def ci_radius(n_eval: int, delta: float) -> float:
    """Hoeffding radius for a mean of n_eval Bernoulli indicators."""
    if n_eval < 1:
        raise InputError("n_eval must be >= 1")
    if not 0.0 < delta < 1.0:
        raise InputError("delta must be in (0,1)")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n_eval))


@dataclass(frozen=True)
class ReportRow:
    method: str
    model_set: str
    width_set: str
    budget_usd: float
    deadline_s: float
    n_eval: int
    n_sim: int
    success_rate: float
    ci_radius: float
    mean_planner_s: float
    seed: int

    def as_dict(self) -> dict:
        return {col: getattr(self, col) for col in CSV_COLUMNS}


@dataclass
class EvaluationReport:
    rows: list[ReportRow] = field(default_factory=list)

    def sort(self) -> None:
        self.rows.sort(
            key=lambda r: (r.method, r.budget_usd, r.deadline_s, r.model_set, r.width_set)
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_format_cell(getattr(row, col)) for col in CSV_COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"rows": [r.as_dict() for r in self.rows]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvaluationReport":
        doc = json.loads(text)
        return cls(rows=[ReportRow(**row) for row in doc["rows"]])


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: EvaluationReport, fmt: str, path: str) -> None:
    if not report.rows:
        raise InputError("refusing to emit an empty report")
    if fmt == "csv":
        text = report.to_csv()
    elif fmt == "json":
        text = report.to_json()
    else:
        raise InputError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


# ---------------------------------------------------------------------------
# Success-probability estimation
# ---------------------------------------------------------------------------


def estimate_success_probability(
    instance: WorkflowInstance,
    method: str,
    config: PlannerConfig,
    n_eval: int,
    delta: float,
    seed: int,
    model: Optional[int] = None,
    width: Optional[int] = None,
    workers: int = 1,
    planning_instance: Optional[WorkflowInstance] = None,
) -> ReportRow:
    """Run n_eval independent closed-loop executions of one method."""
    if n_eval < 1:
        raise InputError("n_eval must be >= 1")
    code = _METHOD_CODES.get(method)
    if code is None:
        raise InputError(f"unknown method {method!r}")
    radius = ci_radius(n_eval, delta)
    if method == METHOD_MCPP:
        rate, planner_s = _run_mcpp_batch(
            instance, config, n_eval, seed, workers, planning_instance
        )
        return ReportRow(
            method=method,
            model_set=",".join(instance.catalog.ids()),
            width_set="|".join(str(k) for k in config.widths),
            budget_usd=micro_to_usd(instance.budget_micro),
            deadline_s=ms_to_seconds(instance.deadline_ms),
            n_eval=n_eval,
            n_sim=config.n_sim,
            success_rate=rate,
            ci_radius=radius,
            mean_planner_s=planner_s,
            seed=seed,
        )
    if method in (METHOD_RETRY, METHOD_BASE):
        if model is None or width is None:
            raise InputError(f"method {method!r} requires model and width")
        rate = _base_policy_rate(instance, model, width, n_eval, seed)
        return ReportRow(
            method=method,
            model_set=instance.catalog.models[model].id,
            width_set=str(width),
            budget_usd=micro_to_usd(instance.budget_micro),
            deadline_s=ms_to_seconds(instance.deadline_ms),
            n_eval=n_eval,
            n_sim=0,
            success_rate=rate,
            ci_radius=radius,
            mean_planner_s=0.0,
            seed=seed,
        )
    # uniform
    if model is None:
        raise InputError("method 'uniform' requires model")
    rate = _uniform_rate(instance, model, n_eval, seed)
    return ReportRow(
        method=METHOD_UNIFORM,
        model_set=instance.catalog.models[model].id,
        width_set="-",
        budget_usd=micro_to_usd(instance.budget_micro),
        deadline_s=ms_to_seconds(instance.deadline_ms),
        n_eval=n_eval,
        n_sim=0,
        success_rate=rate,
        ci_radius=radius,
        mean_planner_s=0.0,
        seed=seed,
    )


def _base_policy_rate(instance: WorkflowInstance, model: int, width: int, n_eval: int, seed: int) -> float:
    arr = pack(instance)
    base_seed = rngmod.stream_key(seed, rngmod.EVAL, _METHOD_CODES[METHOD_RETRY], model, width)
    out = _kernel.base_policy_runs(
        arr.mode, arr.pred, arr.full_mask, arr.p, arr.cost, arr.tau,
        arr.pool_n, arr.pool_succ, arr.pool_cost, arr.pool_lat,
        np.int64(instance.budget_micro), np.int64(instance.deadline_ms),
        model, width, n_eval, np.uint64(base_seed),
    )
    return float(out.sum()) / n_eval


def _uniform_rate(instance: WorkflowInstance, model: int, n_eval: int, seed: int) -> float:
    plan = uniform_plan(instance, model)
    if not plan.feasible:
        return 0.0
    arr = pack(instance)
    base_seed = rngmod.stream_key(seed, rngmod.EVAL, _METHOD_CODES[METHOD_UNIFORM], model)
    out = _kernel.uniform_runs(
        arr.mode, arr.pred, arr.full_mask, arr.p, arr.cost, arr.tau,
        arr.pool_n, arr.pool_succ, arr.pool_cost, arr.pool_lat,
        np.int64(instance.budget_micro), np.int64(instance.deadline_ms),
        model, np.array(plan.widths, dtype=np.int64), n_eval, np.uint64(base_seed),
    )
    return float(out.sum()) / n_eval


def _run_mcpp_batch(
    instance: WorkflowInstance,
    config: PlannerConfig,
    n_eval: int,
    seed: int,
    workers: int,
    planning_instance: Optional[WorkflowInstance],
) -> tuple[float, float]:
    run_seed = [rngmod.stream_key(seed, rngmod.EVAL, _METHOD_CODES[METHOD_MCPP], i) for i in range(n_eval)]
    successes = np.zeros(n_eval, dtype=np.int64)
    timings: list[float] = [float("nan")] * n_eval

    def _one(i: int) -> None:
        result = run_mcpp(instance, config, run_seed[i], planning_instance=planning_instance)
        successes[i] = 1 if result.success else 0
        times = [r.planner_seconds for r in result.trace]
        timings[i] = float(np.mean(times)) if times else float("nan")

    if workers <= 1:
        for i in range(n_eval):
            _one(i)
    else:
        # Kernels release the GIL, so threads give real parallelism; results
        # are positional, hence identical at any worker count.
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_one, range(n_eval)))
    per_run = [t for t in timings if not math.isnan(t)]
    mean_planner = float(np.mean(per_run)) if per_run else 0.0
    return float(successes.sum()) / n_eval, mean_planner


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def sweep(
    instance: WorkflowInstance,
    methods: list[str],
    budgets_usd: list[float],
    deadlines_s: list[float],
    config: PlannerConfig,
    n_eval: int,
    delta: float,
    seed: int,
    workers: int = 1,
    planning_instance: Optional[WorkflowInstance] = None,
) -> EvaluationReport:
    """Full factorial (method x budget x deadline) evaluation report.

    Retry and Uniform contribute one row per swept (model, width) / model
    plus a best-of row (model_set and width_set set to "best"), mirroring the
    best-baseline reduction used for reporting.
    """
    if not budgets_usd or not deadlines_s:
        raise InputError("budget and deadline grids must be non-empty")
    report = EvaluationReport()
    for method in methods:
        if method not in _METHOD_CODES:
            raise InputError(f"unknown method {method!r}")
    for bi, budget in enumerate(budgets_usd):
        for di, deadline in enumerate(deadlines_s):
            cell = instance.with_limits(budget, deadline)
            cell_plan = (
                planning_instance.with_limits(budget, deadline)
                if planning_instance is not None
                else None
            )
            for method in methods:
                report.rows.extend(
                    _cell_rows(cell, method, config, n_eval, delta, seed, bi, di, workers, cell_plan)
                )
    report.sort()
    return report


def _cell_rows(
    cell: WorkflowInstance,
    method: str,
    config: PlannerConfig,
    n_eval: int,
    delta: float,
    seed: int,
    bi: int,
    di: int,
    workers: int,
    planning_instance: Optional[WorkflowInstance],
) -> list[ReportRow]:
    cell_seed = rngmod.stream_key(seed, rngmod.EVAL, _METHOD_CODES[method], bi, di)
    if method == METHOD_MCPP:
        row = estimate_success_probability(
            cell, method, config, n_eval, delta, cell_seed,
            workers=workers, planning_instance=planning_instance,
        )
        return [replace(row, seed=seed)]
    rows = []
    if method in (METHOD_RETRY, METHOD_BASE):
        variants = [
            (m, k) for m in range(len(cell.catalog)) for k in config.widths
        ]
        for m, k in variants:
            row = estimate_success_probability(
                cell, METHOD_RETRY, config, n_eval, delta, cell_seed, model=m, width=k
            )
            rows.append(replace(row, seed=seed))
    else:
        for m in range(len(cell.catalog)):
            row = estimate_success_probability(
                cell, METHOD_UNIFORM, config, n_eval, delta, cell_seed, model=m
            )
            rows.append(replace(row, seed=seed))
    best = max(rows, key=lambda r: r.success_rate)
    rows.append(replace(best, model_set="best", width_set="best"))
    return rows


def best_rows(report: EvaluationReport, method: str) -> list[ReportRow]:
    """The best-of rows for a baseline method (model_set == 'best')."""
    return [r for r in report.rows if r.method == method and r.model_set == "best"]


def m_sweep(
    instance: WorkflowInstance,
    m_values: list[int],
    budgets_usd: list[float],
    deadlines_s: list[float],
    config: PlannerConfig,
    n_eval: int,
    delta: float,
    seed: int,
    workers: int = 1,
) -> EvaluationReport:
    """Planner quality and wall-clock time as the Monte Carlo budget varies."""
    if any(m < 1 for m in m_values):
        raise InputError("Monte Carlo budgets must be >= 1")
    report = EvaluationReport()
    for mi, m_val in enumerate(m_values):
        cfg = replace(config, n_sim=m_val)
        for bi, budget in enumerate(budgets_usd):
            for di, deadline in enumerate(deadlines_s):
                cell = instance.with_limits(budget, deadline)
                cell_seed = rngmod.stream_key(seed, rngmod.EVAL, _METHOD_CODES[METHOD_MCPP], mi, bi, di)
                row = estimate_success_probability(
                    cell, METHOD_MCPP, cfg, n_eval, delta, cell_seed, workers=workers
                )
                report.rows.append(replace(row, seed=seed))
    report.sort()
    return report


# ---------------------------------------------------------------------------
# Synthetic instance generation
# ---------------------------------------------------------------------------

CHAIN = "chain"
DIAMOND = "diamond"
RANDOM_DAG = "random"


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int
    shape: str = CHAIN
    p_edge: float = 0.3
    n_models: int = 2
    p_range: tuple[float, float] = (0.2, 0.9)
    tokens_range: tuple[float, float] = (200.0, 1200.0)
    price_range: tuple[float, float] = (0.0005, 0.01)
    tps_range: tuple[float, float] = (20.0, 100.0)
    mode: str = PARAMETRIC
    pool_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InputError("n_nodes must be >= 1")
        if self.shape not in (CHAIN, DIAMOND, RANDOM_DAG):
            raise InputError(f"unknown shape {self.shape!r}")
        if self.n_models < 1:
            raise InputError("n_models must be >= 1")
        if self.mode == EMPIRICAL and self.pool_size < 1:
            raise InputError("pool_size must be >= 1")


def _shape_edges(spec: SyntheticSpec, gen: np.random.Generator) -> tuple[tuple[int, int], ...]:
    n = spec.n_nodes
    if spec.shape == CHAIN:
        return tuple((v, v + 1) for v in range(n - 1))
    if spec.shape == DIAMOND:
        edges = []
        v = 0
        while v + 3 < n:
            edges += [(v, v + 1), (v, v + 2), (v + 1, v + 3), (v + 2, v + 3)]
            v += 3
        for u in range(v, n - 1):
            edges.append((u, u + 1))
        return tuple(edges)
    edges = []
    for u in range(n):
        for w in range(u + 1, n):
            if gen.random() < spec.p_edge:
                edges.append((u, w))
    return tuple(edges)


def generate_instance(spec: SyntheticSpec, max_attempts: int = 10) -> WorkflowInstance:
    """Deterministically generate a validated synthetic instance."""
    last: list[str] = []
    for attempt in range(max_attempts):
        gen = rngmod.substream(spec.seed, rngmod.GENERATE, attempt)
        inst = _generate_once(spec, gen)
        last = validate(inst)
        if not last:
            return inst
    raise RuntimeError(f"could not generate a valid instance: {last}")


def _generate_once(spec: SyntheticSpec, gen: np.random.Generator) -> WorkflowInstance:
    n, n_models = spec.n_nodes, spec.n_models
    graph = WorkflowGraph(n_nodes=n, edges=_shape_edges(spec, gen))
    # Pricier models are stronger, so model choice is a real trade-off.
    prices = np.sort(gen.uniform(*spec.price_range, size=n_models))
    strengths = np.sort(gen.uniform(0.0, 1.0, size=n_models))
    tps = gen.uniform(*spec.tps_range, size=n_models)
    catalog = ModelCatalog(
        tuple(
            ModelSpec(
                id=f"m{m}",
                price_per_1k_tokens_usd=float(prices[m]),
                tokens_per_second=float(tps[m]),
            )
            for m in range(n_models)
        )
    )
    p_lo, p_hi = spec.p_range
    base = gen.uniform(0.0, 1.0, size=n)
    p = np.empty((n, n_models))
    tokens = np.empty((n, n_models))
    for v in range(n):
        for m in range(n_models):
            level = 0.35 * base[v] + 0.5 * strengths[m] + 0.15 * gen.random()
            p[v, m] = p_lo + (p_hi - p_lo) * min(1.0, level)
            tokens[v, m] = gen.uniform(*spec.tokens_range)
    profiles = ProfileTable.from_stats(p, tokens, catalog)
    if spec.mode == PARAMETRIC:
        return WorkflowInstance(graph=graph, catalog=catalog, mode=PARAMETRIC, profiles=profiles)
    pools = synthesize_pools(profiles, catalog, spec.pool_size, gen)
    return WorkflowInstance(graph=graph, catalog=catalog, mode=EMPIRICAL, pools=pools)


def synthesize_pools(
    profiles: ProfileTable,
    catalog: ModelCatalog,
    pool_size: int,
    gen: np.random.Generator,
) -> PoolTable:
    """Draw rollout pools whose derived profile approximates the given one."""
    assert profiles.mean_tokens is not None
    pools = {}
    for v in range(profiles.n_nodes):
        for m in range(profiles.n_models):
            mean_tok = float(profiles.mean_tokens[v, m])
            success = gen.random(pool_size) < profiles.p[v, m]
            tokens = np.maximum(1, np.round(gen.normal(mean_tok, 0.25 * mean_tok, size=pool_size)))
            latency_s = tokens / catalog.models[m].tokens_per_second
            pools[(v, m)] = make_pool_records(success, tokens, latency_s, catalog.models[m])
    return PoolTable(pools=pools)
