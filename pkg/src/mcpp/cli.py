"""Command-line surface: generation, validation, planning, runs, sweeps."""

from __future__ import annotations

import argparse
import json
import sys

from . import harness, noise, oracle
from .engine import initial_state
from .model import (
    EMPIRICAL,
    PARAMETRIC,
    InputError,
    ModelCatalog,
    ModelSpec,
    ParseError,
    load_pools,
    load_workflow,
    micro_to_usd,
    ms_to_seconds,
    save_pools,
    save_workflow,
    validate,
)
from .planner import DEFAULT_WIDTHS, PlannerConfig, run_mcpp, select_action
from .policies import BasePolicy, run_policy, uniform_plan


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcpp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic workflow file")
    gen.add_argument("--nodes", type=int, required=True)
    gen.add_argument("--shape", choices=["chain", "diamond", "random"], default="chain")
    gen.add_argument("--p-edge", type=float, default=0.3)
    gen.add_argument("--models", type=int, default=2)
    gen.add_argument("--mode", choices=[PARAMETRIC, EMPIRICAL], default=PARAMETRIC)
    gen.add_argument("--pool-size", type=int, default=512)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="check a workflow file's invariants")
    val.add_argument("--workflow", required=True)

    plan = sub.add_parser("plan", help="print the selected first action and scores")
    plan.add_argument("--workflow", required=True)
    plan.add_argument("--budget", type=float, required=True)
    plan.add_argument("--deadline", type=int, required=True)
    plan.add_argument("--sims", type=int, default=64)
    plan.add_argument("--widths", default=",".join(str(k) for k in DEFAULT_WIDTHS))
    plan.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="execute one closed-loop run and print its trace")
    run.add_argument("--workflow", required=True)
    run.add_argument("--method", choices=["mcpp", "uniform", "retry"], required=True)
    run.add_argument("--model", default=None, help="model id for uniform/retry")
    run.add_argument("--width", type=int, default=1, help="retry width")
    run.add_argument("--budget", type=float, required=True)
    run.add_argument("--deadline", type=int, required=True)
    run.add_argument("--sims", type=int, default=64)
    run.add_argument("--widths", default=",".join(str(k) for k in DEFAULT_WIDTHS))
    run.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="budget-deadline sweep over methods")
    ev.add_argument("--workflow", required=True)
    ev.add_argument("--methods", default="mcpp,uniform,retry")
    ev.add_argument("--budgets", required=True)
    ev.add_argument("--deadlines", required=True)
    ev.add_argument("--sims", type=int, default=64)
    ev.add_argument("--widths", default=",".join(str(k) for k in DEFAULT_WIDTHS))
    ev.add_argument("--n-eval", type=int, default=10000)
    ev.add_argument("--delta", type=float, default=0.05)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--format", choices=["csv", "json"], default="csv")
    ev.add_argument("--out", required=True)

    ms = sub.add_parser("msweep", help="sweep the Monte Carlo budget M")
    ms.add_argument("--workflow", required=True)
    ms.add_argument("--m-values", default="16,32,64,128,256")
    ms.add_argument("--budgets", required=True)
    ms.add_argument("--deadlines", required=True)
    ms.add_argument("--widths", default=",".join(str(k) for k in DEFAULT_WIDTHS))
    ms.add_argument("--n-eval", type=int, default=1000)
    ms.add_argument("--delta", type=float, default=0.05)
    ms.add_argument("--seed", type=int, default=0)
    ms.add_argument("--workers", type=int, default=1)
    ms.add_argument("--format", choices=["csv", "json"], default="csv")
    ms.add_argument("--out", required=True)

    nz = sub.add_parser("noise", help="perturb planner-visible pools")
    nz.add_argument("--kind", choices=["tokens", "success"], required=True)
    nz.add_argument("--sigma", type=float, required=True)
    nz.add_argument("--eps", type=float, default=1e-3)
    nz.add_argument("--seed", type=int, default=0)
    nz.add_argument("--in", dest="infile", required=True)
    nz.add_argument("--out", required=True)
    nz.add_argument("--workflow", default=None, help="workflow file providing the model catalog")
    nz.add_argument(
        "--price",
        type=float,
        default=None,
        help="price per 1k tokens used to re-cost perturbed tokens (all models)",
    )

    orc = sub.add_parser("oracle", help="exact values for a small parametric workflow")
    orc.add_argument("--workflow", required=True)
    orc.add_argument("--budget", type=float, required=True)
    orc.add_argument("--deadline", type=int, required=True)
    orc.add_argument("--widths", default="1,4,16,64")
    orc.add_argument("--out", required=True)
    return parser


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (InputError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "gen":
        spec = harness.SyntheticSpec(
            n_nodes=args.nodes,
            shape=args.shape,
            p_edge=args.p_edge,
            n_models=args.models,
            mode=args.mode,
            pool_size=args.pool_size,
            seed=args.seed,
        )
        instance = harness.generate_instance(spec)
        save_workflow(instance, args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "validate":
        try:
            instance = load_workflow(args.workflow)
        except ParseError as exc:
            print(f"parse error: {exc}", file=sys.stderr)
            return 2
        violations = validate(instance)
        if violations:
            for v in violations:
                print(v)
            return 1
        print("ok")
        return 0

    if args.command == "plan":
        instance = load_workflow(args.workflow, args.budget, args.deadline)
        config = PlannerConfig(widths=tuple(_int_list(args.widths)), n_sim=args.sims)
        picked = select_action(initial_state(instance), instance, config, args.seed)
        if picked is None:
            print(json.dumps({"status": "NO_FEASIBLE"}))
            return 1
        action, scores = picked
        print(json.dumps(_plan_doc(instance, action, scores), indent=2))
        return 0

    if args.command == "run":
        instance = load_workflow(args.workflow, args.budget, args.deadline)
        config = PlannerConfig(widths=tuple(_int_list(args.widths)), n_sim=args.sims)
        if args.method == "mcpp":
            result = run_mcpp(instance, config, args.seed)
        elif args.method == "retry":
            model = instance.catalog.index(args.model) if args.model else 0
            result = run_policy(instance, BasePolicy(model=model, width=args.width), args.seed)
        else:
            model = instance.catalog.index(args.model) if args.model else 0
            result = run_policy(instance, uniform_plan(instance, model), args.seed)
        print(json.dumps(_trace_doc(instance, result), indent=2))
        return 0 if result.success else 1

    if args.command == "eval":
        instance = load_workflow(args.workflow)
        config = PlannerConfig(widths=tuple(_int_list(args.widths)), n_sim=args.sims)
        report = harness.sweep(
            instance,
            [m.strip() for m in args.methods.split(",") if m.strip()],
            _float_list(args.budgets),
            [float(d) for d in _int_list(args.deadlines)],
            config,
            args.n_eval,
            args.delta,
            args.seed,
            workers=args.workers,
        )
        harness.emit_report(report, args.format, args.out)
        print(f"wrote {args.out} ({len(report.rows)} rows)")
        return 0

    if args.command == "msweep":
        instance = load_workflow(args.workflow)
        config = PlannerConfig(widths=tuple(_int_list(args.widths)))
        report = harness.m_sweep(
            instance,
            _int_list(args.m_values),
            _float_list(args.budgets),
            [float(d) for d in _int_list(args.deadlines)],
            config,
            args.n_eval,
            args.delta,
            args.seed,
            workers=args.workers,
        )
        harness.emit_report(report, args.format, args.out)
        print(f"wrote {args.out} ({len(report.rows)} rows)")
        return 0

    if args.command == "noise":
        catalog = _noise_catalog(args)
        pools = load_pools(args.infile, catalog)
        kind = noise.TOKEN_LENGTH if args.kind == "tokens" else noise.SUCCESS_RATE
        spec = noise.NoiseSpec(kind=kind, sigma=args.sigma, eps_clip=args.eps, seed=args.seed)
        if kind == noise.TOKEN_LENGTH:
            perturbed = noise.perturb_token_lengths(pools, spec, catalog)
        else:
            perturbed = noise.perturb_success_rate(pools, spec)
        save_pools(perturbed, catalog, args.out)
        print(f"wrote {args.out}")
        return 0

    if args.command == "oracle":
        instance = load_workflow(args.workflow, args.budget, args.deadline)
        orc = oracle.ExactOracle(instance, _int_list(args.widths))
        root = initial_state(instance)
        root_value = orc.value(root)
        states = [
            {
                "completed": [v for v in range(instance.graph.n_nodes) if (mask >> v) & 1],
                "budget_usd": micro_to_usd(b),
                "time_s": ms_to_seconds(h),
                "value": orc._value(mask, b, h),
            }
            for (mask, b, h) in orc.enumerated_states()
        ]
        doc = {"initial_value": root_value, "states": states}
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
        print(f"wrote {args.out} (V* = {root_value:.6f})")
        return 0

    raise AssertionError(f"unhandled command {args.command}")


def _noise_catalog(args) -> ModelCatalog:
    """Catalog used to re-derive per-record costs for the perturbed pools."""
    if args.workflow:
        return load_workflow(args.workflow).catalog
    price = args.price if args.price is not None else 0.0
    # Model ids are discovered lazily by load_pools via catalog.index, so
    # build a permissive catalog from the pool file's distinct ids.
    ids = set()
    with open(args.infile, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                ids.add(str(json.loads(line)["model"]))
    return ModelCatalog(
        tuple(
            ModelSpec(id=i, price_per_1k_tokens_usd=price, tokens_per_second=50.0)
            for i in sorted(ids)
        )
    )


def _plan_doc(instance, action, scores) -> dict:
    ids = instance.catalog.ids()
    return {
        "selected_action": [
            {"node": v, "model": ids[m], "width": k} for v, m, k in action.assignments
        ],
        "scores": [
            {
                "action": [
                    {"node": v, "model": ids[m], "width": k} for v, m, k in s.action.assignments
                ],
                "portfolio_score": s.portfolio_score,
                "best_continuation": {
                    "model": ids[s.best_continuation.model],
                    "width": s.best_continuation.width,
                },
                "hoeffding_radius": s.radius,
            }
            for s in scores
        ],
    }


def _trace_doc(instance, result) -> dict:
    ids = instance.catalog.ids()
    return {
        "status": result.status,
        "spent_usd": micro_to_usd(result.state.spent),
        "elapsed_s": ms_to_seconds(result.state.elapsed),
        "rounds": [
            {
                "action": [
                    {"node": v, "model": ids[m], "width": k} for v, m, k in r.action.assignments
                ],
                "completed": list(r.completed_now),
                "cost_usd": micro_to_usd(r.cost),
                "duration_s": ms_to_seconds(r.duration),
                "planner_seconds": r.planner_seconds,
                "score": r.score,
            }
            for r in result.trace
        ],
    }


if __name__ == "__main__":
    raise SystemExit(main())
