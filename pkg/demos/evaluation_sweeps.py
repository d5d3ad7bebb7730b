"""Sweep budgets, deadlines, and the simulation budget M; emit report CSVs.

Mirrors the benchmark workflow: a full factorial (method x budget x deadline)
grid with best-of rows for the tuned baselines, then a sweep over the
planner's per-pair simulation count M showing the quality/latency trade.
"""

import os
import tempfile

from mcpp import PlannerConfig, generate_instance, m_sweep, sweep
from mcpp.harness import SyntheticSpec, best_rows, emit_report

instance = generate_instance(
    SyntheticSpec(n_nodes=8, shape="chain", n_models=3, mode="empirical", pool_size=256, seed=5)
)
config = PlannerConfig(n_sim=32)
n_eval = 250

report = sweep(
    instance,
    ["mcpp", "retry", "uniform"],
    budgets_usd=[0.01, 0.03],
    deadlines_s=[60.0, 100.0],
    config=config,
    n_eval=n_eval,
    delta=0.05,
    seed=3,
)

print("budget/deadline grid (mcpp vs best baselines):")
mcpp = {(r.budget_usd, r.deadline_s): r.success_rate for r in report.rows if r.method == "mcpp"}
retry = {(r.budget_usd, r.deadline_s): r.success_rate for r in best_rows(report, "retry")}
unif = {(r.budget_usd, r.deadline_s): r.success_rate for r in best_rows(report, "uniform")}
for cell in sorted(mcpp):
    b, d = cell
    print(f"  B=${b:.2f} D={d:4.0f}s   mcpp {mcpp[cell]:.3f}   "
          f"best retry {retry[cell]:.3f}   best uniform {unif[cell]:.3f}")

out = os.path.join(tempfile.gettempdir(), "sweep_demo.csv")
emit_report(report, "csv", out)
print(f"full report ({len(report.rows)} rows) written to {out}")

# More simulations per (candidate, continuation) pair: better decisions,
# slower rounds.
ms = m_sweep(instance, [8, 32, 128], [0.03], [100.0], config, n_eval, 0.05, seed=3)
print("\nsimulation budget sweep at B=$0.03, D=100s:")
for row in sorted(ms.rows, key=lambda r: r.n_sim):
    print(f"  M={row.n_sim:4d}   P_succ {row.success_rate:.3f}   "
          f"planner step {row.mean_planner_s * 1e3:6.1f} ms")
