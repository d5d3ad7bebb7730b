"""How wrong can the planner's statistics be before performance degrades?

The planner only ever sees a copy of the rollout pools; execution keeps
drawing from the clean ones. Perturbing the copy therefore measures
robustness to estimation error, not a change in the task itself. Two noise
kinds are supported: Gaussian noise on token lengths (cost estimates) in
per-pool max-normalized space, and Gaussian noise on per-pool success rates
realized by flipping the minimal number of recorded labels.
"""

from mcpp import NoiseSpec, PlannerConfig, estimate_success_probability, generate_instance
from mcpp.harness import SyntheticSpec
from mcpp.noise import SUCCESS_RATE, TOKEN_LENGTH, perturb_success_rate, perturb_token_lengths

instance = generate_instance(
    SyntheticSpec(n_nodes=8, shape="chain", n_models=3, mode="empirical", pool_size=256, seed=5)
).with_limits(budget_usd=0.05, deadline_s=150.0)

config = PlannerConfig(n_sim=32)
n_eval = 300

clean = estimate_success_probability(instance, "mcpp", config, n_eval, 0.05, seed=2)
print(f"clean statistics:             P_succ = {clean.success_rate:.3f} +/- {clean.ci_radius:.3f}")

for kind, label, perturb in (
    (TOKEN_LENGTH, "token-length noise", lambda s: perturb_token_lengths(
        instance.pools, s, instance.catalog)),
    (SUCCESS_RATE, "success-rate noise", lambda s: perturb_success_rate(instance.pools, s)),
):
    print(f"\n{label}:")
    for sigma in (0.1, 0.3, 0.6):
        spec = NoiseSpec(kind=kind, sigma=sigma, seed=42)
        planner_view = instance.with_pools(perturb(spec))
        row = estimate_success_probability(
            instance, "mcpp", config, n_eval, 0.05, seed=2, planning_instance=planner_view
        )
        print(f"  sigma = {sigma:.1f}  P_succ = {row.success_rate:.3f}  "
              f"(delta {row.success_rate - clean.success_rate:+.3f})")

print("\nexecution pools were never modified; only the planner's copy moved.")
