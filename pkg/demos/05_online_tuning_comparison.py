"""Full online loop against the two baselines on one static workload.

The tuner prices candidates with uncertainty-gated corrected costs and
samples configurations by value; what-if greedy trusts the optimizer and
never learns; epsilon-greedy explores uniformly forever.
"""

import numpy as np

from idxlab import (
    CatalogSpec,
    DriftSchedule,
    OnlineTuner,
    TunerParams,
    build_schedule,
    generate_catalog,
    generate_templates,
    make_ground_truth,
    overall_improvement,
    run_baseline,
)

seed = 112
catalog = generate_catalog(CatalogSpec(n_tables=8, rows_range=(1000, 100000)), seed)
templates = generate_templates(catalog, 20, seed)
sched = DriftSchedule("static", total_rounds=20, templates_per_round=20,
                      queries_per_template=3)
schedule = build_schedule(templates, sched, seed)
ground_truth = make_ground_truth(catalog, seed, noise_sigma=0.05)

tuner = OnlineTuner(catalog, ground_truth, TunerParams(), seed=seed)
print("round | improv | new | mean U | lambda")
for w in schedule:
    r = tuner.run_round(w)
    print(f"{r.round:5d} | {r.improvement:+.3f} | {r.n_new_indexes:3d} | "
          f"{r.mean_uncertainty_before:6.3f} | {r.explore_weight:.3f}")

greedy = run_baseline("whatif_greedy", catalog, ground_truth, schedule,
                      TunerParams(), seed=seed)
eps = run_baseline("plain_epsilon_greedy", catalog, ground_truth, schedule,
                   TunerParams(), seed=seed)

print("\noverall improvement of workload execution time:")
print(f"  tuner                : {overall_improvement(tuner.metrics):+.3f}")
print(f"  whatif_greedy        : {overall_improvement(greedy):+.3f}")
print(f"  plain_epsilon_greedy : {overall_improvement(eps):+.3f}")

late = slice(15, 20)
print("\nnewly deployed indexes per round, rounds 16-20 (exploration overhead):")
print(f"  tuner                : {np.mean([m['n_new_indexes'] for m in tuner.metrics[late]]):.2f}")
print(f"  plain_epsilon_greedy : {np.mean([m['n_new_indexes'] for m in eps[late]]):.2f}")
