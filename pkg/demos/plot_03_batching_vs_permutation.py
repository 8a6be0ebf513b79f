"""
Batching against permutation under a fixed budget
=================================================

A reduced version of the error-rate table: each detector runs 30 seeded
trials per cell at its matched-budget size, on a shortened drift grid.
Expect a few minutes on one core.
"""

from driftwatch.harness import ExperimentConfig, run_problem1_experiment, budget_detectors

detectors = {k: v for k, v in budget_detectors(fast=True).items() if k != "KS-BC"}
cfg = ExperimentConfig(
    detectors=detectors,
    scenarios={"nodrift": [0.0], "mean": [0.04], "var": [1.05], "cov": [0.07]},
    simulations=30,
    base_seed=0,
)
table = run_problem1_experiment(cfg)

###############################################################################
# FPR for the null column, FNR for the three drift columns.

cols = cfg.cells("EMD-BD")
print("approach " + " ".join(f"{k}:{z:g}".rjust(12) for k, z in cols))
for approach in table.approaches:
    print(f"{approach:8s} " + " ".join(f"{table.rate(approach, k, z):12.2f}" for k, z in cols))
