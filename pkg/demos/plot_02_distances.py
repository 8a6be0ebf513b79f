"""
Three sample distances
======================

Earth mover's distance, MMD and the k-NN Kullback-Leibler estimate, each
reacting to a different kind of change.
"""

import numpy as np

from driftwatch.distances import kl_knn_estimate, median_heuristic_sigma, mmd_u_statistic, wasserstein

rng = np.random.default_rng(0)
base = rng.normal(size=(300, 5))
same = rng.normal(size=(300, 5))
shifted = rng.normal(size=(300, 5)) + 0.3
wider = rng.normal(size=(300, 5)) * 1.3

# MMD needs a kernel bandwidth; the median pairwise distance is the usual choice.
sigma = median_heuristic_sigma(base, same)
print(f"bandwidth {sigma:.3f}")

for name, other in [("same", same), ("shifted", shifted), ("wider", wider)]:
    print(f"{name:8s} EMD {wasserstein(base, other):.3f}  "
          f"MMD {mmd_u_statistic(base, other, sigma):+.4f}  "
          f"KL {kl_knn_estimate(base, other):+.3f}")

###############################################################################
# EMD also compares a set with one half its size.

print("EMD 300 vs 150 rows:", round(wasserstein(base, same[:150]), 3))

###############################################################################
# The KL estimate is not symmetric.

print("KL(base||wider) =", round(kl_knn_estimate(base, wider), 3),
      " KL(wider||base) =", round(kl_knn_estimate(wider, base), 3))
