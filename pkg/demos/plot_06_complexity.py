"""
Measured cost of the batched detectors
======================================

Fits log(time) against log(batch size) and log(batch count) for each BD
metric.  Batch count should scale linearly and batch size quadratically for MMD
and KL.  EMD's assignment step is cubic only in the worst case; on random
Gaussian costs it usually lands near quadratic as well.
"""

from driftwatch.harness import scaling_probe

for metric in ("emd", "mmd", "kl"):
    tk, sk = scaling_probe(metric, "k", (25, 50, 100, 200), fixed=16)
    tn, sn = scaling_probe(metric, "n", (8, 16, 32, 64), fixed=50)
    print(f"{metric.upper()}-BD: slope vs k {sk:.2f}, vs n {sn:.2f}; "
          f"k=200 batch pass takes {tk[-1] * 1000:.0f} ms")
