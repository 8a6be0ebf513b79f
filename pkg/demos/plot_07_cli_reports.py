"""
Command line and result files
=============================

Writes two small CSV datasets, runs ``driftwatch detect`` on them and a
tiny ``simulate`` run, then reloads the emitted table.
"""

import json
import pathlib
import subprocess
import sys
import tempfile

import numpy as np

from driftwatch.core import save_dataset
from driftwatch.report import load_report

work = pathlib.Path(tempfile.mkdtemp())
rng = np.random.default_rng(0)
for name, shift in (("train", 0.0), ("ref", 0.0), ("det", 0.5)):
    save_dataset(work / f"{name}.csv", rng.normal(size=(400, 6)) + shift)

# exit code 10 means drift, 0 means none
cmd = [sys.executable, "-m", "driftwatch.cli", "detect", "--train", str(work / "train.csv"),
       "--ref", str(work / "ref.csv"), "--det", str(work / "det.csv"),
       "--method", "bd", "--metric", "emd", "--n", "8", "--k", "50", "--seed", "1"]
out = subprocess.run(cmd, capture_output=True, text=True)
print("exit code", out.returncode, "->", json.loads(out.stdout)["detector"], "p =",
      json.loads(out.stdout)["p_value"])

###############################################################################
# A miniature simulation, configured by a flat JSON file.

(work / "sim.json").write_text(json.dumps({
    "experiment": "problem1", "simulations": 5, "seed": 2, "m": 10,
    "approaches": ["MMD-BD", "KS-BC"], "fast": True,
    "scenarios": {"nodrift": [0.0], "mean": [0.1]},
}))
subprocess.run([sys.executable, "-m", "driftwatch.cli", "simulate", "--config", str(work / "sim.json"),
                "--output-dir", str(work / "out")], check=True)
table = load_report(work / "out" / "problem1.csv")
for row in table.rows:
    print(f"{row.approach:7s} {row.scenario:8s} {row.zeta:<5g} {row.rate_kind} {row.rate:.2f}")
print(sorted(p.name for p in (work / "out").iterdir()))
