"""JSON run configuration shared by every CLI subcommand.

A config file is one flat JSON object whose keys are the CLI flag names
with dashes replaced by underscores, e.g.::

    {
      "experiment": "problem1",
      "simulations": 100,
      "seed": 7,
      "fast": true,
      "output_dir": "results",
      "approaches": ["EMD-BD", "KS-BC"],
      "scenarios": {"nodrift": [0.0], "mean": [0.01, 0.04]}
    }

Flags given on the command line override the file.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Optional

from .errors import ConfigError, IOFailure
from .harness import DEFAULT_ZETAS, ExperimentConfig

KNOWN_KEYS = {
    # detect / fuse detect
    "train", "ref", "det", "method", "metric", "n", "k", "B", "alpha", "sigma", "kl_k", "seed",
    # simulate
    "experiment", "simulations", "m", "fast", "output_dir", "formats", "approaches", "scenarios",
    "include_timing", "workers", "fusion_n", "fusion_k", "train_null", "train_per_zeta",
    "calibrate_xi", "calibration_trials", "pc_reading",
    # sweep-ratio / bench
    "total", "ratios", "repeats",
    # fuse train
    "model", "priors", "kind", "output_type", "xi",
}
EXPERIMENTS = ("problem1", "problem2")


def load_config(path) -> Dict[str, Any]:
    """Parse a config file; unknown keys are rejected so typos surface early."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = sorted(set(doc) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return doc


def merge(config: Optional[Dict[str, Any]], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """``config`` updated with every override that is not ``None``."""
    out = dict(config or {})
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def experiment_config(opts: Dict[str, Any]) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from merged options."""
    from .harness import budget_detectors

    scenarios = opts.get("scenarios") or dict(DEFAULT_ZETAS)
    if not isinstance(scenarios, dict):
        raise ConfigError("scenarios must map a drift kind to a list of zeta values")
    alpha = float(opts.get("alpha", 0.05))
    fast = bool(opts.get("fast", False))
    detectors = budget_detectors(alpha, fast)
    approaches = opts.get("approaches")
    if approaches:
        missing = [a for a in approaches if a not in detectors]
        if missing:
            raise ConfigError(f"unknown approaches {missing}; choose from {list(detectors)}")
        detectors = {a: detectors[a] for a in approaches}
    return ExperimentConfig(
        scenarios={k: [float(z) for z in v] for k, v in scenarios.items()},
        detectors=detectors,
        simulations=int(opts.get("simulations", 100)),
        alpha=alpha,
        m=int(opts.get("m", 100)),
        base_seed=int(opts.get("seed", 0)),
        fast=fast,
        output_dir=opts.get("output_dir"),
        formats=tuple(opts.get("formats", ("csv", "json", "plotdata"))),
        include_timing=bool(opts.get("include_timing", False)),
        fusion_n=int(opts.get("fusion_n", 50)),
        fusion_k=int(opts.get("fusion_k", 100)),
        train_null=int(opts.get("train_null", 50)),
        train_per_zeta=int(opts.get("train_per_zeta", 10)),
        calibrate_xi=bool(opts.get("calibrate_xi", False)),
        calibration_trials=int(opts.get("calibration_trials", 100)),
    )
