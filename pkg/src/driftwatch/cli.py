"""Command-line entry point ``driftwatch``.

Subcommands: ``detect``, ``simulate``, ``sweep-ratio``, ``bench`` and
``fuse train|detect``.  ``detect`` and ``fuse detect`` print a JSON report
and exit with 0 (no drift), 10 (drift) or 1 (error).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .core import DetectionTriplet, load_dataset
from .detectors import DetectorConfig, OutputType, detect, detector_outputs, fusion_configs
from .distances import DistanceMetric
from .errors import ConfigError, DriftwatchError
from .fusion import (
    FusionKind,
    average_model,
    classifier_detect,
    load_model,
    save_model,
    table_from_outputs,
    train_classifier,
    train_perceptron,
)
from .harness import (
    DEFAULT_RATIOS,
    accuracy_table,
    generate_fusion_training,
    run_budget_bench,
    run_problem1_experiment,
    run_problem2_experiment,
    run_ratio_sweep,
)
from .report import emit_report

EXIT_NO_DRIFT = 0
EXIT_ERROR = 1
EXIT_DRIFT = 10

log = logging.getLogger("driftwatch")


def _add_data_args(p):
    p.add_argument("--train", help="training set CSV")
    p.add_argument("--ref", help="reference set CSV")
    p.add_argument("--det", help="detection set CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftwatch", description="Label-free drift detection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run one detector on three CSV files")
    p.add_argument("--config")
    _add_data_args(p)
    p.add_argument("--method", choices=["bd", "pt", "ksbc"])
    p.add_argument("--metric", choices=["emd", "mmd", "kl"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--B", type=int, help="permutation rounds (pt)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--sigma", type=float, help="fixed RBF bandwidth for mmd")
    p.add_argument("--kl-k", dest="kl_k", type=int, help="neighbour order for kl")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("simulate", help="Monte-Carlo FPR/FNR tables")
    p.add_argument("--config")
    p.add_argument("--experiment", choices=config_mod.EXPERIMENTS)
    p.add_argument("--fast", action="store_true", default=None, help="KS-BC at n*k=10000")
    p.add_argument("--simulations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--workers", type=int)
    p.add_argument("--pc-reading", dest="pc_reading", choices=["nodrift", "drift"])
    p.add_argument("--calibrate-xi", dest="calibrate_xi", action="store_true", default=None)

    p = sub.add_parser("sweep-ratio", help="BD error rates at fixed n*k over k/n ratios")
    p.add_argument("--config")
    p.add_argument("--total", type=int)
    p.add_argument("--simulations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--m", type=int)
    p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("bench", help="time the matched-budget settings and fit complexity exponents")
    p.add_argument("--config")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fast", action="store_true", default=None)
    p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("fuse", help="train or apply a fusion model")
    fsub = p.add_subparsers(dest="action", required=True)
    t = fsub.add_parser("train")
    t.add_argument("--config")
    t.add_argument("--model", help="where to write the model")
    t.add_argument("--priors", help="CSV manifest with columns train,ref,det,z")
    t.add_argument("--kind", choices=[k.value.lower() for k in FusionKind])
    t.add_argument("--output-type", dest="output_type", choices=[o.value for o in OutputType])
    t.add_argument("--xi", type=float)
    t.add_argument("--pc-reading", dest="pc_reading", choices=["nodrift", "drift"])
    t.add_argument("--n", type=int)
    t.add_argument("--k", type=int)
    t.add_argument("--alpha", type=float)
    t.add_argument("--m", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--train-null", dest="train_null", type=int)
    t.add_argument("--train-per-zeta", dest="train_per_zeta", type=int)
    d = fsub.add_parser("detect")
    d.add_argument("--config")
    d.add_argument("--model")
    _add_data_args(d)
    d.add_argument("--n", type=int)
    d.add_argument("--k", type=int)
    d.add_argument("--seed", type=int)
    return parser


def _options(args) -> dict:
    raw = {k: v for k, v in vars(args).items() if k not in ("command", "action", "config", "verbose")}
    base = config_mod.load_config(args.config) if getattr(args, "config", None) else {}
    return config_mod.merge(base, raw)


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _load_triplet(opts) -> DetectionTriplet:
    _require(opts, "train", "ref", "det")
    return DetectionTriplet(load_dataset(opts["train"]), load_dataset(opts["ref"]), load_dataset(opts["det"]))


def _emit_json(doc) -> None:
    json.dump(doc, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_detect(opts) -> int:
    _require(opts, "method")
    triplet = _load_triplet(opts)
    metric = None
    if opts["method"] != "ksbc":
        _require(opts, "metric")
        metric = DistanceMetric(opts["metric"], mmd_sigma=opts.get("sigma"), kl_k=opts.get("kl_k", 1))
    n = opts.get("n", 1 if opts["method"] != "bd" else 100)
    cfg = DetectorConfig(opts["method"], metric, n, opts.get("k"), B=opts.get("B", 100),
                         alpha=opts.get("alpha", 0.05))
    report = detect(triplet, cfg, opts.get("seed", 0))
    _emit_json(report.to_dict())
    return EXIT_DRIFT if report.drift_detected else EXIT_NO_DRIFT


def cmd_simulate(opts) -> int:
    cfg = config_mod.experiment_config(opts)
    out = opts.get("output_dir") or "results"
    if opts.get("experiment", "problem1") == "problem1":
        table = run_problem1_experiment(cfg, workers=int(opts.get("workers", 1)))
        paths = emit_report(table, out, cfg.formats, "problem1", cfg.include_timing)
    else:
        res = run_problem2_experiment(cfg, pc_reading=opts.get("pc_reading", "nodrift"))
        paths = emit_report(res.table, out, cfg.formats, "problem2", cfg.include_timing)
        paths += emit_report(accuracy_table(res.accuracy, res.table.notes), out,
                             [f for f in cfg.formats if f != "plotdata"], "problem2_accuracy")
    for p in paths:
        print(p)
    return 0


def cmd_sweep(opts) -> int:
    cfg = config_mod.experiment_config(opts)
    total = int(opts.get("total", 5000))
    ratios = [tuple(r) for r in opts.get("ratios", DEFAULT_RATIOS)]
    table = run_ratio_sweep(total, ratios, cfg)
    for p in emit_report(table, opts.get("output_dir") or "results", cfg.formats, "ratio_sweep"):
        print(p)
    return 0


def cmd_bench(opts) -> int:
    cfg = config_mod.experiment_config(opts)
    res = run_budget_bench(cfg, repeats=int(opts.get("repeats", 3)))
    doc = {"timings": res.rows, "slopes": res.slopes, "pt_over_B_single": res.pt_ratio}
    out = opts.get("output_dir")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        path = Path(out) / "bench.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print(path)
    else:
        _emit_json(doc)
    return 0


def _read_priors(manifest):
    """Rows of ``train,ref,det,z``; relative paths resolve against the manifest's folder."""
    root = Path(manifest).parent
    with open(manifest, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{manifest}: no priors listed")
    for r in rows:
        trip = DetectionTriplet(*(load_dataset(root / r[c]) for c in ("train", "ref", "det")))
        yield trip, int(r["z"])


def cmd_fuse_train(opts) -> int:
    _require(opts, "model")
    kind = FusionKind(opts.get("kind", "mlp").upper())
    output_type = OutputType(opts.get("output_type", "pvalues"))
    alpha = float(opts.get("alpha", 0.05))
    seed = int(opts.get("seed", 0))
    n, k = int(opts.get("n", 50)), opts.get("k", 100)
    if opts.get("priors"):
        cfgs = fusion_configs(n, k, alpha)
        outputs, labels = [], []
        for i, (trip, z) in enumerate(_read_priors(opts["priors"])):
            outputs.append(detector_outputs(trip, cfgs, seed + i))
            labels.append(z)
        labels = np.array(labels)
    else:
        cfg = config_mod.experiment_config(dict(opts, fusion_n=n, fusion_k=k or 100))
        outputs, labels = generate_fusion_training(cfg)
    if kind is FusionKind.AVG:
        model = average_model(alpha)
    elif kind is FusionKind.PL:
        model = train_perceptron(table_from_outputs(outputs, labels, OutputType.PVALUES), alpha)
    else:
        table = table_from_outputs(outputs, labels, output_type)
        model = train_classifier(table, kind, rng=seed, xi=opts.get("xi"),
                                 pc_reading=opts.get("pc_reading", "nodrift"))
    save_model(model, opts["model"])
    print(opts["model"])
    return 0


def cmd_fuse_detect(opts) -> int:
    _require(opts, "model")
    model = load_model(opts["model"])
    triplet = _load_triplet(opts)
    cfgs = fusion_configs(int(opts.get("n", 50)), opts.get("k"), 0.05 if model.kind.value not in ("AVG", "PL")
                          else model.threshold)
    report = classifier_detect(model, triplet, cfgs, opts.get("seed", 0))
    _emit_json(report.to_dict())
    return EXIT_DRIFT if report.drift_detected else EXIT_NO_DRIFT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handlers = {"detect": cmd_detect, "simulate": cmd_simulate, "sweep-ratio": cmd_sweep, "bench": cmd_bench}
    try:
        opts = _options(args)
        if args.command == "fuse":
            return cmd_fuse_train(opts) if args.action == "train" else cmd_fuse_detect(opts)
        return handlers[args.command](opts)
    except (DriftwatchError, ValueError, OSError) as exc:
        print(f"driftwatch: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
