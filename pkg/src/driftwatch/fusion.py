"""Drift detection with prior detections: fuse detector outputs with a learned combiner.

A prior detection is a triplet plus its known outcome ``z`` (1 = drift).
Each triplet is reduced to four detector outputs (EMD-BD, MMD-BD, KL-BD,
KS-BC) and a combiner is fit on the resulting table:

* ``AVG``  - mean p-value below ``alpha``; nothing is learnt.
* ``PL``   - perceptron weights on raw p-values with a fixed bias ``alpha``.
* ``LR``, ``KNN``, ``MLP`` - classifiers on standardised features; drift is
  declared when the predicted no-drift probability ``p_c`` is at most the
  threshold ``xi``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import DetectionTriplet, RngLike, as_seed, derive_seed, make_rng
from .detectors import DetectorOutputs, DriftReport, OutputType, detector_outputs
from .errors import EmptyTable, IOFailure, SingleClassTable

MODEL_FORMAT = "driftwatch-fusion-model"
MODEL_VERSION = 1

DEFAULT_XI = {"LR": 0.8, "KNN": 0.85, "MLP": 0.8}
KNN_NEIGHBOURS = 10
LR_RATE, LR_ITERS = 0.1, 2000
MLP_RATE, MLP_EPOCHS = 0.01, 500
MLP_LAYERS = (4, 4, 2, 1)
PERCEPTRON_EPOCHS = 1000


class FusionKind(str, enum.Enum):
    AVG = "AVG"
    PL = "PL"
    LR = "LR"
    KNN = "KNN"
    MLP = "MLP"


@dataclass(frozen=True)
class FusionTable:
    """Detector outputs (``features``, shape ``(M, 4)``) with outcomes ``labels``."""

    features: np.ndarray
    labels: np.ndarray
    output_type: OutputType = OutputType.PVALUES

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=int).ravel()
        if f.shape[0] == 0:
            raise EmptyTable("fusion table is empty")
        if f.shape[0] != y.size:
            raise ValueError("features and labels differ in length")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "output_type", OutputType(self.output_type))

    def __len__(self):
        return self.labels.size

    def require_both_classes(self):
        if np.unique(self.labels).size < 2:
            raise SingleClassTable("training needs both drift and no-drift examples")


def table_from_outputs(outputs: Sequence[DetectorOutputs], labels, output_type,
                       ks_statistic: str = "max") -> FusionTable:
    feats = np.array([o.features(output_type, ks_statistic) for o in outputs])
    return FusionTable(feats, labels, output_type)


def build_training_table(priors: Iterable, output_type=OutputType.PVALUES, cfgs=None,
                         rng: RngLike = None, ks_statistic: str = "max") -> FusionTable:
    """Featurise ``(triplet, z)`` priors; prior ``i`` uses seed ``derive_seed(seed, i)``."""
    seed = as_seed(rng)
    outputs, labels = [], []
    for i, (triplet, z) in enumerate(priors):
        outputs.append(detector_outputs(triplet, cfgs, derive_seed(seed, i)))
        labels.append(z)
    if not outputs:
        raise EmptyTable("no priors given")
    return table_from_outputs(outputs, labels, output_type, ks_statistic)


# --------------------------------------------------------------------------
# standardisation

@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, features) -> np.ndarray:
        return apply_standardizer(self, features)


def fit_standardizer(table) -> Standardizer:
    """Column means and sample standard deviations (n - 1 denominator)."""
    f = table.features if isinstance(table, FusionTable) else np.atleast_2d(np.asarray(table, float))
    if f.shape[0] == 0:
        raise EmptyTable("cannot standardise an empty table")
    sd = f.std(axis=0, ddof=1) if f.shape[0] > 1 else np.zeros(f.shape[1])
    return Standardizer(f.mean(axis=0), sd)


def apply_standardizer(s: Standardizer, features) -> np.ndarray:
    """z-score with the stored statistics; zero-variance columns map to 0."""
    f = np.asarray(features, dtype=float)
    safe = np.where(s.sd > 0, s.sd, 1.0)
    return np.where(s.sd > 0, (f - s.mean) / safe, 0.0)


# --------------------------------------------------------------------------
# models

@dataclass
class FusionModel:
    """A fitted combiner.

    ``params`` holds numpy arrays: ``w`` for PL; ``w``, ``b`` for LR;
    ``X``, ``y`` (standardised examples) for KNN; ``W1``..``W3`` and
    ``b1``..``b3`` for MLP.  ``threshold`` is ``alpha`` for AVG/PL and
    ``xi`` for the classifiers.
    """

    kind: FusionKind
    output_type: OutputType
    threshold: float
    standardizer: Optional[Standardizer] = None
    params: dict = field(default_factory=dict)
    pc_reading: str = "nodrift"

    def __post_init__(self):
        self.kind = FusionKind(self.kind)
        self.output_type = OutputType(self.output_type)
        if self.pc_reading not in ("nodrift", "drift"):
            raise ValueError("pc_reading must be 'nodrift' or 'drift'")

    @property
    def name(self) -> str:
        if self.kind in (FusionKind.AVG, FusionKind.PL):
            return self.kind.value
        suffix = "p" if self.output_type is OutputType.PVALUES else "s"
        return {"LR": "LR", "KNN": "kNN", "MLP": "MLP"}[self.kind.value] + "-" + suffix


def avg_decide(p, alpha: float = 0.05) -> bool:
    """Drift iff the mean p-value is strictly below ``alpha``."""
    return bool(np.mean(np.asarray(p, dtype=float)) < alpha)


def average_model(alpha: float = 0.05) -> FusionModel:
    return FusionModel(FusionKind.AVG, OutputType.PVALUES, alpha)


def train_perceptron(table: FusionTable, alpha: float = 0.05, eta: float = 1.0,
                     max_epochs: int = PERCEPTRON_EPOCHS) -> FusionModel:
    """Classical perceptron on raw features with the bias fixed at ``alpha``.

    Starts from zero weights, visits examples in table order, and stops
    after the first epoch without a mistake or after ``max_epochs``.
    """
    table.require_both_classes()
    x, y = table.features, table.labels
    w = np.zeros(x.shape[1])
    for _ in range(max_epochs):
        mistakes = 0
        for xi, zi in zip(x, y):
            pred = 1 if w @ xi + alpha > 0 else 0
            if pred != zi:
                w = w + eta * (zi - pred) * xi
                mistakes += 1
        if mistakes == 0:
            break
    return FusionModel(FusionKind.PL, table.output_type, alpha, params={"w": w})


def pl_decide(model: FusionModel, p) -> bool:
    return bool(model.params["w"] @ np.asarray(p, dtype=float) + model.threshold > 0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _train_lr(x, y, rate=LR_RATE, iters=LR_ITERS):
    w = np.zeros(x.shape[1])
    b = 0.0
    n = len(y)
    for _ in range(iters):
        err = _sigmoid(x @ w + b) - y
        w -= rate * (x.T @ err) / n
        b -= rate * err.mean()
    return {"w": w, "b": np.array([b])}


def mlp_init(rng: RngLike = 0, layers=MLP_LAYERS) -> dict:
    """He-normal weights, zero biases."""
    gen = make_rng(rng)
    params = {}
    for i, (fan_in, fan_out) in enumerate(zip(layers[:-1], layers[1:]), start=1):
        params[f"W{i}"] = gen.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        params[f"b{i}"] = np.zeros(fan_out)
    return params


def mlp_forward(params: dict, x: np.ndarray) -> np.ndarray:
    """Probability of drift for each row of ``x``."""
    h = x
    n_layers = len(params) // 2
    for i in range(1, n_layers):
        h = np.maximum(h @ params[f"W{i}"] + params[f"b{i}"], 0.0)
    return _sigmoid(h @ params[f"W{n_layers}"] + params[f"b{n_layers}"]).ravel()


def mlp_loss_and_grad(params: dict, x: np.ndarray, y: np.ndarray):
    """Mean binary cross-entropy and its gradient by backpropagation."""
    n_layers = len(params) // 2
    acts = [x]
    pre = []
    h = x
    for i in range(1, n_layers + 1):
        z = h @ params[f"W{i}"] + params[f"b{i}"]
        pre.append(z)
        h = np.maximum(z, 0.0) if i < n_layers else z
        acts.append(h)
    logit = pre[-1].ravel()
    # log(1 + e^z) - y z, written stably
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    grads = {}
    delta = ((_sigmoid(logit) - y) / len(y))[:, None]
    for i in range(n_layers, 0, -1):
        grads[f"W{i}"] = acts[i - 1].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 1:
            delta = (delta @ params[f"W{i}"].T) * (pre[i - 2] > 0)
    return loss, grads


def _train_mlp(x, y, rng, rate=MLP_RATE, epochs=MLP_EPOCHS, record_loss=False):
    params = mlp_init(rng)
    history = []
    for _ in range(epochs):
        loss, grads = mlp_loss_and_grad(params, x, y)
        history.append(loss)
        for key in params:
            params[key] = params[key] - rate * grads[key]
    return (params, history) if record_loss else params


def train_classifier(table: FusionTable, kind, hyper: Optional[dict] = None, rng: RngLike = 0,
                     xi: Optional[float] = None, pc_reading: str = "nodrift") -> FusionModel:
    """Fit LR, KNN or MLP on the standardised table.

    ``hyper`` may override ``rate``/``iters`` (LR), ``rate``/``epochs``
    (MLP) or ``neighbours`` (KNN).
    """
    kind = FusionKind(kind)
    if kind not in (FusionKind.LR, FusionKind.KNN, FusionKind.MLP):
        raise ValueError(f"{kind.value} is not a classifier")
    table.require_both_classes()
    hyper = dict(hyper or {})
    std = fit_standardizer(table)
    x = std.apply(table.features)
    y = table.labels.astype(float)
    if kind is FusionKind.LR:
        params = _train_lr(x, y, hyper.get("rate", LR_RATE), hyper.get("iters", LR_ITERS))
    elif kind is FusionKind.MLP:
        params = _train_mlp(x, y, rng, hyper.get("rate", MLP_RATE), hyper.get("epochs", MLP_EPOCHS))
    else:
        params = {"X": x, "y": table.labels.copy(),
                  "neighbours": np.array([hyper.get("neighbours", KNN_NEIGHBOURS)])}
    return FusionModel(kind, table.output_type, DEFAULT_XI[kind.value] if xi is None else xi, std,
                       params, pc_reading)


def drift_probability(model: FusionModel, features) -> np.ndarray:
    """Classifier probability of the drift class for raw (unstandardised) feature rows."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    x = model.standardizer.apply(f)
    if model.kind is FusionKind.LR:
        return _sigmoid(x @ model.params["w"] + model.params["b"][0])
    if model.kind is FusionKind.MLP:
        return mlp_forward(model.params, x)
    if model.kind is FusionKind.KNN:
        stored, labels = model.params["X"], model.params["y"]
        kn = int(model.params["neighbours"][0])
        d2 = ((x[:, None, :] - stored[None, :, :]) ** 2).sum(axis=2)
        # stable sort: ties go to the earlier stored example
        idx = np.argsort(d2, axis=1, kind="stable")[:, :kn]
        return labels[idx].mean(axis=1)
    raise ValueError(f"{model.kind.value} has no class probability")


def classifier_probability(model: FusionModel, features) -> np.ndarray:
    """``p_c``: no-drift probability (default reading) or drift probability."""
    p1 = drift_probability(model, features)
    return 1.0 - p1 if model.pc_reading == "nodrift" else p1


def fusion_decide(model: FusionModel, features) -> bool:
    """Decision of any fusion model on one raw feature vector."""
    if model.kind is FusionKind.AVG:
        return avg_decide(features, model.threshold)
    if model.kind is FusionKind.PL:
        return pl_decide(model, features)
    return bool(classifier_probability(model, features)[0] <= model.threshold)


def classifier_detect(model: FusionModel, triplet: DetectionTriplet, cfgs=None,
                      rng: RngLike = None) -> DriftReport:
    """Featurise ``triplet`` and apply ``model``."""
    outputs = detector_outputs(triplet, cfgs, rng)
    f = outputs.features(model.output_type)
    if model.kind in (FusionKind.AVG, FusionKind.PL):
        score = float(model.params["w"] @ f) if model.kind is FusionKind.PL else float(np.mean(f))
    else:
        score = float(classifier_probability(model, f)[0])
    return DriftReport(
        drift_detected=fusion_decide(model, f),
        p_value=float("nan"),
        statistic=score,
        detector=model.name,
        wall_time=sum(r.wall_time for r in outputs.reports),
        config={"kind": model.kind.value, "output_type": model.output_type.value,
                "threshold": model.threshold, "pc_reading": model.pc_reading},
        extra={"features": [float(v) for v in f]},
    )


def calibrate_threshold(model: FusionModel, null_features, target_fpr: float = 0.05) -> float:
    """Largest ``xi`` whose false-positive rate on ``null_features`` is at most ``target_fpr``.

    Only meaningful for the default no-drift reading of ``p_c``.
    """
    pc = np.sort(classifier_probability(model, null_features))
    allowed = int(math.floor(target_fpr * pc.size))
    # drift fires when p_c <= xi, so xi must sit strictly below the (allowed+1)-th smallest p_c
    if allowed >= pc.size:
        return float(pc[-1])
    nxt = pc[allowed]
    below = pc[pc < nxt]
    return float(below[-1]) if below.size else float(np.nextafter(nxt, -np.inf))


# --------------------------------------------------------------------------
# persistence

def _encode(v):
    arr = np.asarray(v)
    return {"shape": list(arr.shape), "dtype": str(arr.dtype), "data": [x.item() if hasattr(x, "item") else x
                                                                        for x in arr.ravel()]}


def _decode(d):
    return np.array(d["data"], dtype=d["dtype"]).reshape(d["shape"])


def model_to_dict(model: FusionModel) -> dict:
    out = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind.value,
        "output_type": model.output_type.value,
        "threshold": model.threshold,
        "pc_reading": model.pc_reading,
        "standardizer": None,
        "params": {k: _encode(v) for k, v in sorted(model.params.items())},
    }
    if model.standardizer is not None:
        out["standardizer"] = {"mean": _encode(model.standardizer.mean), "sd": _encode(model.standardizer.sd)}
    return out


def model_from_dict(d: dict) -> FusionModel:
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise ValueError("not a driftwatch fusion model (version 1)")
    std = d.get("standardizer")
    return FusionModel(
        kind=d["kind"],
        output_type=d["output_type"],
        threshold=float(d["threshold"]),
        standardizer=None if std is None else Standardizer(_decode(std["mean"]), _decode(std["sd"])),
        params={k: _decode(v) for k, v in d["params"].items()},
        pc_reading=d.get("pc_reading", "nodrift"),
    )


def save_model(model: FusionModel, path) -> None:
    try:
        Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def load_model(path) -> FusionModel:
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
