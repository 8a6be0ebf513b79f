"""Data model, CSV ingestion, seeded scenario sampling and batch partitioning.

Datasets are plain ``(rows, dims)`` float64 arrays; :func:`as_dataset`
validates and normalises anything array-like into that form.
"""
from __future__ import annotations

import enum
import io
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DimMismatch,
    EmptyDataset,
    InvalidZeta,
    IOFailure,
    ParseFailure,
    SizeMismatch,
)

RngLike = Union[int, np.integer, np.random.Generator, None]


# --------------------------------------------------------------------------
# seeds

def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    return zlib.crc32(str(key).encode("utf-8"))


def derive_seed(base: int, *keys) -> int:
    """Derive an independent 64-bit seed from ``base`` and a key path.

    Keys may be integers or strings; strings are hashed with CRC-32 so the
    mapping is stable across processes and Python versions.
    """
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(_key_to_int(k) for k in keys))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def make_rng(rng: RngLike = None) -> np.random.Generator:
    """Return a PCG64 generator; an existing generator is passed through."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


def as_seed(rng: RngLike) -> int:
    """Collapse ``rng`` into a 64-bit integer seed (draws one value from a generator)."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63))
    if rng is None:
        return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0])
    return int(rng)


# --------------------------------------------------------------------------
# datasets

def as_dataset(values, name: str = "dataset") -> np.ndarray:
    """Validate ``values`` as a finite ``(rows, dims)`` matrix.

    A 1-D input is read as a single feature column.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise EmptyDataset(f"{name} is empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_same_dims(*sets: np.ndarray) -> int:
    dims = {s.shape[1] for s in sets}
    if len(dims) != 1:
        raise DimMismatch(f"feature dimensions differ: {sorted(dims)}")
    return dims.pop()


@dataclass(frozen=True)
class DetectionTriplet:
    """Training, reference and detection sets sharing one feature dimension."""

    training: np.ndarray
    reference: np.ndarray
    detection: np.ndarray

    def __post_init__(self):
        for field in ("training", "reference", "detection"):
            object.__setattr__(self, field, as_dataset(getattr(self, field), field))
        check_same_dims(self.training, self.reference, self.detection)

    @property
    def dims(self) -> int:
        return self.training.shape[1]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_dataset(path, format: str = "csv") -> np.ndarray:
    """Read a comma-separated numeric matrix.

    An optional header row is recognised when any field of the first line
    does not parse as a number.  ``ParseFailure.row`` is the 0-based index of
    the offending data row (header excluded) and ``.column`` the 0-based
    field index.
    """
    if format != "csv":
        raise ValueError(f"unsupported format {format!r}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln.strip()]
    if lines and not all(_is_number(f) for f in lines[0].split(",")):
        lines = lines[1:]
    if not lines:
        raise EmptyDataset(f"{path}: no data rows")
    try:
        data = np.loadtxt(io.StringIO("\n".join(lines)), delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        data = None
    if data is None or not np.all(np.isfinite(data)):
        _locate_parse_error(lines)
    return data


def _locate_parse_error(lines):
    width = len(lines[0].split(","))
    for r, line in enumerate(lines):
        fields = line.split(",")
        if len(fields) != width:
            raise ParseFailure(r, min(len(fields), width), line)
        for c, f in enumerate(fields):
            try:
                v = float(f)
            except ValueError:
                raise ParseFailure(r, c, f) from None
            if not np.isfinite(v):
                raise ParseFailure(r, c, f)
    raise ParseFailure(-1, -1, "<unknown>")


def save_dataset(path, data, header: Optional[Sequence[str]] = None) -> None:
    data = as_dataset(data)
    try:
        with open(path, "w", newline="\n") as fh:
            if header is not None:
                fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


# --------------------------------------------------------------------------
# scenarios

class DriftKind(str, enum.Enum):
    NO_DRIFT = "nodrift"
    MEAN = "mean"
    VAR = "var"
    COV = "cov"


@dataclass(frozen=True)
class ScenarioSpec:
    """A Gaussian data-generating scenario.

    ``MEAN`` shifts every coordinate by ``zeta``; ``VAR`` scales the
    covariance to ``zeta * I``; ``COV`` uses unit variances with every
    off-diagonal equal to ``zeta``.  ``mean_override`` replaces the zero
    mean used by ``VAR`` and ``COV`` (a scalar is broadcast).
    """

    kind: DriftKind
    zeta: float = 0.0
    m: int = 100
    mean_override: Optional[Union[float, tuple]] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        z = float(self.zeta)
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.kind is DriftKind.VAR and not z >= 1.0:
            raise InvalidZeta(f"variance drift needs zeta >= 1, got {z}")
        if self.kind is DriftKind.COV and not 0.0 <= z < 1.0:
            raise InvalidZeta(f"covariance drift needs 0 <= zeta < 1, got {z}")
        if self.kind is DriftKind.MEAN and not z >= 0.0:
            raise InvalidZeta(f"mean drift needs zeta >= 0, got {z}")

    @property
    def label(self) -> int:
        return 0 if self.kind is DriftKind.NO_DRIFT else 1

    def _mean(self) -> np.ndarray:
        if self.mean_override is None:
            return np.zeros(self.m)
        return np.broadcast_to(np.asarray(self.mean_override, dtype=float), (self.m,))


def sample_scenario(spec: ScenarioSpec, count: int, rng: RngLike = None) -> np.ndarray:
    """Draw ``count`` i.i.d. rows from ``spec``.

    The equicorrelated case uses the one-factor construction
    ``sqrt(zeta) * g * 1 + sqrt(1 - zeta) * z`` with a shared scalar ``g``,
    which has exactly the target covariance at O(m) cost per row.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    gen = make_rng(rng)
    m = spec.m
    z = gen.standard_normal((count, m))
    if spec.kind is DriftKind.NO_DRIFT:
        return z
    if spec.kind is DriftKind.MEAN:
        return z + spec.zeta
    if spec.kind is DriftKind.VAR:
        return spec._mean() + np.sqrt(spec.zeta) * z
    g = gen.standard_normal((count, 1))
    return spec._mean() + np.sqrt(spec.zeta) * g + np.sqrt(1.0 - spec.zeta) * z


NULL = ScenarioSpec(DriftKind.NO_DRIFT)


def sample_triplet(spec: ScenarioSpec, count: int, rng: RngLike = None,
                   detection_count: Optional[int] = None) -> DetectionTriplet:
    """Training and reference from N(0, I_m); detection from ``spec``."""
    gen = make_rng(rng)
    null = ScenarioSpec(DriftKind.NO_DRIFT, m=spec.m)
    training = sample_scenario(null, count, gen)
    reference = sample_scenario(null, count, gen)
    detection = sample_scenario(spec, detection_count or count, gen)
    return DetectionTriplet(training, reference, detection)


# --------------------------------------------------------------------------
# batching

@dataclass(frozen=True)
class BatchPlan:
    """``assignment[i]`` lists the row indices of batch ``i``."""

    n: int
    k: int
    assignment: np.ndarray

    def apply(self, ds: np.ndarray) -> np.ndarray:
        """Gather ``ds`` into an ``(n, k, dims)`` array."""
        return ds[self.assignment]


def partition(ds, n: int, k: int, shuffle_seed: RngLike = None) -> BatchPlan:
    """Split ``n * k`` rows into ``n`` disjoint batches of ``k``.

    Without a seed the batches are contiguous blocks in input order;
    with one the rows are uniformly permuted first.
    """
    rows = np.shape(ds)[0]
    if n < 1 or k < 1 or rows != n * k:
        raise SizeMismatch(f"cannot split {rows} rows into {n} batches of {k}")
    if shuffle_seed is None:
        order = np.arange(rows)
    else:
        order = make_rng(shuffle_seed).permutation(rows)
    return BatchPlan(n, k, order.reshape(n, k))
