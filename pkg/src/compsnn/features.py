"""Trajectory ingestion, 10-channel feature extraction, demographics encoding.

A raw trajectory is a strictly time-ordered sequence of (t, x, y) samples.
It is enriched into a 10 x N feature matrix with fixed channel order

    [x, y, speed, accel, dx, dy, theta, dtheta, entropy, variance]

where derivatives use centered finite differences over the actual sample
spacing, theta is the heading of motion (configurable to the bearing of the
raw position), dtheta is the turn rate computed on wrapped angle differences,
and entropy/variance are sliding-window statistics of the turn rate.

Demographic records are encoded into vectors in [0, 1]^8 from a declared
schema of categorical/ordinal fields with evenly spaced values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, MissingField, NonMonotonicTime, TooShort, UnknownCategory

TWO_PI = 2.0 * math.pi

CHANNELS = ("x", "y", "speed", "accel", "dx", "dy", "theta", "dtheta", "entropy", "variance")


@dataclass(frozen=True)
class RawTrajectory:
    """One navigator's samples on one level: parallel arrays t, x, y."""

    id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @property
    def n(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class FeatureConfig:
    direction_mode: str = "heading"  # "heading" or "position_bearing"
    window: int = 9                  # centered, shrinking at boundaries
    entropy_bins: int = 16           # histogram bins over (-pi, pi]

    def __post_init__(self):
        if self.direction_mode not in ("heading", "position_bearing"):
            raise ValueError(f"unknown direction_mode {self.direction_mode!r}")
        if self.window < 1 or self.entropy_bins < 1:
            raise ValueError("window and entropy_bins must be >= 1")


@dataclass(frozen=True)
class FeatureSeries:
    """10 x N derived signal; see module docstring for the channel order."""

    channels: np.ndarray

    @property
    def n(self) -> int:
        return self.channels.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNELS.index(name)]


def validate_trajectory(raw: RawTrajectory) -> RawTrajectory:
    """Drop non-finite samples and duplicate timestamps; verify ordering.

    Duplicate timestamps keep their first occurrence. A timestamp that is
    strictly smaller than an earlier kept one cannot be repaired and raises
    NonMonotonicTime. Fewer than 3 surviving samples raises TooShort.
    """
    t = np.asarray(raw.t, dtype=np.float64)
    x = np.asarray(raw.x, dtype=np.float64)
    y = np.asarray(raw.y, dtype=np.float64)
    if not (len(t) == len(x) == len(y)):
        raise LengthMismatch(f"trajectory {raw.id}: t/x/y lengths differ")
    finite = np.isfinite(t) & np.isfinite(x) & np.isfinite(y)
    t, x, y = t[finite], x[finite], y[finite]
    keep = []
    last = None
    for i in range(len(t)):
        if last is not None:
            if t[i] == last:
                continue
            if t[i] < last:
                raise NonMonotonicTime(f"trajectory {raw.id}: time decreases at sample {i}")
        keep.append(i)
        last = t[i]
    if len(keep) < 3:
        raise TooShort(f"trajectory {raw.id}: {len(keep)} valid samples, need >= 3")
    idx = np.array(keep)
    return RawTrajectory(raw.id, t[idx], x[idx], y[idx])


def finite_difference(series, dt) -> np.ndarray:
    """Differentiate a sampled series with non-uniform spacing.

    Interior points use the centered stencil (y[i+1] - y[i-1]) / (dt[i-1] + dt[i]);
    the endpoints use one-sided differences. Output length equals input length.
    """
    series = np.asarray(series, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    n = len(series)
    if n < 2 or dt.shape != (n - 1,):
        raise LengthMismatch(f"series of {n} needs {n - 1} spacings, got {dt.shape}")
    if np.any(dt <= 0):
        raise ValueError("all spacings must be positive")
    out = np.empty(n, dtype=np.float64)
    out[0] = (series[1] - series[0]) / dt[0]
    out[-1] = (series[-1] - series[-2]) / dt[-1]
    if n > 2:
        out[1:-1] = (series[2:] - series[:-2]) / (dt[1:] + dt[:-1])
    return out


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    w = a - TWO_PI * np.floor((a + math.pi) / TWO_PI)
    return np.where(w <= -math.pi, w + TWO_PI, w)


def unwrap_angles(theta: np.ndarray) -> np.ndarray:
    """Remove 2*pi jumps: cumulative sum of wrapped successive differences."""
    if len(theta) == 0:
        return theta.copy()
    steps = wrap_angle(np.diff(theta))
    out = np.empty_like(theta)
    out[0] = theta[0]
    out[1:] = theta[0] + np.cumsum(steps)
    return out


def _windowed_turn_stats(values: np.ndarray, window: int, bins: int):
    """Sliding-window entropy and variance of the turn-rate signal.

    Windows are centered and shrink at the boundaries. Entropy is the Shannon
    entropy (natural log) of a histogram over (-pi, pi]; values outside that
    range are clamped into the extreme bins. Variance is the plain population
    variance of the raw window values.
    """
    n = len(values)
    half = window // 2
    pos = np.arange(n)
    lo = np.maximum(0, pos - half)
    hi = np.minimum(n, pos + half + 1)
    cnt = (hi - lo).astype(np.float64)

    c1 = np.concatenate([[0.0], np.cumsum(values)])
    c2 = np.concatenate([[0.0], np.cumsum(values * values)])
    mean = (c1[hi] - c1[lo]) / cnt
    var = np.maximum((c2[hi] - c2[lo]) / cnt - mean * mean, 0.0)

    clamped = np.clip(values, -math.pi, math.pi)
    idx = np.floor((clamped + math.pi) / TWO_PI * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    onehot = np.zeros((n + 1, bins))
    onehot[np.arange(1, n + 1), idx] = 1.0
    csum = np.cumsum(onehot, axis=0)
    counts = csum[hi] - csum[lo]
    p = counts / cnt[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    entropy = -terms.sum(axis=1)
    return np.maximum(entropy, 0.0), var


def compute_feature_series(raw: RawTrajectory, cfg: FeatureConfig = FeatureConfig()) -> FeatureSeries:
    """Derive the 10-channel feature matrix of a validated trajectory."""
    t, x, y = raw.t, raw.x, raw.y
    dt = np.diff(t)
    dx = finite_difference(x, dt)
    dy = finite_difference(y, dt)
    speed = np.hypot(dx, dy)
    accel = finite_difference(speed, dt)
    if cfg.direction_mode == "heading":
        theta = np.arctan2(dy, dx)
    else:
        theta = np.arctan2(x, y)
    dtheta = finite_difference(unwrap_angles(theta), dt)
    entropy, variance = _windowed_turn_stats(dtheta, cfg.window, cfg.entropy_bins)
    channels = np.vstack([x, y, speed, accel, dx, dy, theta, dtheta, entropy, variance])
    return FeatureSeries(channels)


# ---------------------------------------------------------------------------
# demographics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str               # "categorical" or "ordinal"
    values: tuple[str, ...]  # declared order fixes the encoding

    def __post_init__(self):
        if self.kind not in ("categorical", "ordinal"):
            raise ValueError(f"field {self.name!r}: unknown kind {self.kind!r}")
        if not self.values:
            raise ValueError(f"field {self.name!r}: no values declared")


@dataclass(frozen=True)
class DemographicSchema:
    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        if len(self.fields) != 8:
            raise ValueError(f"schema declares {len(self.fields)} fields, need 8")

    @classmethod
    def from_json(cls, path) -> "DemographicSchema":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        fields = tuple(
            FieldSpec(f["name"], f["kind"], tuple(str(v) for v in f["values"]))
            for f in doc["fields"]
        )
        return cls(fields)

    def to_json(self, path) -> None:
        doc = {
            "fields": [
                {"name": f.name, "kind": f.kind, "values": list(f.values)}
                for f in self.fields
            ]
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def encode_demographics(record: dict, schema: DemographicSchema) -> np.ndarray:
    """Encode one raw record into [0, 1]^8.

    A field with M declared values maps value i to i / (M - 1); a field with
    a single declared value maps to 0. Both categorical and ordinal fields
    use their declared order.
    """
    out = np.empty(len(schema.fields), dtype=np.float64)
    for i, spec in enumerate(schema.fields):
        if spec.name not in record:
            raise MissingField(f"record lacks field {spec.name!r}")
        value = str(record[spec.name])
        try:
            idx = spec.values.index(value)
        except ValueError:
            raise UnknownCategory(
                f"field {spec.name!r}: value {value!r} not in schema"
            ) from None
        m = len(spec.values)
        out[i] = idx / (m - 1) if m > 1 else 0.0
    return out


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------

def load_trajectories_csv(path) -> list[RawTrajectory]:
    """Read `traj_id,t,x,y` rows grouped by traj_id (first-appearance order)."""
    groups: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            groups.setdefault(row["traj_id"], []).append(
                (float(row["t"]), float(row["x"]), float(row["y"]))
            )
    out = []
    for tid, rows in groups.items():
        arr = np.array(rows, dtype=np.float64)
        out.append(RawTrajectory(tid, arr[:, 0], arr[:, 1], arr[:, 2]))
    return out


def write_trajectories_csv(path, trajs) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("traj_id,t,x,y\n")
        for traj in trajs:
            for t, x, y in zip(traj.t, traj.x, traj.y):
                fh.write(f"{traj.id},{float(t)!r},{float(x)!r},{float(y)!r}\n")


def load_demographics_csv(path, schema: DemographicSchema) -> dict[str, np.ndarray]:
    """Read `traj_id,f1,...,f8` raw records and encode them with the schema."""
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            record = {spec.name: row.get(spec.name) for spec in schema.fields}
            missing = [k for k, v in record.items() if v is None]
            if missing:
                raise MissingField(f"row {row.get('traj_id')!r} lacks {missing}")
            out[row["traj_id"]] = encode_demographics(record, schema)
    return out


def write_demographics_csv(path, records: dict[str, dict], schema: DemographicSchema) -> None:
    names = [spec.name for spec in schema.fields]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("traj_id," + ",".join(names) + "\n")
        for tid, record in records.items():
            fh.write(tid + "," + ",".join(str(record[n]) for n in names) + "\n")
