"""Per-timestep-group contribution factors.

Two estimators for how much each denoising timestep group contributes to the
final perception quality:

* ``schedule_profile`` reads the contribution straight off the noise
  schedule: the raw weight of timestep t is (1 - abar_t) / abar_t, summed
  within each group and normalized.
* ``stats_profile`` estimates it from measured metric traces by iteratively
  regressing the final metric on a growing set of checkpoint metrics and
  taking the increase in R^2 contributed by each group.

Groups are contiguous timestep ranges; group 0 covers the lowest timesteps
(near clean data) and group B-1 the highest (near pure noise). Weights are
stored in that ascending-t group order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule

DEFAULT_GROUPS = 10
DEFAULT_FLOOR = 0.01


class RegressionError(ValueError):
    """Degenerate or underdetermined regression input."""


class TraceError(ValueError):
    """Malformed metric trace."""


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray  # intercept first, then slopes
    r_squared: float


@dataclass(frozen=True)
class ContributionProfile:
    """Normalized per-group weights c_t^2 with their timestep partition."""

    group_bounds: np.ndarray  # B+1 ints, bounds[b]..bounds[b+1]-1 inclusive... see group_range
    weights: np.ndarray       # B floats summing to 1, ascending-t group order
    source: str               # "schedule" | "statistics" | "uniform"

    def __post_init__(self):
        object.__setattr__(self, "group_bounds", np.asarray(self.group_bounds, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.float64))
        if len(self.group_bounds) != len(self.weights) + 1:
            raise ValueError("group_bounds must have len(weights) + 1 entries")
        if not np.all(np.diff(self.group_bounds) > 0):
            raise ValueError("group_bounds must be strictly increasing")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {self.weights.sum()}")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")

    @property
    def group_count(self) -> int:
        return len(self.weights)

    def group_range(self, b: int) -> tuple[int, int]:
        """Inclusive timestep range [lo, hi] of group b."""
        return int(self.group_bounds[b]), int(self.group_bounds[b + 1] - 1)

    def group_of(self, t: int) -> int:
        """Index of the group containing timestep t."""
        if not self.group_bounds[0] <= t < self.group_bounds[-1]:
            raise IndexError(f"timestep {t} outside partition")
        return int(np.searchsorted(self.group_bounds, t, side="right") - 1)

    def to_json(self) -> str:
        return json.dumps({
            "source": self.source,
            "group_bounds": self.group_bounds.tolist(),
            "weights": self.weights.tolist(),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ContributionProfile":
        doc = json.loads(text)
        return cls(group_bounds=np.asarray(doc["group_bounds"]),
                   weights=np.asarray(doc["weights"]),
                   source=doc["source"])


def group_partition(T: int, B: int) -> np.ndarray:
    """B+1 bounds partitioning 1..T into B near-even contiguous groups."""
    if not 1 <= B <= T:
        raise ValueError(f"need 1 <= B <= T, got B={B}, T={T}")
    edges = np.round(np.linspace(1, T + 1, B + 1)).astype(np.int64)
    edges[0], edges[-1] = 1, T + 1
    if not np.all(np.diff(edges) > 0):
        raise ValueError("partition produced an empty group")
    return edges


def uniform_profile(T: int, B: int = DEFAULT_GROUPS) -> ContributionProfile:
    bounds = group_partition(T, B)
    return ContributionProfile(group_bounds=bounds, weights=np.full(B, 1.0 / B), source="uniform")


def schedule_profile(schedule: NoiseSchedule, B: int = DEFAULT_GROUPS) -> ContributionProfile:
    """Contribution weights (1 - abar_t)/abar_t summed per group, normalized."""
    bounds = group_partition(schedule.T, B)
    ab = schedule.alpha_bars[1:]  # abar_t for t = 1..T
    raw_t = (1.0 - ab) / ab
    sums = np.array([raw_t[bounds[b] - 1: bounds[b + 1] - 1].sum() for b in range(B)])
    return ContributionProfile(group_bounds=bounds, weights=sums / sums.sum(), source="schedule")


@dataclass(frozen=True)
class MetricTrace:
    """Checkpoint metrics from N denoising trajectories.

    ``checkpoints`` is N x B; column 0 holds the t=T-side group's checkpoint
    metric and column B-1 the t=1-side group's. ``finals`` holds the metric
    of the fully denoised output.
    """

    checkpoints: np.ndarray   # N x B
    finals: np.ndarray        # N
    timesteps: np.ndarray     # B, checkpoint t per column (descending)

    def __post_init__(self):
        object.__setattr__(self, "checkpoints", np.asarray(self.checkpoints, dtype=np.float64))
        object.__setattr__(self, "finals", np.asarray(self.finals, dtype=np.float64))
        object.__setattr__(self, "timesteps", np.asarray(self.timesteps, dtype=np.int64))
        if self.checkpoints.ndim != 2:
            raise TraceError("checkpoints must be an N x B matrix")
        if len(self.finals) != self.checkpoints.shape[0]:
            raise TraceError("finals length must match checkpoint rows")
        if len(self.timesteps) != self.checkpoints.shape[1]:
            raise TraceError("timesteps length must match checkpoint columns")
        if not (np.all(np.isfinite(self.checkpoints)) and np.all(np.isfinite(self.finals))):
            raise TraceError("metric values must be finite")

    @property
    def sample_count(self) -> int:
        return self.checkpoints.shape[0]

    @property
    def group_count(self) -> int:
        return self.checkpoints.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample_id", "group_index", "timestep", "metric", "final_metric"])
        for i in range(self.sample_count):
            for b in range(self.group_count):
                w.writerow([i, b, int(self.timesteps[b]),
                            repr(float(self.checkpoints[i, b])), repr(float(self.finals[i]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "MetricTrace":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise TraceError("empty trace CSV")
        n = max(int(r["sample_id"]) for r in rows) + 1
        b = max(int(r["group_index"]) for r in rows) + 1
        cp = np.full((n, b), np.nan)
        fin = np.full(n, np.nan)
        ts = np.zeros(b, dtype=np.int64)
        for r in rows:
            i, g = int(r["sample_id"]), int(r["group_index"])
            cp[i, g] = float(r["metric"])
            fin[i] = float(r["final_metric"])
            ts[g] = int(r["timestep"])
        if np.any(np.isnan(cp)) or np.any(np.isnan(fin)):
            raise TraceError("trace CSV has missing entries")
        return cls(checkpoints=cp, finals=fin, timesteps=ts)


def fit_linear_regression(X: np.ndarray, y: np.ndarray, ridge: float = 1e-8) -> RegressionFit:
    """OLS with intercept via normal equations, lightly ridge-damped.

    The damping (on the Gram matrix diagonal, intercept excluded) keeps
    collinear checkpoint columns solvable without visibly biasing R^2.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise RegressionError("X must be 2-D")
    n, p = X.shape
    if n <= p + 1:
        raise RegressionError(f"underdetermined: N={n} <= p+1={p + 1}")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # tolerance, not equality: a constant y leaves rounding residue ~1e-31
    if ss_tot <= 1e-12 * max(1.0, float(np.sum(y ** 2))):
        raise RegressionError("degenerate target: y has zero variance")
    A = np.hstack([np.ones((n, 1)), X])
    gram = A.T @ A
    gram[1:, 1:] += ridge * np.eye(p)
    beta = np.linalg.solve(gram, A.T @ y)
    ss_res = float(np.sum((y - A @ beta) ** 2))
    return RegressionFit(coefficients=beta, r_squared=1.0 - ss_res / ss_tot)


def stats_profile(trace: MetricTrace, floor: float = DEFAULT_FLOOR,
                  T: int | None = None) -> ContributionProfile:
    """Contribution weights from R^2 increments of nested regressions.

    Starting from the t=T-side checkpoint column, the final metric is
    regressed on a growing set of columns; each group's raw weight is the
    increase in R^2 it brings. Sub-floor weights are raised to ``floor`` and
    the vector renormalized. When ``T`` is given the profile carries the real
    timestep partition; otherwise a synthetic 1..B partition is used.
    """
    B = trace.group_count
    if trace.sample_count < 3 * B:
        raise TraceError(f"need N >= 3B samples, got N={trace.sample_count}, B={B}")
    r2_prev = 0.0
    raw_desc = np.zeros(B)  # ordered t=T-side group first, like trace columns
    for j in range(1, B + 1):
        fit = fit_linear_regression(trace.checkpoints[:, :j], trace.finals)
        inc = fit.r_squared - r2_prev
        if inc < -1e-9:
            raise RegressionError(f"R^2 decreased by {-inc:.3e} when adding group {j - 1}")
        raw_desc[j - 1] = max(inc, 0.0)
        r2_prev = fit.r_squared
    raw_asc = raw_desc[::-1].copy()  # ascending-t group order
    floored = apply_floor(raw_asc, floor)
    bounds = group_partition(T, B) if T is not None else np.arange(1, B + 2)
    return ContributionProfile(group_bounds=bounds, weights=floored, source="statistics")


def apply_floor(weights: np.ndarray, floor: float) -> np.ndarray:
    """Normalize, raise sub-floor entries to the floor, renormalize."""
    w = np.asarray(weights, dtype=np.float64)
    if floor * len(w) > 1.0:
        raise ValueError(f"floor {floor} infeasible for {len(w)} groups")
    total = w.sum()
    w = np.full_like(w, 1.0 / len(w)) if total <= 0 else w / total
    if floor <= 0:
        return w
    # pin sub-floor entries at the floor and rescale the rest so the sum
    # stays 1; repeat since rescaling can push new entries under the floor
    low = w < floor
    for _ in range(len(w)):
        budget = 1.0 - floor * low.sum()
        rest = w[~low].sum()
        scaled = w.copy()
        scaled[low] = floor
        scaled[~low] = w[~low] * (budget / rest)
        new_low = low | (scaled < floor)
        if new_low.sum() == low.sum():
            return scaled
        low = new_low
    return scaled
