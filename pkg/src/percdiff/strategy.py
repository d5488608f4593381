"""Training-time timestep policies built on a contribution profile.

Three kinds:

* ``uniform``       - t uniform over 1..T, loss weight 1.
* ``loss_scaling``  - t uniform, loss weight B * c_b^2 for t's group (mean 1
                      under uniform t, so the gross loss scale is unchanged).
* ``prob_scaling``  - group drawn from Multinomial(c^2), t uniform within the
                      group, loss weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contribution import ContributionProfile, uniform_profile

KINDS = ("uniform", "loss_scaling", "prob_scaling")


@dataclass(frozen=True)
class TimestepStrategy:
    kind: str
    profile: ContributionProfile

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    @property
    def T(self) -> int:
        return int(self.profile.group_bounds[-1] - 1)


def make_strategy(kind: str, T: int, profile: ContributionProfile | None = None,
                  B: int = 10) -> TimestepStrategy:
    if kind == "uniform" or profile is None:
        profile = uniform_profile(T, B)
    if int(profile.group_bounds[-1] - 1) != T:
        raise ValueError("profile partition does not cover 1..T")
    return TimestepStrategy(kind=kind, profile=profile)


def sample_timestep(strategy: TimestepStrategy, rng: np.random.Generator) -> int:
    T = strategy.T
    if strategy.kind in ("uniform", "loss_scaling"):
        return int(rng.integers(1, T + 1))
    b = int(rng.choice(strategy.profile.group_count, p=strategy.profile.weights))
    lo, hi = strategy.profile.group_range(b)
    return int(rng.integers(lo, hi + 1))


def loss_weight(strategy: TimestepStrategy, t: int) -> float:
    if not 1 <= t <= strategy.T:
        raise IndexError(f"timestep {t} out of range 1..{strategy.T}")
    if strategy.kind != "loss_scaling":
        return 1.0
    prof = strategy.profile
    b = prof.group_of(t)
    # mean-one normalization assumes near-even groups; correct per-group for
    # the ragged last group by weighting with the exact group sizes
    sizes = np.diff(prof.group_bounds).astype(np.float64)
    return float(prof.weights[b] * strategy.T / sizes[b] /
                 np.sum(prof.weights))
