"""How a contribution profile changes the training-time timestep law.

Three policies: uniform (ignore the profile), loss scaling (uniform draws,
reweighted loss), and probability scaling (draw timesteps in proportion to
the profile). Loss scaling keeps the expected weight at exactly 1.
"""

import numpy as np

from percdiff import (loss_weight, make_schedule, make_strategy, sample_timestep,
                      schedule_profile)

T = 1000
profile = schedule_profile(make_schedule(T), 10)
rng = np.random.default_rng(0)

print("group draw frequencies over 100k samples:")
header = "  ".join(f"g{b}" for b in range(10))
print(f"{'strategy':<14} {header}")
for kind in ("uniform", "loss_scaling", "prob_scaling"):
    s = make_strategy(kind, T, profile)
    draws = np.array([sample_timestep(s, rng) for _ in range(100_000)])
    freq = np.histogram(draws, bins=10, range=(0.5, T + 0.5))[0] / len(draws)
    print(f"{kind:<14} " + "  ".join(f"{f:.2f}" for f in freq))

print("\nloss weights by group (loss_scaling):")
s = make_strategy("loss_scaling", T, profile)
for b in range(10):
    lo, hi = profile.group_range(b)
    print(f"  t {lo:4d}-{hi:4d}: weight {loss_weight(s, lo):7.4f}")

sizes = np.diff(profile.group_bounds)
mean_w = sum(loss_weight(s, int(profile.group_bounds[b])) * sizes[b]
             for b in range(10)) / T
print(f"\nexpected weight under uniform draws: {mean_w:.12f} (exactly 1)")
