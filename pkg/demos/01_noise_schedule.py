"""Walk through the noise-schedule algebra that everything else builds on.

A linear-beta schedule defines how much Gaussian noise lives at each
timestep. The same three quantities (x_t, x0, eps) are interchangeable
given any two, and a "corrected" noise target lets a different clean image
stand in for the original without re-noising.
"""

import numpy as np

from percdiff import (corrected_epsilon, ddim_step, forward_diffuse,
                      make_schedule, predict_eps, predict_x0)

schedule = make_schedule(1000)
print(f"T = {schedule.T}, abar_1 = {schedule.alpha_bars[1]:.6f}, "
      f"abar_T = {schedule.alpha_bars[-1]:.6g}")

rng = np.random.default_rng(0)
x0 = rng.uniform(-1, 1, (3, 16, 16))
eps = rng.standard_normal((3, 16, 16))

# noising then un-noising is exact
for t in (1, 250, 500, 1000):
    x_t = forward_diffuse(x0, t, eps, schedule)
    x0_back = predict_x0(x_t, eps, t, schedule)
    eps_back = predict_eps(x_t, x0, t, schedule)
    print(f"t={t:4d}: |x0 - x0_back| = {np.abs(x0 - x0_back).max():.2e}, "
          f"|eps - eps_back| = {np.abs(eps - eps_back).max():.2e}")

# an altered clean image can be noised as usual, then re-attributed to the
# original via a corrected noise target: diffuse(x0_alt, eps) is exactly
# sqrt(abar) x0 + sqrt(1-abar) eps'
x0_alt = np.clip(x0 + rng.normal(0, 0.1, x0.shape), -1, 1)
t = 700
eps_prime = corrected_epsilon(x0, x0_alt, eps, t, schedule)
x_t_alt = forward_diffuse(x0_alt, t, eps, schedule)
x0_implied = predict_x0(x_t_alt, eps_prime, t, schedule)
print(f"\ncorrected-noise consistency at t={t}: "
      f"|x0 - implied| = {np.abs(x0 - x0_implied).max():.2e}")

# a DDIM step with the true eps moves exactly along the noising path
x_500 = forward_diffuse(x0, 500, eps, schedule)
x_400 = ddim_step(x_500, eps, "eps", 500, 400, schedule)
print(f"DDIM step with oracle noise: |x_400 - expected| = "
      f"{np.abs(x_400 - forward_diffuse(x0, 400, eps, schedule)).max():.2e}")
