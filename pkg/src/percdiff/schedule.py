"""Closed-form DDPM/DDIM scheduler algebra.

Everything here is pure array arithmetic over an immutable noise schedule:
the forward process x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps, its inverse
(x0-prediction from predicted noise), the corrected noise target used when
the clean target has been corrupted by augmentation, and the deterministic
(eta = 0) DDIM update.

Indexing convention: t = 0 is clean data, t = T is pure noise. ``alpha_bars``
has T + 1 entries with alpha_bars[0] = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    """Invalid schedule configuration or timestep usage."""


@dataclass(frozen=True)
class NoiseSchedule:
    """Beta/alpha/alpha-bar tables for a T-step diffusion chain."""

    betas: np.ndarray            # shape (T,), betas[i] is beta_{i+1}
    alphas: np.ndarray           # shape (T,)
    alpha_bars: np.ndarray       # shape (T+1,), alpha_bars[0] = 1

    def __post_init__(self):
        for name in ("betas", "alphas", "alpha_bars"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
            getattr(self, name).setflags(write=False)

    @property
    def T(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal retention at timestep t (t in 0..T)."""
        if not 0 <= t <= self.T:
            raise IndexError(f"timestep {t} out of range 0..{self.T}")
        return float(self.alpha_bars[t])

    def check_timestep(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise IndexError(f"timestep {t} out of range 1..{self.T}")


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule from beta_min to beta_max across t = 1..T."""
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ScheduleError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")
    if T == 1:
        betas = np.array([beta_min], dtype=np.float64)
    else:
        betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def forward_diffuse(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps."""
    schedule.check_timestep(t)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def predict_x0(x_t: np.ndarray, model_out_eps: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Recover the clean-data estimate from x_t and a noise prediction."""
    schedule.check_timestep(t)
    ab = schedule.alpha_bar(t)
    return x_t / np.sqrt(ab) - (np.sqrt(1.0 - ab) / np.sqrt(ab)) * model_out_eps


def predict_eps(x_t: np.ndarray, x0_hat: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Inverse of :func:`predict_x0`: the noise consistent with (x_t, x0_hat)."""
    schedule.check_timestep(t)
    ab = schedule.alpha_bar(t)
    return (x_t - np.sqrt(ab) * x0_hat) / np.sqrt(1.0 - ab)


def corrected_epsilon(x0: np.ndarray, x0_aug: np.ndarray, eps: np.ndarray, t: int,
                      schedule: NoiseSchedule) -> np.ndarray:
    """Noise target consistent with diffusing the augmented clean target.

    eps' = eps + sqrt(abar_t) / sqrt(1 - abar_t) * (x0_aug - x0), so that
    forward_diffuse(x0_aug, t, eps) == sqrt(abar_t) x0 + sqrt(1-abar_t) eps'.
    """
    schedule.check_timestep(t)
    if not (x0.shape == x0_aug.shape == eps.shape):
        raise ValueError("shape mismatch between x0, x0_aug, eps")
    ab = schedule.alpha_bar(t)
    if 1.0 - ab == 0.0:
        raise ScheduleError("corrected_epsilon undefined at zero noise (alpha_bar = 1)")
    return eps + (np.sqrt(ab) / np.sqrt(1.0 - ab)) * (x0_aug - x0)


def ddim_step(x_t: np.ndarray, model_out: np.ndarray, target_kind: str, t: int, t_prev: int,
              schedule: NoiseSchedule, clip: bool = False) -> np.ndarray:
    """One deterministic DDIM update from t to t_prev (t_prev < t).

    ``target_kind`` selects how ``model_out`` is interpreted: "eps" (or the
    corrected-noise variant "eps_corrected", identical at sampling time) or
    "x0". Returns sqrt(abar_{t_prev}) x0_hat + sqrt(1-abar_{t_prev}) eps_hat;
    at t_prev = 0 this is x0_hat.

    With ``clip`` the clean-data estimate is clamped to [-1, 1] and the noise
    estimate re-derived from the clamped value before stepping. Free-running
    trajectories need this: an imperfect model underestimates the noise, and
    the uncancelled part is re-amplified every step until the state diverges.
    Clipping is off by default so the unclipped update keeps its exact
    round-trip algebra.
    """
    schedule.check_timestep(t)
    if not 0 <= t_prev < t:
        raise ScheduleError(f"need 0 <= t_prev < t, got t_prev={t_prev}, t={t}")
    if target_kind in ("eps", "eps_corrected"):
        x0_hat = predict_x0(x_t, model_out, t, schedule)
        eps_hat = model_out
    elif target_kind == "x0":
        x0_hat = model_out
        eps_hat = predict_eps(x_t, model_out, t, schedule)
    else:
        raise ValueError(f"unknown target_kind {target_kind!r}")
    if clip:
        x0_hat = np.clip(x0_hat, -1.0, 1.0)
        eps_hat = predict_eps(x_t, x0_hat, t, schedule)
    ab_prev = schedule.alpha_bar(t_prev)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * eps_hat


def snapshot_x0(x_t: np.ndarray, model_out: np.ndarray, target_kind: str, t: int,
                schedule: NoiseSchedule) -> np.ndarray:
    """Clean-data estimate at timestep t for either prediction target."""
    if target_kind in ("eps", "eps_corrected"):
        return predict_x0(x_t, model_out, t, schedule)
    if target_kind == "x0":
        return model_out
    raise ValueError(f"unknown target_kind {target_kind!r}")
