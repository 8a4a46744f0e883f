"""Forward and reverse diffusion math, independent of any network.

The chain is variance-preserving with a linear beta ramp. The model side of
the package predicts the clean latent z0 directly (never the added noise),
so the reverse step here consumes a z0 estimate and forms the closed-form
posterior over the previous timestep.

Timesteps are 1-indexed; index 0 is the defined boundary state where the
cumulative signal coefficient is exactly 1. Arrays are stored with that
sentinel at position 0, so schedule.alpha_bar[t] reads naturally for t in
0..T. At the final reverse step the posterior collapses: its variance is
exactly 0 and its mean is exactly the z0 estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError, ValidationError

ArrayLike = "np.typing.ArrayLike"


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta schedule with cumulative products precomputed in float64."""

    timesteps: int
    beta_min: float
    beta_max: float
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray

    def check_timestep(self, t: int) -> None:
        if not isinstance(t, (int, np.integer)):
            raise ValidationError(f"timestep must be an integer, got {type(t).__name__}")
        if not 1 <= t <= self.timesteps:
            raise ValidationError(f"timestep {t} outside [1, {self.timesteps}]")

    def descriptor(self) -> dict:
        """Serializable identity of this schedule plus a terminal check value."""
        return {
            "timesteps": self.timesteps,
            "beta_min": self.beta_min,
            "beta_max": self.beta_max,
            "alpha_bar_final": float(self.alpha_bar[self.timesteps]),
        }


def make_schedule(timesteps: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Build the schedule: beta ramps linearly from beta_min to beta_max."""
    if timesteps < 1:
        raise ValidationError(f"timesteps must be >= 1, got {timesteps}")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ValidationError(f"need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]")

    beta = np.zeros(timesteps + 1, dtype=np.float64)
    beta[1:] = np.linspace(beta_min, beta_max, timesteps, dtype=np.float64)
    alpha = np.ones(timesteps + 1, dtype=np.float64)
    alpha[1:] = 1.0 - beta[1:]
    alpha_bar = np.ones(timesteps + 1, dtype=np.float64)
    alpha_bar[1:] = np.cumprod(alpha[1:])
    return NoiseSchedule(
        timesteps=timesteps,
        beta_min=float(beta_min),
        beta_max=float(beta_max),
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
    )


def schedule_from_descriptor(desc: dict) -> NoiseSchedule:
    """Rebuild a schedule from its descriptor, verifying the terminal value."""
    sched = make_schedule(int(desc["timesteps"]), float(desc["beta_min"]), float(desc["beta_max"]))
    stored = float(desc["alpha_bar_final"])
    recomputed = float(sched.alpha_bar[sched.timesteps])
    if abs(stored - recomputed) > 1e-9:
        raise StateError(
            f"schedule mismatch: stored terminal value {stored} vs recomputed {recomputed}"
        )
    return sched


def forward_noise(z0: ArrayLike, t: int, schedule: NoiseSchedule, eps: ArrayLike) -> np.ndarray:
    """Jump the clean latent straight to timestep t with the given noise draw."""
    schedule.check_timestep(t)
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z0.shape != eps.shape:
        raise ValidationError(f"z0 shape {z0.shape} and eps shape {eps.shape} differ")
    ab = schedule.alpha_bar[t]
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def posterior_coefficients(
    schedule: NoiseSchedule, t: int, t_prev: int | None = None
) -> tuple[float, float, float]:
    """Scalar weights (on z0_hat, on z_t) and variance of the reverse posterior.

    ``t_prev`` defaults to t - 1 (the single-step chain); passing an earlier
    retained timestep gives the strided form, where the per-step signal
    coefficient generalizes to the product over the skipped steps.
    """
    schedule.check_timestep(t)
    if t_prev is None:
        t_prev = t - 1
    if not isinstance(t_prev, (int, np.integer)) or not 0 <= t_prev < t:
        raise ValidationError(f"t_prev must be an integer in [0, {t - 1}], got {t_prev}")

    ab_t = schedule.alpha_bar[t]
    ab_prev = schedule.alpha_bar[t_prev]
    step_alpha = ab_t / ab_prev
    coef_z0 = np.sqrt(ab_prev) * (1.0 - step_alpha) / (1.0 - ab_t)
    coef_zt = np.sqrt(step_alpha) * (1.0 - ab_prev) / (1.0 - ab_t)
    variance = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - step_alpha)
    return float(coef_z0), float(coef_zt), float(variance)


def posterior_params(
    z_t: ArrayLike,
    z0_hat: ArrayLike,
    t: int,
    schedule: NoiseSchedule,
    t_prev: int | None = None,
) -> tuple[np.ndarray, float]:
    """Mean and (scalar) variance of the reverse posterior at timestep t."""
    z_t = np.asarray(z_t, dtype=np.float64)
    z0_hat = np.asarray(z0_hat, dtype=np.float64)
    if z_t.shape != z0_hat.shape:
        raise ValidationError(f"z_t shape {z_t.shape} and z0_hat shape {z0_hat.shape} differ")
    coef_z0, coef_zt, variance = posterior_coefficients(schedule, t, t_prev)
    return coef_z0 * z0_hat + coef_zt * z_t, variance


def sample_step(
    z_t: ArrayLike,
    z0_hat: ArrayLike,
    t: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    t_prev: int | None = None,
    deterministic: bool = False,
) -> np.ndarray:
    """One reverse transition. The final step (t_prev == 0) is always exact."""
    mean, variance = posterior_params(z_t, z0_hat, t, schedule, t_prev)
    if deterministic or variance == 0.0:
        return mean
    return mean + np.sqrt(variance) * rng.standard_normal(size=mean.shape)


def sampling_timesteps(schedule: NoiseSchedule, stride: int = 1) -> list[int]:
    """Descending retained timesteps for strided sampling, starting at T.

    Consecutive entries are the (t, t_prev) arguments of each reverse step;
    the step from the last entry goes to the boundary state 0.
    """
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    return list(range(schedule.timesteps, 0, -stride))
