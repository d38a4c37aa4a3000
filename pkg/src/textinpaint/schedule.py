"""Noise schedule, closed-form forward diffusion and the reverse step.

Everything here is float64 numpy and free of side effects. Timesteps are
1-based (``t`` in ``[1, T]``); arrays are stored 0-based, so ``beta[t - 1]``
is the noise rate of step ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidScheduleError, ShapeError, TimestepError


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_start: float
    beta_end: float

    def ab(self, t: int) -> float:
        """alpha_bar at 1-based step ``t``; ``t == 0`` gives 1 (clean signal)."""
        if t == 0:
            return 1.0
        self.check_t(t)
        return float(self.alpha_bar[t - 1])

    def check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise TimestepError(f"timestep {t} outside [1, {self.T}]")

    def to_meta(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_meta(cls, meta: dict) -> "NoiseSchedule":
        return build_schedule(int(meta["T"]), float(meta["beta_start"]), float(meta["beta_end"]))


@dataclass(frozen=True)
class DiffusionSample:
    x_t: np.ndarray
    eps: np.ndarray
    t: int


def build_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule with derived alpha and cumulative alpha_bar."""
    if int(T) != T or T < 1:
        raise InvalidScheduleError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start!r}, {beta_end!r}"
        )
    T = int(T)
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    for arr in (beta, alpha, alpha_bar):
        arr.setflags(write=False)
    return NoiseSchedule(T, beta, alpha, alpha_bar, float(beta_start), float(beta_end))


def forward_diffuse(x0, t: int, eps, schedule: NoiseSchedule) -> DiffusionSample:
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise ShapeError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    schedule.check_t(t)
    ab = schedule.ab(t)
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
    return DiffusionSample(x_t=x_t, eps=eps, t=t)


def predict_x0(x_t, eps_pred, t: int, schedule: NoiseSchedule) -> np.ndarray:
    ab = schedule.ab(t)
    return (np.asarray(x_t, np.float64) - np.sqrt(1.0 - ab) * np.asarray(eps_pred, np.float64)) / np.sqrt(ab)


def denoise_step(
    x_t,
    eps_pred,
    t: int,
    schedule: NoiseSchedule,
    noise=None,
    t_prev: int | None = None,
    clip: float | None = None,
) -> np.ndarray:
    """One ancestral DDPM step from ``t`` to ``t_prev`` (default ``t - 1``).

    Uses the posterior mean of q(x_prev | x_t, x0_hat) with variance equal to
    the effective beta between the two steps, so strided sampling works with
    the same formula. ``noise=None`` drops the stochastic term; noise is
    always ignored when stepping to 0. ``clip`` bounds the implied x0.
    """
    if t < 1:
        raise TimestepError(f"cannot step from t={t}")
    schedule.check_t(t)
    if t_prev is None:
        t_prev = t - 1
    if not 0 <= t_prev < t:
        raise TimestepError(f"t_prev={t_prev} must be in [0, {t})")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if x_t.shape != eps_pred.shape:
        raise ShapeError(f"x_t shape {x_t.shape} != eps_pred shape {eps_pred.shape}")

    ab_t = schedule.ab(t)
    ab_prev = schedule.ab(t_prev)
    beta_eff = 1.0 - ab_t / ab_prev
    x0_hat = (x_t - np.sqrt(1.0 - ab_t) * eps_pred) / np.sqrt(ab_t)
    if clip is not None:
        x0_hat = np.clip(x0_hat, -clip, clip)
    coef_x0 = np.sqrt(ab_prev) * beta_eff / (1.0 - ab_t)
    coef_xt = np.sqrt(1.0 - beta_eff) * (1.0 - ab_prev) / (1.0 - ab_t)
    mean = coef_x0 * x0_hat + coef_xt * x_t
    if noise is None or t_prev == 0:
        return mean
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x_t.shape:
        raise ShapeError(f"noise shape {noise.shape} != x_t shape {x_t.shape}")
    return mean + np.sqrt(beta_eff) * noise


def sampling_timesteps(T: int, steps: int) -> list[int]:
    """Descending, de-duplicated strided timesteps from T down to 1."""
    if steps < 1:
        raise InvalidScheduleError(f"sampling steps must be >= 1, got {steps}")
    steps = min(steps, T)
    ts = np.round(np.linspace(T, 1, steps)).astype(int)
    out: list[int] = []
    for t in ts:
        if not out or t < out[-1]:
            out.append(int(t))
    return out
