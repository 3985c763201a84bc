"""Variance-preserving SDE: noise rates, signal level, perturbation kernel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VANISHING_SIGNAL = 1e-12


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class VPSchedule:
    """Linear rate ``beta(t) = beta_min + (beta_max - beta_min) t`` on t in [0, 1].

    ``steps`` is the number of uniform reverse-time steps, ``dt = 1 / steps``.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0
    steps: int = 200

    def __post_init__(self):
        if not 0 < self.beta_min < self.beta_max:
            raise ScheduleError(f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}")
        if self.steps < 1:
            raise ScheduleError("steps must be >= 1")

    @classmethod
    def from_discrete(cls, beta_min: float, beta_max: float, steps: int) -> "VPSchedule":
        """Build from per-step rates, ``beta_cont = steps * beta_disc``."""
        return cls(beta_min * steps, beta_max * steps, steps)

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    def times(self) -> np.ndarray:
        """Reverse-time grid ``t_k = k / T`` for k = T..0."""
        return np.arange(self.steps, -1, -1) / self.steps

    def with_steps(self, steps: int) -> "VPSchedule":
        return VPSchedule(self.beta_min, self.beta_max, steps)

    def to_dict(self) -> dict:
        return {"beta_min": self.beta_min, "beta_max": self.beta_max, "steps": self.steps}


def _check_t(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > 1) or np.any(np.isnan(t_arr)):
        raise ScheduleError(f"t outside [0, 1]: {t}")
    return t_arr


def beta_at(s: VPSchedule, t):
    t = _check_t(t)
    return s.beta_min + (s.beta_max - s.beta_min) * t


def alpha_bar_at(s: VPSchedule, t):
    t = _check_t(t)
    return np.exp(-(s.beta_max - s.beta_min) * t**2 / 2 - s.beta_min * t)


def sigma_at(s: VPSchedule, t):
    """Standard deviation of the perturbation kernel, ``sqrt(1 - alpha_bar)``."""
    # -expm1 keeps precision for small t
    t = _check_t(t)
    return np.sqrt(-np.expm1(-(s.beta_max - s.beta_min) * t**2 / 2 - s.beta_min * t))


def perturb(s: VPSchedule, x0: np.ndarray, t, noise: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample the forward kernel and return ``(xt, grad log p_t(xt | x0))``.

    Works row-wise: ``x0`` and ``noise`` may be (D,) or (B, D); ``t`` a
    scalar or (B,).
    """
    x0 = np.asarray(x0, dtype=float)
    noise = np.asarray(noise, dtype=float)
    if noise.shape != x0.shape:
        raise ScheduleError(f"noise shape {noise.shape} does not match sample shape {x0.shape}")
    t = np.asarray(t, dtype=float)
    sig = sigma_at(s, t)
    if np.any(sig == 0):
        raise ScheduleError("degenerate time: score target undefined at t = 0")
    ab = alpha_bar_at(s, t)
    if x0.ndim == 2 and t.ndim == 1:
        ab, sig = ab[:, None], sig[:, None]
    xt = np.sqrt(ab) * x0 + sig * noise
    return xt, -noise / sig


def tweedie_denoise(s: VPSchedule, xt: np.ndarray, t, score_out: np.ndarray, alpha_bar=None) -> np.ndarray:
    """Posterior mean ``(xt + (1 - ab) * score) / sqrt(ab)``.

    Note the score enters with weight ``1 - alpha_bar``: this is the exact
    inverse of :func:`perturb`, whose score target is ``-noise / sigma``.
    ``alpha_bar`` overrides the schedule value (used by fixtures).
    """
    xt = np.asarray(xt, dtype=float)
    score_out = np.asarray(score_out, dtype=float)
    if score_out.shape != xt.shape:
        raise ScheduleError(f"score shape {score_out.shape} does not match state shape {xt.shape}")
    ab = alpha_bar_at(s, t) if alpha_bar is None else np.asarray(alpha_bar, dtype=float)
    if np.any(ab < VANISHING_SIGNAL):
        raise ScheduleError("vanishing signal: alpha_bar below 1e-12")
    if xt.ndim == 2 and np.ndim(ab) == 1:
        ab = ab[:, None]
    return (xt + (1.0 - ab) * score_out) / np.sqrt(ab)
