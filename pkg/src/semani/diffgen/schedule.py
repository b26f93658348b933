"""Linear-beta noise schedule and its closed-form marginals.

Arrays are float64 and indexed by timestep t in [1, T]; index 0 holds the
identity boundary (alpha_bar[0] = 1) so DDIM can step to t=0 uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from semani.errors import ConfigurationError, ShapeMismatchError


@dataclass(frozen=True)
class NoiseSchedule:
    timesteps: int
    betas: np.ndarray  # (T+1,), betas[0] unused
    alphas: np.ndarray
    alpha_bars: np.ndarray  # alpha_bars[0] = 1

    def q_sample(self, x0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
        """Closed-form forward marginal: sqrt(ab_t) x0 + sqrt(1-ab_t) eps."""
        self._check_t(t)
        x0, eps = np.asarray(x0), np.asarray(eps)
        if x0.shape != eps.shape:
            raise ShapeMismatchError(f"x0 {x0.shape} vs eps {eps.shape}")
        ab = self.alpha_bars[t]
        return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    def forward_step(self, x_prev: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
        """One forward step: sqrt(a_t) x_{t-1} + sqrt(1-a_t) eps."""
        self._check_t(t)
        a = self.alphas[t]
        return np.sqrt(a) * np.asarray(x_prev) + np.sqrt(1.0 - a) * np.asarray(eps)

    def invert_q_sample(self, x_t: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
        """Recover x0 exactly from x_t and the noise that produced it."""
        self._check_t(t)
        ab = self.alpha_bars[t]
        return (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps)) / np.sqrt(ab)

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.timesteps:
            raise ConfigurationError(f"t must be in [1, {self.timesteps}], got {t}")


def make_schedule(timesteps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    if timesteps < 1:
        raise ConfigurationError(f"timesteps must be >= 1, got {timesteps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigurationError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.zeros(timesteps + 1)
    betas[1:] = np.linspace(beta_start, beta_end, timesteps)
    alphas = 1.0 - betas
    alpha_bars = np.ones(timesteps + 1)
    alpha_bars[1:] = np.cumprod(alphas[1:])
    return NoiseSchedule(timesteps, betas, alphas, alpha_bars)
