"""Guided DDIM sampling and pixel compositing."""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from semani.config import SamplerParams
from semani.diffgen.schedule import NoiseSchedule
from semani.errors import ConfigurationError, ShapeMismatchError


def cfg(eps_cond: torch.Tensor, eps_uncond: torch.Tensor, scale: float) -> torch.Tensor:
    """eps_uncond + scale * (eps_cond - eps_uncond); exact at the endpoints."""
    if eps_cond.shape != eps_uncond.shape:
        raise ShapeMismatchError(
            f"guidance branches differ: {tuple(eps_cond.shape)} vs {tuple(eps_uncond.shape)}"
        )
    if scale == 1.0:
        return eps_cond
    if scale == 0.0:
        return eps_uncond
    return eps_uncond + scale * (eps_cond - eps_uncond)


def ddim_timesteps(total: int, steps: int) -> list[int]:
    """`steps` strictly-decreasing timesteps from T down to 1."""
    if not 1 <= steps <= total:
        raise ConfigurationError(f"steps must be in [1, {total}], got {steps}")
    if steps == 1:
        return [total]
    raw = np.linspace(total, 1, steps)
    taus = [int(np.floor(v + 0.5)) for v in raw]
    if any(nxt >= prev for prev, nxt in zip(taus, taus[1:])):
        raise ConfigurationError(f"timestep subsequence not strictly decreasing: {steps} of {total}")
    return taus


def ddim_sample(
    eps_cond: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    eps_uncond: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
    schedule: NoiseSchedule,
    shape: tuple[int, ...],
    params: SamplerParams,
) -> torch.Tensor:
    """Sample x0 in [-1, 1] space from seeded Gaussian noise.

    The denoiser runs twice per step under guidance (conditional and
    unconditional branches) and once per step when scale == 1.
    """
    params.validate(schedule.timesteps)
    generator = torch.Generator().manual_seed(params.seed)
    x = torch.randn(shape, generator=generator)
    taus = ddim_timesteps(schedule.timesteps, params.ddim_steps)
    ab = torch.from_numpy(schedule.alpha_bars).float()

    for i, t in enumerate(taus):
        tt = torch.full((shape[0],), t, dtype=torch.long)
        eps = cfg(eps_cond(x, tt), eps_uncond(x, tt), params.guidance_scale) \
            if params.guidance_scale != 1.0 else eps_cond(x, tt)
        ab_t = ab[t]
        x0 = (x - torch.sqrt(1.0 - ab_t) * eps) / torch.sqrt(ab_t)
        x0 = x0.clamp(-1.0, 1.0)
        t_next = taus[i + 1] if i + 1 < len(taus) else 0
        ab_n = ab[t_next]
        if params.eta > 0.0 and t_next > 0:
            sigma = (
                params.eta
                * torch.sqrt((1.0 - ab_n) / (1.0 - ab_t))
                * torch.sqrt(1.0 - ab_t / ab_n)
            )
            noise = torch.randn(shape, generator=generator)
            x = torch.sqrt(ab_n) * x0 + torch.sqrt(1.0 - ab_n - sigma**2) * eps + sigma * noise
        else:
            x = torch.sqrt(ab_n) * x0 + torch.sqrt(1.0 - ab_n) * eps
    return x


def composite(original: np.ndarray, generated: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Generated pixels inside the mask, original outside, bit-exact."""
    original = np.asarray(original)
    generated = np.asarray(generated)
    if original.shape != generated.shape:
        raise ShapeMismatchError(f"original {original.shape} vs generated {generated.shape}")
    mask = np.asarray(mask)
    if mask.shape != original.shape[:2]:
        raise ShapeMismatchError(f"mask {mask.shape} vs image {original.shape[:2]}")
    return np.where((mask > 0)[..., None], generated, original)
