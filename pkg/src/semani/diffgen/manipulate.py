"""Pixel-space manipulation: regenerate the masked entity, keep the rest."""

from __future__ import annotations

import numpy as np
import torch

from semani.config import SamplerParams
from semani.diffgen.model import DiffCheckpoint
from semani.diffgen.sampler import composite, ddim_sample
from semani.errors import DomainError, ShapeMismatchError


def manipulate_batch(
    ckpt: DiffCheckpoint,
    images: np.ndarray,
    masks: np.ndarray,
    texts: list[str],
    params: SamplerParams | None = None,
) -> np.ndarray:
    """(B, H, W, 3) edits: generate under (masked image, mask, text), composite."""
    params = params or ckpt.config.sampler
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ShapeMismatchError(f"expected (B, H, W, 3) images, got {images.shape}")
    masks = np.asarray(masks)
    if masks.shape != images.shape[:3]:
        raise ShapeMismatchError(f"masks {masks.shape} vs images {images.shape[:3]}")
    if len(texts) != images.shape[0]:
        raise ShapeMismatchError(f"{len(texts)} texts for {images.shape[0]} images")
    if not (masks > 0).reshape(len(masks), -1).any(axis=1).all():
        raise DomainError("every edit needs a nonempty mask")

    x0 = torch.from_numpy(images).permute(0, 3, 1, 2) * 2.0 - 1.0
    m = torch.from_numpy((masks > 0)).float()[:, None]
    masked_image = x0 * (1.0 - m)
    text_ids = torch.from_numpy(
        np.stack([ckpt.vocabulary.tokenize(t).ids for t in texts])
    )
    empty_ids = ckpt.empty_text_ids(len(texts))
    zeros_img = torch.zeros_like(masked_image)
    zeros_mask = torch.zeros_like(m)

    def eps_cond(x, t):
        return ckpt.denoise(x, t, masked_image, m, text_ids)

    def eps_uncond(x, t):
        return ckpt.denoise(x, t, zeros_img, zeros_mask, empty_ids)

    x = ddim_sample(eps_cond, eps_uncond, ckpt.schedule, tuple(x0.shape), params)
    generated = ((x + 1.0) / 2.0).clamp(0, 1).permute(0, 2, 3, 1).numpy()
    return np.stack(
        [composite(images[i], generated[i], masks[i]) for i in range(len(texts))]
    )


def manipulate(
    ckpt: DiffCheckpoint,
    image: np.ndarray,
    mask: np.ndarray,
    text: str,
    params: SamplerParams | None = None,
) -> np.ndarray:
    """Single-image form of manipulate_batch."""
    out = manipulate_batch(
        ckpt, np.asarray(image)[None], np.asarray(mask)[None], [text], params
    )
    return out[0]
