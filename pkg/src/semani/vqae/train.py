"""Autoencoder training with dead-code reseeding."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from semani.config import VqaeConfig, config_dict, config_hash
from semani.corpus.batches import SceneSampler, images_array
from semani.corpus.manifest import SplitManifest
from semani.corpus.scenes import to_grayscale
from semani.errors import TrainingDiverged
from semani.numerics import flush_subnormals
from semani.storage import save_checkpoint
from semani.vqae.model import VqaeCheckpoint, VqaeModel

GRAY_FRACTION = 0.25  # encoder must also serve grayscale vision guidance


def train_vqae(
    manifest: SplitManifest,
    config: VqaeConfig,
    out_path,
    log_every: int = 200,
) -> VqaeCheckpoint:
    flush_subnormals()
    torch.manual_seed(config.seed)
    model = VqaeModel(config)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    sampler = SceneSampler(manifest, "train", seed=config.seed)
    gray_rng = np.random.default_rng(config.seed + 1)

    trace: list[float] = []
    usage = torch.zeros(config.codebook_size, dtype=torch.long)
    model.train()
    for step in range(1, config.steps + 1):
        scenes = sampler.batch(config.batch_size)
        batch = images_array(scenes)
        gray = gray_rng.random(len(scenes)) < GRAY_FRACTION
        for i in np.flatnonzero(gray):
            batch[i] = to_grayscale(batch[i])
        images = torch.from_numpy(batch).permute(0, 3, 1, 2)

        recon, vq_loss, idx = model(images)
        recon_loss = (recon - images).square().mean()
        loss = recon_loss + vq_loss
        if not torch.isfinite(loss):
            raise TrainingDiverged(
                f"vqae step {step}: recon={recon_loss.item()} vq={vq_loss.item()}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

        usage += torch.bincount(idx.reshape(-1), minlength=config.codebook_size)
        trace.append(loss.item())
        if step % config.reseed_interval == 0:
            _reseed_dead_codes(model, usage, images)
            usage.zero_()
        if log_every and step % log_every == 0:
            used = int((usage > 0).sum())
            print(
                f"[vqae] step {step}/{config.steps} loss={loss.item():.4f} "
                f"recon={recon_loss.item():.4f} codes_used~{used}",
                flush=True,
            )

    ckpt = VqaeCheckpoint(model, config_hash(config))
    out_path = Path(out_path)
    save_checkpoint(
        out_path,
        kind="vqae",
        config_dict=config_dict(config),
        config_hash=ckpt.config_hash,
        state={"model": model.state_dict()},
        extra={"loss_trace": trace, "manifest_hash": manifest.config_hash},
    )
    return ckpt


def _reseed_dead_codes(model: VqaeModel, usage: torch.Tensor, images: torch.Tensor) -> None:
    """Replace codes unused in the last window with random encoder outputs."""
    dead = torch.nonzero(usage == 0).reshape(-1)
    if dead.numel() == 0:
        return
    with torch.no_grad():
        latents = model.encoder(images).permute(0, 2, 3, 1).reshape(-1, model.config.latent_dim)
        pick = torch.randint(0, latents.shape[0], (dead.numel(),))
        model.quantizer.codebook.data[dead] = latents[pick]
