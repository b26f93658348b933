"""Noise-prediction training with joint condition dropout."""

from __future__ import annotations

import numpy as np
import torch

from semani.config import DiffConfig, config_hash
from semani.corpus.batches import SceneSampler
from semani.corpus.manifest import SplitManifest
from semani.diffgen.model import DenoiserUNet, DiffCheckpoint
from semani.diffgen.schedule import make_schedule
from semani.errors import TrainingDiverged
from semani.numerics import flush_subnormals


def train_diffgen(
    manifest: SplitManifest,
    config: DiffConfig,
    out_path,
    log_every: int = 200,
) -> DiffCheckpoint:
    vocab = manifest.vocabulary
    flush_subnormals()
    torch.manual_seed(config.seed)
    model = DenoiserUNet(config, vocab.size, vocab.l_max)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    schedule = make_schedule(config.timesteps, config.beta_start, config.beta_end)
    ab = torch.from_numpy(schedule.alpha_bars).float()
    sampler = SceneSampler(manifest, "train", seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)
    empty_ids = vocab.tokenize("").ids

    trace: list[float] = []
    model.train()
    for step in range(1, config.steps + 1):
        scenes = sampler.batch(config.batch_size)
        b = len(scenes)
        images, masks, texts = [], [], []
        for s in scenes:
            _, mask = s.entities[rng.integers(len(s.entities))]
            images.append(s.image)
            masks.append(mask > 0)
            texts.append(vocab.tokenize(s.caption).ids)
        x0 = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2) * 2.0 - 1.0
        mask = torch.from_numpy(np.stack(masks)).float()[:, None]
        text_ids = torch.from_numpy(np.stack(texts))

        # joint dropout: text AND image conditioning fall away together
        drop = torch.from_numpy(rng.random(b) < config.condition_dropout)
        masked_image = x0 * (1.0 - mask)
        masked_image[drop] = 0.0
        mask = torch.where(drop[:, None, None, None], torch.zeros_like(mask), mask)
        text_ids[drop] = torch.from_numpy(empty_ids)

        t = torch.from_numpy(rng.integers(1, config.timesteps + 1, size=b))
        eps = torch.randn_like(x0)
        ab_t = ab[t][:, None, None, None]
        x_t = torch.sqrt(ab_t) * x0 + torch.sqrt(1.0 - ab_t) * eps

        eps_hat = model(x_t, t, masked_image, mask, text_ids)
        loss = (eps_hat - eps).square().mean()
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"diffgen step {step}: loss={loss.item()}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        trace.append(loss.item())
        if log_every and step % log_every == 0:
            print(f"[diffgen] step {step}/{config.steps} loss={loss.item():.4f}", flush=True)

    ckpt = DiffCheckpoint(model, vocab, config_hash(config))
    ckpt.save(out_path, extra={"loss_trace": trace, "manifest_hash": manifest.config_hash})
    return ckpt
