"""Learned foreground segmenter for textured backgrounds."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from semani.config import SegmenterConfig, config_dict, config_hash
from semani.corpus.batches import SceneSampler
from semani.corpus.manifest import SplitManifest
from semani.errors import ShapeMismatchError, TrainingDiverged
from semani.numerics import flush_subnormals
from semani.storage import load_checkpoint, save_checkpoint


class SegmenterModel(nn.Module):
    """Two-level UNet emitting per-pixel foreground logits."""

    def __init__(self, base: int):
        super().__init__()
        b = base
        self.enc1 = nn.Sequential(nn.Conv2d(3, b, 3, padding=1), nn.SiLU(),
                                  nn.Conv2d(b, b, 3, padding=1), nn.SiLU())
        self.enc2 = nn.Sequential(nn.Conv2d(b, 2 * b, 3, stride=2, padding=1), nn.SiLU(),
                                  nn.Conv2d(2 * b, 2 * b, 3, padding=1), nn.SiLU())
        self.mid = nn.Sequential(nn.Conv2d(2 * b, 2 * b, 3, stride=2, padding=1), nn.SiLU(),
                                 nn.Conv2d(2 * b, 2 * b, 3, padding=1), nn.SiLU())
        self.dec2 = nn.Sequential(nn.Conv2d(4 * b, 2 * b, 3, padding=1), nn.SiLU())
        self.dec1 = nn.Sequential(nn.Conv2d(3 * b, b, 3, padding=1), nn.SiLU())
        self.out = nn.Conv2d(b, 1, 1)

    def forward(self, x):
        h1 = self.enc1(x)
        h2 = self.enc2(h1)
        h3 = self.mid(h2)
        u2 = self.dec2(torch.cat([F.interpolate(h3, scale_factor=2, mode="nearest"), h2], 1))
        u1 = self.dec1(torch.cat([F.interpolate(u2, scale_factor=2, mode="nearest"), h1], 1))
        return self.out(u1)[:, 0]


class SegmenterCheckpoint:
    def __init__(self, model: SegmenterModel, cfg_hash: str):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.config_hash = cfg_hash

    def foreground(self, image: np.ndarray) -> np.ndarray:
        """(H, W) uint8 foreground mask at probability 0.5."""
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatchError(f"expected (H, W, 3) image, got {image.shape}")
        t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        with torch.no_grad():
            logits = self.model(t.permute(2, 0, 1)[None])[0]
        return (logits > 0.0).numpy().astype(np.uint8)

    def save(self, path, config: SegmenterConfig) -> None:
        save_checkpoint(
            path, kind="segmenter",
            config_dict=config_dict(config), config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
        )

    @classmethod
    def load(cls, path) -> "SegmenterCheckpoint":
        payload = load_checkpoint(path, kind="segmenter")
        cfg = SegmenterConfig(**payload["config"])
        model = SegmenterModel(cfg.base_channels)
        model.load_state_dict(payload["state"]["model"])
        return cls(model, payload["config_hash"])


def train_segmenter(
    manifest: SplitManifest,
    config: SegmenterConfig,
    out_path,
    log_every: int = 200,
) -> SegmenterCheckpoint:
    flush_subnormals()
    torch.manual_seed(config.seed)
    model = SegmenterModel(config.base_channels)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    sampler = SceneSampler(manifest, "train", seed=config.seed)

    model.train()
    for step in range(1, config.steps + 1):
        scenes = sampler.batch(config.batch_size)
        images = torch.from_numpy(np.stack([s.image for s in scenes])).permute(0, 3, 1, 2)
        target = torch.from_numpy(
            np.stack([np.any([m > 0 for _, m in s.entities], axis=0) for s in scenes])
        ).float()
        logits = model(images)
        loss = F.binary_cross_entropy_with_logits(logits, target)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"segmenter step {step}: loss={loss.item()}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"[segmenter] step {step}/{config.steps} loss={loss.item():.4f}", flush=True)

    ckpt = SegmenterCheckpoint(model, config_hash(config))
    ckpt.save(out_path, config)
    return ckpt
