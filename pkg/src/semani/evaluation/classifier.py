"""Attribute classifier over masked regions.

Predicts the joint (shape, color) class of the entity under a mask; the
mask rides along as a fourth input channel. Stands in for the large
pretrained classifier when computing distribution metrics.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from semani.config import ClassifierConfig, config_dict, config_hash
from semani.corpus.batches import SceneSampler
from semani.corpus.manifest import SplitManifest
from semani.corpus.shapes import COLOR_NAMES, SHAPES
from semani.errors import ShapeMismatchError, TrainingDiverged
from semani.numerics import flush_subnormals
from semani.storage import load_checkpoint, save_checkpoint

N_CLASSES = len(SHAPES) * len(COLOR_NAMES)


def class_index(shape: str, color: str) -> int:
    return SHAPES.index(shape) * len(COLOR_NAMES) + COLOR_NAMES.index(color)


def class_label(index: int) -> tuple[str, str]:
    return SHAPES[index // len(COLOR_NAMES)], COLOR_NAMES[index % len(COLOR_NAMES)]


class ClassifierModel(nn.Module):
    def __init__(self, base: int):
        super().__init__()
        b = base
        self.net = nn.Sequential(
            nn.Conv2d(4, b, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(b, 2 * b, 3, stride=2, padding=1), nn.SiLU(),
            nn.Conv2d(2 * b, 2 * b, 3, padding=1), nn.SiLU(),
            nn.Conv2d(2 * b, 4 * b, 3, stride=2, padding=1), nn.SiLU(),
        )
        self.head = nn.Linear(4 * b, N_CLASSES)

    def forward(self, x):
        h = self.net(x)
        return self.head(h.mean(dim=(2, 3)))


class ClassifierCheckpoint:
    def __init__(self, model: ClassifierModel, cfg_hash: str):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.config_hash = cfg_hash

    def predict_proba(self, images: np.ndarray, masks: np.ndarray | None = None) -> np.ndarray:
        """(N, n_classes) posteriors; masks default to all-ones (whole image)."""
        images = np.asarray(images, dtype=np.float32)
        if images.ndim != 4 or images.shape[3] != 3:
            raise ShapeMismatchError(f"expected (N, H, W, 3) images, got {images.shape}")
        if masks is None:
            masks = np.ones(images.shape[:3], dtype=np.float32)
        masks = np.asarray(masks, dtype=np.float32)
        if masks.shape != images.shape[:3]:
            raise ShapeMismatchError(f"masks {masks.shape} vs images {images.shape[:3]}")
        x = torch.from_numpy(
            np.concatenate([images, masks[..., None]], axis=3)
        ).permute(0, 3, 1, 2)
        probs = []
        with torch.no_grad():
            for i in range(0, len(x), 64):
                probs.append(torch.softmax(self.model(x[i : i + 64]), dim=1).numpy())
        return np.concatenate(probs)

    def save(self, path, config: ClassifierConfig) -> None:
        save_checkpoint(
            path, kind="classifier",
            config_dict=config_dict(config), config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
        )

    @classmethod
    def load(cls, path) -> "ClassifierCheckpoint":
        payload = load_checkpoint(path, kind="classifier")
        cfg = ClassifierConfig(**payload["config"])
        model = ClassifierModel(cfg.base_channels)
        model.load_state_dict(payload["state"]["model"])
        return cls(model, payload["config_hash"])


def train_classifier(
    manifest: SplitManifest,
    config: ClassifierConfig,
    out_path,
    log_every: int = 200,
) -> ClassifierCheckpoint:
    flush_subnormals()
    torch.manual_seed(config.seed)
    model = ClassifierModel(config.base_channels)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    sampler = SceneSampler(manifest, "train", seed=config.seed)
    rng = np.random.default_rng(config.seed + 1)

    model.train()
    for step in range(1, config.steps + 1):
        scenes = sampler.batch(config.batch_size)
        xs, ys = [], []
        for s in scenes:
            spec, mask = s.entities[rng.integers(len(s.entities))]
            # whole-image samples keep the classifier usable without a mask
            use_full = len(s.entities) == 1 and rng.random() < 0.25
            m = np.ones_like(mask) if use_full else mask
            xs.append(np.concatenate([s.image, (m > 0).astype(np.float32)[..., None]], axis=2))
            ys.append(class_index(spec.shape, spec.color))
        x = torch.from_numpy(np.stack(xs)).permute(0, 3, 1, 2)
        y = torch.tensor(ys)
        loss = F.cross_entropy(model(x), y)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"classifier step {step}: loss={loss.item()}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        if log_every and step % log_every == 0:
            print(f"[classifier] step {step}/{config.steps} loss={loss.item():.4f}", flush=True)

    ckpt = ClassifierCheckpoint(model, config_hash(config))
    ckpt.save(out_path, config)
    return ckpt
