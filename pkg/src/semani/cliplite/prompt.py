"""Learned fill for masked-out regions ("mask prompt").

Global scoring embeds X*M + P*(1-M): the entity stays, everything else is
replaced by a learned canvas P tuned so the composite's embedding matches
the entity's own description. The contrastive backbone stays frozen.
"""

from __future__ import annotations

import numpy as np
import torch

import torch.nn.functional as F

from semani.cliplite.model import ClipCheckpoint, contrastive_loss
from semani.cliplite.negatives import fresh_phrase_negatives
from semani.config import MaskPromptConfig, config_dict, config_hash
from semani.corpus.batches import SceneSampler
from semani.corpus.manifest import SplitManifest
from semani.errors import ShapeMismatchError, TrainingDiverged
from semani.numerics import flush_subnormals
from semani.storage import load_checkpoint, save_checkpoint


class MaskPrompt:
    def __init__(self, canvas: np.ndarray, backbone_hash: str):
        self.canvas = np.asarray(canvas, dtype=np.float32)  # (H, W, 3)
        self.backbone_hash = backbone_hash

    def apply(self, image: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """X*M + P*(1-M) with a (H, W) binary pixel mask."""
        image = np.asarray(image, dtype=np.float32)
        if image.shape != self.canvas.shape:
            raise ShapeMismatchError(
                f"image {image.shape} vs prompt canvas {self.canvas.shape}"
            )
        if mask.shape != image.shape[:2]:
            raise ShapeMismatchError(f"mask {mask.shape} vs image {image.shape[:2]}")
        m = (np.asarray(mask) > 0).astype(np.float32)[..., None]
        return image * m + self.canvas * (1.0 - m)

    def save(self, path, config: MaskPromptConfig) -> None:
        save_checkpoint(
            path,
            kind="mask_prompt",
            config_dict=config_dict(config),
            config_hash=config_hash(config),
            state={"canvas": torch.from_numpy(self.canvas)},
            extra={"backbone_hash": self.backbone_hash},
        )

    @classmethod
    def load(cls, path) -> "MaskPrompt":
        payload = load_checkpoint(path, kind="mask_prompt")
        return cls(payload["state"]["canvas"].numpy(), payload["extra"]["backbone_hash"])


def tune_mask_prompt(
    manifest: SplitManifest,
    clip: ClipCheckpoint,
    config: MaskPromptConfig,
    out_path,
    log_every: int = 100,
) -> MaskPrompt:
    flush_subnormals()
    torch.manual_seed(config.seed)
    vocab = clip.vocabulary
    res = manifest.config.resolution
    canvas = torch.full((1, 3, res, res), 0.5, requires_grad=True)
    opt = torch.optim.Adam([canvas], lr=config.lr)
    sampler = SceneSampler(manifest, "train", seed=config.seed)
    pick_rng = np.random.default_rng(config.seed + 1)

    model = clip.model  # frozen by the checkpoint wrapper
    for step in range(1, config.steps + 1):
        scenes = sampler.batch(config.batch_size)
        images, masks, specs, phrases = [], [], [], []
        for s in scenes:
            spec, mask = s.entities[pick_rng.integers(len(s.entities))]
            if spec.caption_phrase() in phrases:
                continue
            images.append(s.image)
            masks.append(mask > 0)
            specs.append(spec)
            phrases.append(spec.caption_phrase())
        x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2)
        m = torch.from_numpy(np.stack(masks)).float()[:, None]
        text_ids = torch.from_numpy(np.stack([vocab.tokenize(p).ids for p in phrases]))

        composite = x * m + canvas * (1.0 - m)
        img_emb = model.embed_images(composite)
        scale = model.log_scale.exp()
        with torch.no_grad():
            txt_emb = model.embed_texts(text_ids)
        if config.hard_negatives:
            # the canvas must keep one-attribute edits of the kept entity apart
            taken = set(phrases)
            caps = [
                p
                for spec in specs
                for p in fresh_phrase_negatives(spec, config.hard_negatives, pick_rng, taken)
            ]
            neg_ids = torch.from_numpy(np.stack([vocab.tokenize(p).ids for p in caps]))
            with torch.no_grad():
                cols = torch.cat([txt_emb, model.embed_texts(neg_ids)], dim=0)
            target = torch.arange(len(phrases))
            loss = F.cross_entropy(scale * img_emb @ cols.t(), target) + F.cross_entropy(
                scale * txt_emb @ img_emb.t(), target
            )
        else:
            loss = contrastive_loss(img_emb, txt_emb, scale)
        if not torch.isfinite(loss):
            raise TrainingDiverged(f"mask prompt step {step}: loss={loss.item()}")
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        with torch.no_grad():
            canvas.clamp_(0.0, 1.0)
        if log_every and step % log_every == 0:
            print(f"[maskprompt] step {step}/{config.steps} loss={loss.item():.4f}", flush=True)

    prompt = MaskPrompt(
        canvas.detach()[0].permute(1, 2, 0).numpy(), backbone_hash=clip.config_hash
    )
    prompt.save(out_path, config)
    return prompt
