"""Contrastive training with token-level grounding."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F

from semani.cliplite.model import ClipCheckpoint, ClipLiteModel, contrastive_loss
from semani.cliplite.negatives import fresh_negatives
from semani.config import ClipConfig, config_dict, config_hash
from semani.corpus.batches import SceneSampler
from semani.corpus.manifest import SplitManifest
from semani.corpus.scenes import Scene
from semani.corpus.shapes import SHAPES
from semani.errors import ConfigurationError, TrainingDiverged
from semani.numerics import flush_subnormals
from semani.storage import save_checkpoint

# cell-level classes for the grounding loss: one per shape word + background
ANCHOR_WORDS = SHAPES + ("background",)
MAX_LOG_SCALE = math.log(100.0)


def token_labels(scene: Scene, grid: int) -> np.ndarray:
    """(grid, grid) int64 anchor classes from ground-truth masks."""
    from semani.align.masks import mask_to_tokens  # deferred: align imports cliplite

    labels = np.full((grid, grid), len(ANCHOR_WORDS) - 1, dtype=np.int64)
    for spec, mask in scene.entities:
        cells = mask_to_tokens(mask, grid, grid).astype(bool)
        labels[cells] = SHAPES.index(spec.shape)
    return labels


def _unique_by_caption(scenes: list[Scene]) -> list[Scene]:
    seen: set[str] = set()
    out = []
    for s in scenes:
        if s.caption not in seen:
            seen.add(s.caption)
            out.append(s)
    return out


def train_clip(
    manifest: SplitManifest,
    config: ClipConfig,
    out_path,
    log_every: int = 200,
) -> ClipCheckpoint:
    if config.batch_size < 2:
        raise ConfigurationError("contrastive training needs batch_size >= 2")
    vocab = manifest.vocabulary
    flush_subnormals()
    torch.manual_seed(config.seed)
    model = ClipLiteModel(config, vocab.size, vocab.l_max)
    opt = torch.optim.AdamW(model.parameters(), lr=config.lr)
    sampler = SceneSampler(manifest, "train", seed=config.seed)
    neg_rng = np.random.default_rng(config.seed + 1)
    grid = manifest.config.resolution // config.patch
    anchor_ids = torch.from_numpy(
        np.stack([vocab.tokenize(w).ids for w in ANCHOR_WORDS])
    )

    trace: list[float] = []
    model.train()
    for step in range(1, config.steps + 1):
        scenes = _unique_by_caption(sampler.batch(config.batch_size))
        images = torch.from_numpy(
            np.stack([s.image for s in scenes])
        ).permute(0, 3, 1, 2)
        text_ids = torch.from_numpy(np.stack([vocab.tokenize(s.caption).ids for s in scenes]))
        labels = torch.from_numpy(np.stack([token_labels(s, grid) for s in scenes]))

        img_emb, token_grid = model.image_tower(images)
        txt_emb = model.embed_texts(text_ids)
        scale = model.log_scale.clamp(max=MAX_LOG_SCALE).exp()
        if config.hard_negatives:
            # batch negatives differ in many words; swapped captions force the
            # text tower to separate single-attribute edits
            taken = {s.caption for s in scenes}
            caps = [
                c
                for s in scenes
                for c in fresh_negatives(s, config.hard_negatives, neg_rng, taken)
            ]
            neg_ids = torch.from_numpy(np.stack([vocab.tokenize(c).ids for c in caps]))
            cols = torch.cat([txt_emb, model.embed_texts(neg_ids)], dim=0)
            target = torch.arange(len(scenes))
            loss_global = F.cross_entropy(
                scale * img_emb @ cols.t(), target
            ) + F.cross_entropy(scale * txt_emb @ img_emb.t(), target)
        else:
            loss_global = contrastive_loss(img_emb, txt_emb, scale)

        anchor_emb = model.embed_texts(anchor_ids)  # (A, d)
        token_logits = model.log_scale_token.clamp(max=MAX_LOG_SCALE).exp() * torch.einsum(
            "bdhw,ad->bahw", token_grid, anchor_emb
        )
        loss_token = F.cross_entropy(token_logits, labels)

        loss = loss_global + config.token_loss_weight * loss_token
        if not torch.isfinite(loss):
            raise TrainingDiverged(
                f"cliplite step {step}: global={loss_global.item()} token={loss_token.item()}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()
        trace.append(loss.item())
        if log_every and step % log_every == 0:
            print(
                f"[cliplite] step {step}/{config.steps} loss={loss.item():.4f} "
                f"global={loss_global.item():.4f} token={loss_token.item():.4f}",
                flush=True,
            )

    ckpt = ClipCheckpoint(model, vocab, config_hash(config))
    save_checkpoint(
        out_path,
        kind="cliplite",
        config_dict=config_dict(config),
        config_hash=ckpt.config_hash,
        state={"model": model.state_dict()},
        extra={"vocabulary": vocab.to_dict(), "loss_trace": trace},
    )
    return ckpt
