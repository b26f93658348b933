"""Four-loss training of the AR generator.

Image, grayscale and text segments each contribute a cross-entropy; a
contrastive alignment loss flows through straight-through sampling of the
predicted image tokens, the frozen decoder and the frozen text-image
model back into the logits.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from semani.cliplite.model import ClipCheckpoint
from semani.config import TransConfig, config_hash
from semani.corpus.manifest import SplitManifest
from semani.corpus.scenes import to_grayscale
from semani.errors import ConfigurationError, TrainingDiverged
from semani.numerics import flush_subnormals
from semani.transgen.losses import compute_losses, total_loss
from semani.transgen.model import TransCheckpoint, TransGenModel, new_model
from semani.transgen.vocab import UnifiedVocab, build_sequence
from semani.vqae.model import VqaeCheckpoint

CLIP_SUBBATCH = 8


def tokenize_split(
    manifest: SplitManifest, vqae: VqaeCheckpoint, split: str, batch: int = 32
) -> dict[str, np.ndarray]:
    """Precompute image/gray token grids and caption ids for a split."""
    scenes = manifest.scenes(split)
    vocab = manifest.vocabulary
    images = np.stack([s.image for s in scenes])
    grays = np.stack([to_grayscale(s.image) for s in scenes])

    def encode_all(arr: np.ndarray) -> np.ndarray:
        out = []
        model = vqae.model
        with torch.no_grad():
            for i in range(0, len(arr), batch):
                chunk = torch.from_numpy(arr[i : i + batch]).permute(0, 3, 1, 2)
                latents = model.encoder(chunk)
                idx = model.quantizer.indices(latents.permute(0, 2, 3, 1))
                out.append(idx.numpy())
        return np.concatenate(out)

    return {
        "image_tokens": encode_all(images),
        "gray_tokens": encode_all(grays),
        "text_ids": np.stack([vocab.tokenize(s.caption).ids for s in scenes]),
    }


def train_transgen(
    manifest: SplitManifest,
    vqae: VqaeCheckpoint,
    clip: ClipCheckpoint,
    config: TransConfig,
    out_path,
    log_every: int = 200,
) -> TransCheckpoint:
    config.validate()
    flush_subnormals()
    if manifest.config.l_max != clip.vocabulary.l_max:
        raise ConfigurationError("manifest and cliplite vocabulary l_max disagree")
    vocab = UnifiedVocab(manifest.vocabulary.size, vqae.config.codebook_size)
    grid = manifest.config.resolution // vqae.config.downsample

    print("[transgen] tokenizing train split...", flush=True)
    data = tokenize_split(manifest, vqae, "train")
    n = len(data["image_tokens"])

    model = new_model(config, vocab, grid, manifest.config.l_max)
    opt = torch.optim.AdamW(
        model.parameters(), lr=config.lr, betas=(0.9, 0.96), weight_decay=0.01
    )

    def lr_lambda(step: int) -> float:
        if step < config.warmup_steps:
            return (step + 1) / config.warmup_steps
        span = max(1, config.steps - config.warmup_steps)
        progress = (step - config.warmup_steps) / span
        return 0.1 + 0.45 * (1.0 + math.cos(math.pi * progress))

    sched = torch.optim.lr_scheduler.LambdaLR(opt, lr_lambda)
    rng = np.random.default_rng(config.seed)
    codebook = torch.from_numpy(vqae.codebook.astype(np.float32))

    trace: list[float] = []
    model.train()
    for step in range(1, config.steps + 1):
        idx = rng.integers(0, n, size=config.batch_size)
        has_gray = bool(rng.random() < config.vision_guidance_rate)
        seqs = np.stack(
            [
                build_sequence(
                    vocab,
                    model.layout(has_gray),
                    data["text_ids"][i],
                    image_tokens=data["image_tokens"][i],
                    gray_tokens=data["gray_tokens"][i] if has_gray else None,
                )
                for i in idx
            ]
        )
        ids = torch.from_numpy(seqs)
        logits = model(ids, has_gray)
        parts = compute_losses(logits, ids, model.layout(has_gray))

        if config.lambda_clip > 0 and step % config.clip_loss_interval == 0:
            l_clip = _clip_loss(
                logits, model.layout(has_gray), vocab, codebook, vqae, clip,
                torch.from_numpy(data["text_ids"][idx[:CLIP_SUBBATCH]]),
            )
        else:
            l_clip = logits.new_zeros(())

        loss = total_loss(parts["img"], parts["gray"], parts["txt"], l_clip, config)
        if not torch.isfinite(loss):
            raise TrainingDiverged(
                f"transgen step {step}: img={parts['img'].item()} gray={parts['gray'].item()} "
                f"txt={parts['txt'].item()} clip={float(l_clip)}"
            )
        opt.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
        opt.step()
        sched.step()
        trace.append(loss.item())
        if log_every and step % log_every == 0:
            print(
                f"[transgen] step {step}/{config.steps} loss={loss.item():.4f} "
                f"img={parts['img'].item():.3f} txt={parts['txt'].item():.3f} "
                f"clip={float(torch.as_tensor(l_clip).detach()):.3f} "
                f"lr={sched.get_last_lr()[0]:.2e}",
                flush=True,
            )

    ckpt = TransCheckpoint(
        model, config_hash(config), refs={"vqae": vqae.config_hash, "cliplite": clip.config_hash}
    )
    ckpt.save(out_path, extra={"loss_trace": trace, "manifest_hash": manifest.config_hash})
    return ckpt


def _clip_loss(
    logits: torch.Tensor,
    layout,
    vocab: UnifiedVocab,
    codebook: torch.Tensor,
    vqae: VqaeCheckpoint,
    clip: ClipCheckpoint,
    text_ids: torch.Tensor,
) -> torch.Tensor:
    """1 - cos(decode(STE-sampled tokens), caption embedding), sub-batch mean."""
    b = text_ids.shape[0]
    seg = layout.image_slice
    band = logits[:b, seg.start - 1 : seg.stop - 1, vocab.text_size : vocab.text_size + vocab.codebook_size]
    probs = torch.softmax(band, dim=-1)
    soft = probs @ codebook
    hard = codebook[probs.argmax(dim=-1)]
    z = soft + (hard - soft).detach()
    grid = int(math.isqrt(layout.n_cells))
    z = z.reshape(b, grid, grid, -1).permute(0, 3, 1, 2)
    images = vqae.model.decoder(z)
    with torch.no_grad():
        text_emb = clip.model.embed_texts(text_ids)
    return clip.semantic_loss_t(images, text_emb).mean()
