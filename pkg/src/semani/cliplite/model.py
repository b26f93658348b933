"""Compact image/text contrastive model.

Both towers project into a shared unit-norm space. The image tower also
exposes per-patch token embeddings on the same grid as the autoencoder's
tokens (patch size equals the autoencoder downsample), so token-level
masks transfer between the two without resampling.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from semani.config import ClipConfig, config_dict, config_hash
from semani.corpus.text import TextTokens, Vocabulary
from semani.errors import DomainError, ShapeMismatchError
from semani.storage import load_checkpoint, save_checkpoint


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"cosine over {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine undefined for zero vector")
    return float(a @ b / (na * nb))


class ImageTower(nn.Module):
    """Three stride-2 stages: 64 -> 8 feature grid, one cell per patch.

    Replicate padding keeps a constant input constant through the stack,
    so a uniform image yields identical embeddings at every cell.
    """

    def __init__(self, width: int, embed_dim: int):
        super().__init__()
        w = width
        self.stages = nn.ModuleList(
            [
                nn.Conv2d(3, w, 3, stride=2, padding=1, padding_mode="replicate"),
                nn.Conv2d(w, w, 3, padding=1, padding_mode="replicate"),
                nn.Conv2d(w, 2 * w, 3, stride=2, padding=1, padding_mode="replicate"),
                nn.Conv2d(2 * w, 2 * w, 3, padding=1, padding_mode="replicate"),
                nn.Conv2d(2 * w, 2 * w, 3, stride=2, padding=1, padding_mode="replicate"),
                nn.Conv2d(2 * w, 2 * w, 3, padding=1, padding_mode="replicate"),
            ]
        )
        self.token_proj = nn.Conv2d(2 * w, embed_dim, 1)
        self.global_proj = nn.Linear(2 * w, embed_dim)

    def features(self, images: torch.Tensor) -> torch.Tensor:
        h = images
        for stage in self.stages:
            h = F.silu(stage(h))
        return h  # (B, 2w, 8, 8)

    def forward(self, images: torch.Tensor):
        feats = self.features(images)
        tokens = F.normalize(self.token_proj(feats), dim=1)  # (B, d, 8, 8)
        pooled = self.global_proj(feats.mean(dim=(2, 3)))
        return F.normalize(pooled, dim=1), tokens


class TextTower(nn.Module):
    """Token + position embeddings, two attention blocks, mean pool.

    Padding positions carry learned per-position tokens (the vocabulary
    assigns a distinct id per pad slot), so no attention mask is needed
    and an all-pad prompt maps to a fixed embedding.
    """

    def __init__(self, vocab_size: int, l_max: int, width: int, embed_dim: int):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, width)
        self.pos = nn.Embedding(l_max, width)
        self.blocks = nn.ModuleList(
            [
                nn.TransformerEncoderLayer(
                    width, 4, dim_feedforward=2 * width,
                    batch_first=True, norm_first=True, dropout=0.0,
                )
                for _ in range(2)
            ]
        )
        self.proj = nn.Linear(width, embed_dim)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        h = self.tok(ids) + self.pos.weight[None, : ids.shape[1]]
        for block in self.blocks:
            h = block(h)
        return F.normalize(self.proj(h.mean(dim=1)), dim=1)


class ClipLiteModel(nn.Module):
    def __init__(self, config: ClipConfig, vocab_size: int, l_max: int):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.l_max = l_max
        self.image_tower = ImageTower(config.width, config.embed_dim)
        self.text_tower = TextTower(vocab_size, l_max, config.text_width, config.embed_dim)
        self.log_scale = nn.Parameter(torch.tensor(math.log(config.logit_scale_init)))
        self.log_scale_token = nn.Parameter(torch.tensor(math.log(config.logit_scale_init)))

    def embed_images(self, images: torch.Tensor) -> torch.Tensor:
        return self.image_tower(images)[0]

    def embed_token_grid(self, images: torch.Tensor) -> torch.Tensor:
        return self.image_tower(images)[1]

    def embed_texts(self, ids: torch.Tensor) -> torch.Tensor:
        return self.text_tower(ids)


def contrastive_loss(
    image_emb: torch.Tensor, text_emb: torch.Tensor, scale: torch.Tensor | float = 1.0
) -> torch.Tensor:
    """Symmetric InfoNCE: sum of image-to-text and text-to-image CE.

    With random unit embeddings and scale 1 this sits near 2*ln(batch).
    """
    if image_emb.shape != text_emb.shape:
        raise ShapeMismatchError(
            f"embedding batches differ: {tuple(image_emb.shape)} vs {tuple(text_emb.shape)}"
        )
    logits = scale * image_emb @ text_emb.t()
    target = torch.arange(logits.shape[0])
    return F.cross_entropy(logits, target) + F.cross_entropy(logits.t(), target)


class ClipCheckpoint:
    """Frozen inference handle; numpy in, numpy out."""

    def __init__(self, model: ClipLiteModel, vocabulary: Vocabulary, cfg_hash: str):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.vocabulary = vocabulary
        self.config = model.config
        self.config_hash = cfg_hash

    def _image_tensor(self, image: np.ndarray) -> torch.Tensor:
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatchError(f"expected (H, W, 3) image, got {image.shape}")
        t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        return t.permute(2, 0, 1)[None]

    def _text_ids(self, text: TextTokens | str) -> torch.Tensor:
        if isinstance(text, str):
            text = self.vocabulary.tokenize(text)
        return torch.from_numpy(text.ids[None].astype(np.int64))

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return self.model.embed_images(self._image_tensor(image))[0].numpy()

    def embed_text(self, text: TextTokens | str) -> np.ndarray:
        with torch.no_grad():
            return self.model.embed_texts(self._text_ids(text))[0].numpy()

    def embed_tokens(self, image: np.ndarray) -> np.ndarray:
        """Per-patch unit embeddings, (h, w, d) on the token grid."""
        with torch.no_grad():
            grid = self.model.embed_token_grid(self._image_tensor(image))[0]
        return grid.permute(1, 2, 0).numpy()

    def semantic_loss_t(self, images: torch.Tensor, text_emb: torch.Tensor) -> torch.Tensor:
        """1 - cos(image, text) per sample, differentiable w.r.t. images."""
        img_emb = self.model.embed_images(images)
        return 1.0 - (img_emb * text_emb).sum(dim=1)

    def semantic_loss(self, image: np.ndarray, text: TextTokens | str) -> float:
        with torch.no_grad():
            txt = self.model.embed_texts(self._text_ids(text))
            return float(self.semantic_loss_t(self._image_tensor(image), txt)[0])

    def semantic_loss_grad(self, image: np.ndarray, text: TextTokens | str) -> np.ndarray:
        """Gradient of the semantic loss w.r.t. image pixels, (H, W, 3)."""
        t = self._image_tensor(image).requires_grad_(True)
        with torch.no_grad():
            txt = self.model.embed_texts(self._text_ids(text))
        loss = self.semantic_loss_t(t, txt)[0]
        (grad,) = torch.autograd.grad(loss, t)
        return grad[0].permute(1, 2, 0).numpy()

    def save(self, path) -> None:
        save_checkpoint(
            path,
            kind="cliplite",
            config_dict=config_dict(self.config),
            config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
            extra={"vocabulary": self.vocabulary.to_dict()},
        )

    @classmethod
    def load(cls, path) -> "ClipCheckpoint":
        payload = load_checkpoint(path, kind="cliplite")
        cfg = ClipConfig(**payload["config"])
        vocab = Vocabulary.from_dict(payload["extra"]["vocabulary"])
        model = ClipLiteModel(cfg, vocab.size, vocab.l_max)
        model.load_state_dict(payload["state"]["model"])
        return cls(model, vocab, payload["config_hash"])


def new_checkpoint(config: ClipConfig, vocabulary: Vocabulary) -> ClipCheckpoint:
    torch.manual_seed(config.seed)
    return ClipCheckpoint(
        ClipLiteModel(config, vocabulary.size, vocabulary.l_max),
        vocabulary,
        config_hash(config),
    )
