"""Convolutional autoencoder with a learned codebook.

Images (H, W, 3) in [0,1] map to token grids (H/f, W/f) over K codes and
back. The straight-through estimator carries decoder gradients past the
quantization step during training.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from semani import kernels
from semani.config import VqaeConfig, config_dict, config_hash
from semani.errors import ConfigurationError, DomainError, ShapeMismatchError
from semani.storage import load_checkpoint, save_checkpoint


def quantize(grid: np.ndarray, codebook: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-codebook assignment for an (h, w, n_z) latent grid.

    Returns (indices (h, w) int64, quantized grid (h, w, n_z)). Ties pick
    the lowest index.
    """
    codebook = np.asarray(codebook, dtype=np.float64)
    if codebook.ndim != 2 or codebook.shape[0] == 0:
        raise ConfigurationError("empty codebook")
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[2] != codebook.shape[1]:
        raise ShapeMismatchError(
            f"latent grid depth {grid.shape[-1] if grid.ndim == 3 else grid.shape} "
            f"!= codebook dim {codebook.shape[1]}"
        )
    h, w, d = grid.shape
    flat = np.ascontiguousarray(grid.reshape(-1, d))
    idx = kernels.nearest_codes(flat, np.ascontiguousarray(codebook))
    return idx.reshape(h, w), codebook[idx].reshape(h, w, d)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = nn.GroupNorm(8, channels)
        self.norm2 = nn.GroupNorm(8, channels)

    def forward(self, x):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return x + h


class Encoder(nn.Module):
    def __init__(self, base: int, latent_dim: int):
        super().__init__()
        self.stem = nn.Conv2d(3, base, 3, padding=1)
        self.down = nn.ModuleList(
            [
                nn.Conv2d(base, base, 4, stride=2, padding=1),
                nn.Conv2d(base, 2 * base, 4, stride=2, padding=1),
                nn.Conv2d(2 * base, 2 * base, 4, stride=2, padding=1),
            ]
        )
        self.res = ResBlock(2 * base)
        self.out = nn.Conv2d(2 * base, latent_dim, 1)

    def forward(self, x):
        h = self.stem(x)
        for down in self.down:
            h = F.silu(down(h))
        return self.out(self.res(h))


class Decoder(nn.Module):
    def __init__(self, base: int, latent_dim: int):
        super().__init__()
        self.stem = nn.Conv2d(latent_dim, 2 * base, 3, padding=1)
        self.res = ResBlock(2 * base)
        self.up = nn.ModuleList(
            [
                nn.Conv2d(2 * base, 2 * base, 3, padding=1),
                nn.Conv2d(2 * base, base, 3, padding=1),
                nn.Conv2d(base, base, 3, padding=1),
            ]
        )
        self.out = nn.Conv2d(base, 3, 3, padding=1)

    def forward(self, z):
        h = self.res(self.stem(z))
        for up in self.up:
            h = F.silu(up(F.interpolate(h, scale_factor=2, mode="nearest")))
        return torch.sigmoid(self.out(h))


class VectorQuantizer(nn.Module):
    """Codebook with straight-through gradients and commitment losses."""

    def __init__(self, codebook_size: int, latent_dim: int, commitment_weight: float):
        super().__init__()
        self.commitment_weight = commitment_weight
        self.codebook = nn.Parameter(torch.empty(codebook_size, latent_dim))
        nn.init.uniform_(self.codebook, -1.0 / codebook_size, 1.0 / codebook_size)

    def indices(self, latents: torch.Tensor) -> torch.Tensor:
        """latents: (..., n_z) -> (...) nearest-code indices (first index wins ties)."""
        flat = latents.reshape(-1, self.codebook.shape[1])
        dists = (
            flat.square().sum(1, keepdim=True)
            - 2.0 * flat @ self.codebook.t()
            + self.codebook.square().sum(1)
        )
        return dists.argmin(1).reshape(latents.shape[:-1])

    def forward(self, latents: torch.Tensor):
        """latents: (B, n_z, h, w) -> (quantized, loss, indices)."""
        moved = latents.permute(0, 2, 3, 1)
        idx = self.indices(moved)
        quantized = self.codebook[idx]
        codebook_loss = (quantized - moved.detach()).square().mean()
        commit_loss = (quantized.detach() - moved).square().mean()
        loss = codebook_loss + self.commitment_weight * commit_loss
        quantized = moved + (quantized - moved).detach()  # straight-through
        return quantized.permute(0, 3, 1, 2), loss, idx


class VqaeModel(nn.Module):
    def __init__(self, config: VqaeConfig):
        super().__init__()
        self.config = config
        self.encoder = Encoder(config.base_channels, config.latent_dim)
        self.decoder = Decoder(config.base_channels, config.latent_dim)
        self.quantizer = VectorQuantizer(
            config.codebook_size, config.latent_dim, config.commitment_weight
        )

    def forward(self, images: torch.Tensor):
        """images: (B, 3, H, W) -> (recon, vq_loss, indices)."""
        latents = self.encoder(images)
        quantized, vq_loss, idx = self.quantizer(latents)
        return self.decoder(quantized), vq_loss, idx


class VqaeCheckpoint:
    """Inference handle over frozen weights; numpy at the boundary."""

    def __init__(self, model: VqaeModel, cfg_hash: str):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.config = model.config
        self.config_hash = cfg_hash

    @property
    def codebook(self) -> np.ndarray:
        return self.model.quantizer.codebook.detach().numpy().copy()

    def _check_dims(self, image: np.ndarray) -> None:
        f = self.config.downsample
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatchError(f"expected (H, W, 3) image, got {image.shape}")
        if image.shape[0] % f or image.shape[1] % f:
            raise ShapeMismatchError(f"image dims {image.shape[:2]} not divisible by {f}")

    def encode(self, image: np.ndarray) -> np.ndarray:
        """Image (H, W, 3) -> continuous latent grid (H/f, W/f, n_z)."""
        self._check_dims(image)
        with torch.no_grad():
            t = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
            latents = self.model.encoder(t.permute(2, 0, 1)[None])
        return latents[0].permute(1, 2, 0).numpy()

    def tokens(self, image: np.ndarray) -> np.ndarray:
        """Image -> (h, w) token grid via encode + nearest-code assignment."""
        idx, _ = quantize(self.encode(image), self.codebook)
        return idx

    def decode(self, tokens: np.ndarray) -> np.ndarray:
        """Token grid (h, w) -> image (H, W, 3) in [0,1]."""
        tokens = np.asarray(tokens)
        if tokens.min() < 0 or tokens.max() >= self.config.codebook_size:
            raise DomainError(
                f"token index out of range [0, {self.config.codebook_size})"
            )
        with torch.no_grad():
            z = self.model.quantizer.codebook[torch.from_numpy(tokens.astype(np.int64))]
            img = self.model.decoder(z.permute(2, 0, 1)[None])
        return img[0].permute(1, 2, 0).clamp(0, 1).numpy()

    def save(self, path) -> None:
        save_checkpoint(
            path,
            kind="vqae",
            config_dict=config_dict(self.config),
            config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
        )

    @classmethod
    def load(cls, path) -> "VqaeCheckpoint":
        payload = load_checkpoint(path, kind="vqae")
        cfg = VqaeConfig(**payload["config"])
        model = VqaeModel(cfg)
        model.load_state_dict(payload["state"]["model"])
        return cls(model, payload["config_hash"])


def new_checkpoint(config: VqaeConfig) -> VqaeCheckpoint:
    torch.manual_seed(config.seed)
    return VqaeCheckpoint(VqaeModel(config), config_hash(config))
