"""Conditional UNet noise predictor.

The network sees 7 input channels: the noisy image, the conditioning
image with the entity region zeroed, and the mask itself. Text enters
through cross-attention at the two coarsest resolutions. The empty
condition (classifier-free branch) is all-zero image/mask channels plus
the all-padding text sequence.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from semani.config import DiffConfig, config_dict, config_hash
from semani.corpus.text import Vocabulary
from semani.diffgen.schedule import NoiseSchedule, make_schedule
from semani.storage import load_checkpoint, save_checkpoint


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal features of integer timesteps, (B, dim)."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=1)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, time_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.time = nn.Linear(time_dim, cout)
        self.norm2 = nn.GroupNorm(8, cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, temb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.time(temb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class CrossAttention(nn.Module):
    """Pixels attend to the text memory."""

    def __init__(self, channels: int, text_width: int, heads: int = 4):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.attn = nn.MultiheadAttention(
            channels, heads, kdim=text_width, vdim=text_width, batch_first=True
        )

    def forward(self, x, memory):
        b, c, h, w = x.shape
        q = self.norm(x).reshape(b, c, h * w).transpose(1, 2)
        out, _ = self.attn(q, memory, memory, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class SelfAttention(nn.Module):
    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        self.norm = nn.GroupNorm(8, channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)

    def forward(self, x):
        b, c, h, w = x.shape
        q = self.norm(x).reshape(b, c, h * w).transpose(1, 2)
        out, _ = self.attn(q, q, q, need_weights=False)
        return x + out.transpose(1, 2).reshape(b, c, h, w)


class TextEncoder(nn.Module):
    def __init__(self, vocab_size: int, l_max: int, width: int):
        super().__init__()
        self.tok = nn.Embedding(vocab_size, width)
        self.pos = nn.Embedding(l_max, width)
        self.block = nn.TransformerEncoderLayer(
            width, 4, dim_feedforward=2 * width, batch_first=True, norm_first=True, dropout=0.0
        )

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.block(self.tok(ids) + self.pos.weight[None, : ids.shape[1]])


class DenoiserUNet(nn.Module):
    def __init__(self, config: DiffConfig, vocab_size: int, l_max: int):
        super().__init__()
        self.config = config
        c = config.base_channels
        m1, m2, m3 = config.channel_mults
        c1, c2, c3 = c * m1, c * m2, c * m3
        tdim = 4 * c
        self.time_mlp = nn.Sequential(nn.Linear(c, tdim), nn.SiLU(), nn.Linear(tdim, tdim))
        self.text = TextEncoder(vocab_size, l_max, config.text_width)

        self.stem = nn.Conv2d(7, c1, 3, padding=1)
        self.down1 = ResBlock(c1, c1, tdim)
        self.pool1 = nn.Conv2d(c1, c1, 3, stride=2, padding=1)
        self.down2 = ResBlock(c1, c2, tdim)
        self.pool2 = nn.Conv2d(c2, c2, 3, stride=2, padding=1)
        self.down3 = ResBlock(c2, c3, tdim)
        self.xattn3 = CrossAttention(c3, config.text_width)
        self.pool3 = nn.Conv2d(c3, c3, 3, stride=2, padding=1)

        self.mid1 = ResBlock(c3, c3, tdim)
        self.mid_self = SelfAttention(c3)
        self.mid_x = CrossAttention(c3, config.text_width)
        self.mid2 = ResBlock(c3, c3, tdim)

        self.up3 = ResBlock(c3 + c3, c3, tdim)
        self.xattn_up3 = CrossAttention(c3, config.text_width)
        self.up2 = ResBlock(c3 + c2, c2, tdim)
        self.up1 = ResBlock(c2 + c1, c1, tdim)
        self.out_norm = nn.GroupNorm(8, c1)
        self.out = nn.Conv2d(c1, 3, 3, padding=1)

    def forward(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        masked_image: torch.Tensor,
        mask: torch.Tensor,
        text_ids: torch.Tensor,
    ) -> torch.Tensor:
        temb = self.time_mlp(timestep_embedding(t, self.config.base_channels))
        memory = self.text(text_ids)

        h = self.stem(torch.cat([x_t, masked_image, mask], dim=1))
        h1 = self.down1(h, temb)                      # 64
        h2 = self.down2(self.pool1(h1), temb)         # 32
        h3 = self.xattn3(self.down3(self.pool2(h2), temb), memory)  # 16

        m = self.mid1(self.pool3(h3), temb)           # 8
        m = self.mid2(self.mid_x(self.mid_self(m), memory), temb)

        u3 = F.interpolate(m, scale_factor=2, mode="nearest")
        u3 = self.xattn_up3(self.up3(torch.cat([u3, h3], 1), temb), memory)
        u2 = F.interpolate(u3, scale_factor=2, mode="nearest")
        u2 = self.up2(torch.cat([u2, h2], 1), temb)
        u1 = F.interpolate(u2, scale_factor=2, mode="nearest")
        u1 = self.up1(torch.cat([u1, h1], 1), temb)
        return self.out(F.silu(self.out_norm(u1)))


class DiffCheckpoint:
    """Frozen denoiser with its schedule and vocabulary."""

    def __init__(self, model: DenoiserUNet, vocabulary: Vocabulary, cfg_hash: str):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.config = model.config
        self.vocabulary = vocabulary
        self.config_hash = cfg_hash
        self.schedule = make_schedule(
            self.config.timesteps, self.config.beta_start, self.config.beta_end
        )

    def denoise(
        self,
        x_t: torch.Tensor,
        t: torch.Tensor,
        masked_image: torch.Tensor,
        mask: torch.Tensor,
        text_ids: torch.Tensor,
    ) -> torch.Tensor:
        with torch.no_grad():
            return self.model(x_t, t, masked_image, mask, text_ids)

    def empty_text_ids(self, batch: int) -> torch.Tensor:
        ids = self.vocabulary.tokenize("").ids
        return torch.from_numpy(np.stack([ids] * batch))

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(
            path,
            kind="diffgen",
            config_dict=config_dict(self.config),
            config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
            extra={"vocabulary": self.vocabulary.to_dict(), **(extra or {})},
        )

    @classmethod
    def load(cls, path) -> "DiffCheckpoint":
        payload = load_checkpoint(path, kind="diffgen")
        cfg = DiffConfig.from_dict(payload["config"])
        vocab = Vocabulary.from_dict(payload["extra"]["vocabulary"])
        model = DenoiserUNet(cfg, vocab.size, vocab.l_max)
        model.load_state_dict(payload["state"]["model"])
        return cls(model, vocab, payload["config_hash"])


def new_checkpoint(config: DiffConfig, vocabulary: Vocabulary) -> DiffCheckpoint:
    torch.manual_seed(config.seed)
    return DiffCheckpoint(
        DenoiserUNet(config, vocabulary.size, vocabulary.l_max), vocabulary, config_hash(config)
    )
