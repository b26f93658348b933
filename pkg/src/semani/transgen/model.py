"""Decoder-only transformer over the unified vocabulary.

Visual positions (gray and image segments) share one axial row/column
embedding table; segment-type embeddings keep the two visually-addressed
blocks distinguishable. Feed-forward blocks use a GELU-gated linear unit.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from semani.config import TransConfig, config_dict, config_hash
from semani.storage import load_checkpoint, save_checkpoint
from semani.transgen.vocab import SequenceLayout, UnifiedVocab

SEG_GRAY, SEG_TEXT, SEG_IMAGE = 0, 1, 2


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_dim: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.gate = nn.Linear(dim, 2 * ffn_dim)  # GEGLU: half gates half
        self.down = nn.Linear(ffn_dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, s, d = x.shape
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        q = q.view(b, s, self.heads, -1).transpose(1, 2)
        k = k.view(b, s, self.heads, -1).transpose(1, 2)
        v = v.view(b, s, self.heads, -1).transpose(1, 2)
        att = F.scaled_dot_product_attention(q, k, v, is_causal=True)
        x = x + self.proj(att.transpose(1, 2).reshape(b, s, d))
        h, gate = self.gate(self.ln2(x)).chunk(2, dim=-1)
        return x + self.down(h * F.gelu(gate))


class TransGenModel(nn.Module):
    def __init__(self, config: TransConfig, vocab: UnifiedVocab, grid: int, l_max: int):
        super().__init__()
        config.validate()
        self.config = config
        self.vocab = vocab
        self.grid = grid
        self.l_max = l_max
        dim = config.heads * config.head_dim
        self.dim = dim

        self.tok = nn.Embedding(vocab.size, dim)
        self.pos_row = nn.Embedding(grid, dim)  # shared by gray and image blocks
        self.pos_col = nn.Embedding(grid, dim)
        self.pos_text = nn.Embedding(l_max, dim)
        self.pos_sep = nn.Embedding(2, dim)  # 0: [BOV], 1: [BOT]
        self.seg = nn.Embedding(3, dim)
        self.blocks = nn.ModuleList(
            [Block(dim, config.heads, config.ffn_dim) for _ in range(config.layers)]
        )
        self.ln_out = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, vocab.size, bias=False)

    def layout(self, has_gray: bool) -> SequenceLayout:
        return SequenceLayout(self.l_max, self.grid * self.grid, has_gray)

    def position_embedding(self, has_gray: bool) -> torch.Tensor:
        """(S, d) additive embedding for the canonical layout."""
        layout = self.layout(has_gray)
        rows = torch.arange(self.grid).repeat_interleave(self.grid)
        cols = torch.arange(self.grid).repeat(self.grid)
        axial = self.pos_row(rows) + self.pos_col(cols)
        parts = []
        if has_gray:
            parts.append(self.pos_sep(torch.tensor([0])) + self.seg.weight[SEG_GRAY])
            parts.append(axial + self.seg.weight[SEG_GRAY])
        parts.append(self.pos_sep(torch.tensor([1])) + self.seg.weight[SEG_TEXT])
        parts.append(self.pos_text.weight + self.seg.weight[SEG_TEXT])
        parts.append(axial + self.seg.weight[SEG_IMAGE])
        emb = torch.cat(parts, dim=0)
        assert emb.shape[0] == layout.length
        return emb

    def forward(self, ids: torch.Tensor, has_gray: bool) -> torch.Tensor:
        """ids: (B, L) prefix of the canonical layout -> (B, L, U) logits."""
        pos = self.position_embedding(has_gray)[: ids.shape[1]]
        h = self.tok(ids) + pos[None]
        for block in self.blocks:
            h = block(h)
        return self.head(self.ln_out(h))


class TransCheckpoint:
    """Frozen generator plus the ids of the models it was trained against."""

    def __init__(self, model: TransGenModel, cfg_hash: str, refs: dict[str, str]):
        self.model = model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self.config = model.config
        self.config_hash = cfg_hash
        self.refs = refs  # {"vqae": hash, "cliplite": hash}

    def save(self, path, extra: dict | None = None) -> None:
        save_checkpoint(
            path,
            kind="transgen",
            config_dict=config_dict(self.config),
            config_hash=self.config_hash,
            state={"model": self.model.state_dict()},
            extra={
                "refs": self.refs,
                "vocab": {
                    "text_size": self.model.vocab.text_size,
                    "codebook_size": self.model.vocab.codebook_size,
                },
                "grid": self.model.grid,
                "l_max": self.model.l_max,
                **(extra or {}),
            },
        )

    @classmethod
    def load(cls, path) -> "TransCheckpoint":
        payload = load_checkpoint(path, kind="transgen")
        cfg = TransConfig.from_dict(payload["config"])
        meta = payload["extra"]
        vocab = UnifiedVocab(**meta["vocab"])
        model = TransGenModel(cfg, vocab, meta["grid"], meta["l_max"])
        model.load_state_dict(payload["state"]["model"])
        return cls(model, payload["config_hash"], meta["refs"])


def new_model(config: TransConfig, vocab: UnifiedVocab, grid: int, l_max: int) -> TransGenModel:
    torch.manual_seed(config.seed)
    return TransGenModel(config, vocab, grid, l_max)
