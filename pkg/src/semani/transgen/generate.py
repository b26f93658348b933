"""Constrained decoding: resample masked cells, copy the rest."""

from __future__ import annotations

import numpy as np
import torch

from semani.config import DecodeParams
from semani.errors import ShapeMismatchError
from semani.transgen.model import TransGenModel
from semani.transgen.vocab import build_sequence
from semani.vqae.model import VqaeCheckpoint


def next_token_logits(model: TransGenModel, prefix: np.ndarray, has_gray: bool) -> np.ndarray:
    """Logits over the unified vocabulary for the next position."""
    ids = torch.from_numpy(np.asarray(prefix, dtype=np.int64))[None]
    with torch.no_grad():
        logits = model(ids, has_gray)
    return logits[0, -1].numpy()


def sequence_log_prob(model: TransGenModel, ids: np.ndarray, has_gray: bool) -> float:
    """Joint log-probability of positions 1..S-1 under one forward pass."""
    t = torch.from_numpy(np.asarray(ids, dtype=np.int64))[None]
    with torch.no_grad():
        logits = model(t, has_gray)
        logp = torch.log_softmax(logits[0, :-1].double(), dim=-1)
    steps = logp[torch.arange(t.shape[1] - 1), t[0, 1:]]
    return float(steps.sum())


def _sample_image_token(
    logits: torch.Tensor,
    params: DecodeParams,
    generator: torch.Generator,
    text_size: int,
    codebook_size: int,
) -> torch.Tensor:
    """(B, U) logits -> (B,) codebook indices; only image-band ids are legal."""
    band = logits[:, text_size : text_size + codebook_size] / params.temperature
    k = min(params.top_k, codebook_size)
    kth = band.topk(k, dim=-1).values[:, -1:]
    band = band.masked_fill(band < kth, float("-inf"))
    probs = torch.softmax(band, dim=-1)
    return torch.multinomial(probs, 1, generator=generator)[:, 0]


def manipulate_batch(
    model: TransGenModel,
    tokens: np.ndarray,
    token_masks: np.ndarray,
    text_ids: np.ndarray,
    gray_tokens: np.ndarray | None,
    params: DecodeParams,
) -> np.ndarray:
    """Resample masked cells of (B, h, w) token grids in raster order.

    Unmasked cells are teacher-forced from the input and come back
    bit-identical. All sequences in the batch share the gray/no-gray
    structure; masks may differ per sample.
    """
    params.validate()
    tokens = np.asarray(tokens)
    if tokens.ndim != 3:
        raise ShapeMismatchError(f"expected (B, h, w) token grids, got {tokens.shape}")
    b, h, w = tokens.shape
    if token_masks.shape != tokens.shape:
        raise ShapeMismatchError(f"token masks {token_masks.shape} != tokens {tokens.shape}")
    has_gray = gray_tokens is not None
    layout = model.layout(has_gray)
    if h * w != layout.n_cells:
        raise ShapeMismatchError(f"grid {h}x{w} incompatible with model cells {layout.n_cells}")

    vocab = model.vocab
    flat_tokens = tokens.reshape(b, -1)
    flat_masks = np.asarray(token_masks).reshape(b, -1) > 0
    prefixes = np.stack(
        [
            build_sequence(
                vocab,
                layout,
                text_ids[i],
                image_tokens=None,
                gray_tokens=None if gray_tokens is None else gray_tokens[i],
            )
            for i in range(b)
        ]
    )
    ids = torch.from_numpy(prefixes)
    generator = torch.Generator().manual_seed(params.seed)

    out = flat_tokens.copy()
    with torch.no_grad():
        for cell in range(h * w):
            forced = torch.from_numpy(vocab.image_ids(flat_tokens[:, cell]))
            if flat_masks[:, cell].any():
                logits = model(ids, has_gray)[:, -1]
                sampled = _sample_image_token(
                    logits, params, generator, vocab.text_size, vocab.codebook_size
                )
                keep = torch.from_numpy(flat_masks[:, cell])
                chosen = torch.where(keep, sampled + vocab.text_size, forced)
            else:
                chosen = forced
            out[:, cell] = np.where(
                flat_masks[:, cell], (chosen.numpy() - vocab.text_size), flat_tokens[:, cell]
            )
            ids = torch.cat([ids, chosen[:, None]], dim=1)
    return out.reshape(b, h, w)


def manipulate(
    model: TransGenModel,
    tokens: np.ndarray,
    token_mask: np.ndarray,
    text_ids: np.ndarray,
    gray_tokens: np.ndarray | None = None,
    params: DecodeParams = DecodeParams(),
) -> np.ndarray:
    """Single-grid form of manipulate_batch."""
    out = manipulate_batch(
        model,
        np.asarray(tokens)[None],
        np.asarray(token_mask)[None],
        np.asarray(text_ids)[None],
        None if gray_tokens is None else np.asarray(gray_tokens)[None],
        params,
    )
    return out[0]


def decode_image(
    vqae: VqaeCheckpoint,
    tokens: np.ndarray,
    original: np.ndarray,
    pixel_mask: np.ndarray,
) -> np.ndarray:
    """Decode a token grid and keep original pixels outside the mask."""
    from semani.diffgen.sampler import composite

    return composite(original, vqae.decode(tokens), pixel_mask)
