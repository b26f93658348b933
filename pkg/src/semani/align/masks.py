"""Pixel-mask geometry shared by providers and scorers."""

from __future__ import annotations

import numpy as np

from semani.errors import DomainError, ShapeMismatchError


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of source-interval overlaps."""
    scale = n_in / n_out
    edges = np.arange(n_out + 1) * scale
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        first, last = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(first, min(last, n_in)):
            weights[i, j] = min(hi, j + 1) - max(lo, j)
    return weights / scale


def mask_to_tokens(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Downsample a pixel mask to the (h, w) token grid.

    Each cell takes the mean coverage of the source region it spans; any
    positive coverage marks the cell, so a token cell is selected iff the
    entity touches it at all.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ShapeMismatchError(f"expected (H, W) mask, got {mask.shape}")
    if mask.shape[0] < h or mask.shape[1] < w:
        raise ShapeMismatchError(f"mask {mask.shape} smaller than token grid ({h}, {w})")
    field = (mask > 0).astype(np.float64)
    H, W = field.shape
    if H % h == 0 and W % w == 0:
        resized = field.reshape(h, H // h, w, W // w).mean(axis=(1, 3))
    else:
        resized = _overlap_weights(H, h) @ field @ _overlap_weights(W, w).T
    return (resized > 0.0).astype(np.uint8)


def tokens_to_pixels(token_mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour upsample of a token mask to pixel resolution."""
    token_mask = np.asarray(token_mask)
    h, w = token_mask.shape
    rows = (np.arange(height) * h) // height
    cols = (np.arange(width) * w) // width
    return (token_mask[np.ix_(rows, cols)] > 0).astype(np.uint8)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a) > 0
    b = np.asarray(b) > 0
    if a.shape != b.shape:
        raise ShapeMismatchError(f"IoU over {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        raise DomainError("IoU undefined for two empty masks")
    return float(np.logical_and(a, b).sum() / union)


def resolve_overlaps(masks: list[np.ndarray]) -> list[np.ndarray]:
    """Make masks disjoint; earlier (larger) masks keep contested pixels."""
    order = sorted(range(len(masks)), key=lambda i: (-int((masks[i] > 0).sum()), i))
    taken = np.zeros(masks[0].shape, dtype=bool)
    out: list[np.ndarray | None] = [None] * len(masks)
    for i in order:
        m = (masks[i] > 0) & ~taken
        taken |= m
        out[i] = m.astype(np.uint8)
    return [m for m in out if m is not None]
