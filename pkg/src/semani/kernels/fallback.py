"""Pure numpy implementations of the compiled kernels.

Arithmetic mirrors ``_native.pyx`` operation-for-operation so both backends
produce bit-identical results.
"""

from __future__ import annotations

import numpy as np

# broadcasting the full (n, k, d) difference tensor above this many cells
# would be wasteful; chunk the rows instead
_CHUNK = 4096


def nearest_codes(x: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the nearest codebook row (squared L2) per row of ``x``.

    Ties resolve to the lowest index (``np.argmin`` picks the first hit).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    if codebook.ndim != 2 or codebook.shape[0] == 0:
        raise ValueError("empty codebook")
    if x.shape[1] != codebook.shape[1]:
        raise ValueError("dimension mismatch between inputs and codebook")

    out = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], _CHUNK):
        block = x[start : start + _CHUNK]
        diff = block[:, None, :] - codebook[None, :, :]
        dists = np.einsum("nkd,nkd->nk", diff, diff)
        out[start : start + _CHUNK] = np.argmin(dists, axis=1)
    return out


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel sample points and border clamping."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    h, w = src.shape
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise ValueError("empty input or output")

    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1)
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1)
    y0 = sy.astype(np.int64)
    x0 = sx.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (sy - y0)[:, None]
    wx = (sx - x0)[None, :]

    return (
        src[np.ix_(y0, x0)] * (1.0 - wy) * (1.0 - wx)
        + src[np.ix_(y0, x1)] * (1.0 - wy) * wx
        + src[np.ix_(y1, x0)] * wy * (1.0 - wx)
        + src[np.ix_(y1, x1)] * wy * wx
    )


def polygon_fill(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Even-odd rasterization of a polygon onto integer pixel centers."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")

    py = np.arange(height, dtype=np.float64)[:, None]
    px = np.arange(width, dtype=np.float64)[None, :]
    inside = np.zeros((height, width), dtype=bool)
    rolled = np.roll(vertices, -1, axis=0)
    for (x0, y0), (x1, y1) in zip(vertices, rolled):
        if y0 == y1:  # horizontal edge never spans a scanline
            continue
        spans = (y0 > py) != (y1 > py)
        xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= spans & (px < xc)
    return inside.astype(np.uint8)
