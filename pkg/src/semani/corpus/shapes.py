"""Closed vocabularies and rasterization for the shapes corpus.

Shapes are drawn at integer pixel centers; circles and squares have
analytic inside tests, triangles and stars go through the polygon kernel.
"""

from __future__ import annotations

import math

import numpy as np

from semani import kernels

SHAPES = ("circle", "square", "triangle", "star")
SIZES = ("small", "large")
TEXTURES = ("solid", "striped")

# saturated palette; no pure grays so entities separate from the backgrounds
COLORS = {
    "red": (0.85, 0.10, 0.10),
    "green": (0.10, 0.70, 0.15),
    "blue": (0.15, 0.25, 0.90),
    "yellow": (0.95, 0.85, 0.10),
    "cyan": (0.10, 0.80, 0.85),
    "magenta": (0.85, 0.15, 0.80),
    "orange": (0.95, 0.55, 0.10),
    "pink": (0.95, 0.65, 0.75),
}
COLOR_NAMES = tuple(COLORS)

# caption word order: "a {size} {color} {texture} {shape}"
ATTRIBUTES: dict[str, tuple[str, ...]] = {
    "size": SIZES,
    "color": COLOR_NAMES,
    "texture": TEXTURES,
    "shape": SHAPES,
}

SIZE_RADIUS = {"small": 6.0, "large": 9.0}
STRIPE_PERIOD = 3  # rows per stripe band
STRIPE_DARKEN = 0.55


def _star_vertices(cx: float, cy: float, radius: float) -> np.ndarray:
    pts = []
    for k in range(10):
        r = radius if k % 2 == 0 else radius * 0.45
        theta = -math.pi / 2 + k * math.pi / 5
        pts.append((cx + r * math.cos(theta), cy + r * math.sin(theta)))
    return np.asarray(pts, dtype=np.float64)


def _triangle_vertices(cx: float, cy: float, radius: float) -> np.ndarray:
    pts = []
    for k in range(3):
        theta = -math.pi / 2 + k * 2 * math.pi / 3
        pts.append((cx + radius * math.cos(theta), cy + radius * math.sin(theta)))
    return np.asarray(pts, dtype=np.float64)


def rasterize_shape(shape: str, cx: float, cy: float, radius: float, height: int, width: int) -> np.ndarray:
    """Binary (H, W) mask of the shape; pixel (r, c) has center (c, r)."""
    if shape == "circle":
        yy, xx = np.mgrid[0:height, 0:width]
        return (((xx - cx) ** 2 + (yy - cy) ** 2) <= radius**2).astype(np.uint8)
    if shape == "square":
        yy, xx = np.mgrid[0:height, 0:width]
        half = radius * 0.9
        return ((np.abs(xx - cx) <= half) & (np.abs(yy - cy) <= half)).astype(np.uint8)
    if shape == "triangle":
        return kernels.polygon_fill(_triangle_vertices(cx, cy, radius * 1.15), height, width)
    if shape == "star":
        return kernels.polygon_fill(_star_vertices(cx, cy, radius * 1.1), height, width)
    raise ValueError(f"unknown shape {shape!r}")


def paint_entity(image: np.ndarray, mask: np.ndarray, color_name: str, texture: str) -> None:
    """Fill ``mask`` pixels of ``image`` in place with the entity's texture."""
    color = np.asarray(COLORS[color_name], dtype=np.float32)
    rows = np.nonzero(mask)
    values = np.tile(color, (rows[0].size, 1))
    if texture == "striped":
        dark = (rows[0] // STRIPE_PERIOD) % 2 == 1
        values[dark] *= STRIPE_DARKEN
    image[rows[0], rows[1]] = values
