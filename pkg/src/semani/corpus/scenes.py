"""Scene generation: images, captions and exact per-entity masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from semani.config import DataConfig
from semani.corpus import shapes
from semani.errors import ConfigurationError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601 luma


def entity_phrase(size: str, color: str, texture: str, shape: str) -> str:
    """Canonical single-entity description used in captions and prompts."""
    return f"a {size} {color} {texture} {shape}"


@dataclass(frozen=True)
class EntitySpec:
    shape: str
    color: str
    size: str
    position: int  # grid cell index, raster order
    texture: str

    def caption_phrase(self) -> str:
        return entity_phrase(self.size, self.color, self.texture, self.shape)


@dataclass
class Scene:
    image: np.ndarray  # (H, W, 3) float32 in [0,1]
    caption: str
    entities: list[tuple[EntitySpec, np.ndarray]]  # (spec, uint8 mask)
    background_id: int
    seed: int

    @property
    def masks(self) -> list[np.ndarray]:
        return [mask for _, mask in self.entities]


def render_background(background_id: int, height: int, width: int) -> np.ndarray:
    """Deterministic background styles; ids 0-1 are solid fills."""
    img = np.empty((height, width, 3), dtype=np.float32)
    if background_id == 0:
        img[:] = 0.50
    elif background_id == 1:
        img[:] = (0.42, 0.46, 0.52)
    elif background_id == 2:
        ramp = np.linspace(0.30, 0.62, width, dtype=np.float32)
        img[:] = ramp[None, :, None]
    elif background_id == 3:
        ramp = np.linspace(0.62, 0.30, height, dtype=np.float32)
        img[:] = ramp[:, None, None]
    elif background_id == 4:
        yy, xx = np.mgrid[0:height, 0:width]
        board = ((yy // 8 + xx // 8) % 2).astype(np.float32)
        img[:] = (0.44 + 0.12 * board)[:, :, None]
    elif background_id == 5:
        yy, xx = np.mgrid[0:height, 0:width]
        ramp = ((yy + xx) / (height + width - 2)).astype(np.float32)
        img[..., 0] = 0.34 + 0.22 * ramp
        img[..., 1] = 0.38 + 0.18 * ramp
        img[..., 2] = 0.46 + 0.14 * ramp
    else:
        raise ConfigurationError(f"unknown background id {background_id}")
    return img


def _cell_center(cell: int, grid: int, height: int, width: int) -> tuple[float, float]:
    row, col = divmod(cell, grid)
    return (col + 0.5) * width / grid, (row + 0.5) * height / grid


def generate_scene(seed: int, config: DataConfig) -> Scene:
    """Deterministic scene for (seed, config); masks are exactly the painted pixels."""
    config.validate()
    limit = min(len(shapes.SHAPES), len(shapes.COLOR_NAMES))
    if config.max_entities > limit:
        raise ConfigurationError(
            f"max_entities {config.max_entities} exceeds distinct shape/color budget {limit}"
        )

    rng = np.random.default_rng(seed)
    n = int(rng.integers(config.min_entities, config.max_entities + 1))
    cells = sorted(int(c) for c in rng.choice(config.grid**2, size=n, replace=False))
    shape_picks = rng.choice(len(shapes.SHAPES), size=n, replace=False)
    color_picks = rng.choice(len(shapes.COLOR_NAMES), size=n, replace=False)
    size_picks = rng.integers(0, len(shapes.SIZES), size=n)
    texture_picks = rng.integers(0, len(shapes.TEXTURES), size=n)
    background_id = int(rng.choice(np.asarray(config.background_ids)))

    height = width = config.resolution
    image = render_background(background_id, height, width)
    entities: list[tuple[EntitySpec, np.ndarray]] = []
    for i, cell in enumerate(cells):
        spec = EntitySpec(
            shape=shapes.SHAPES[int(shape_picks[i])],
            color=shapes.COLOR_NAMES[int(color_picks[i])],
            size=shapes.SIZES[int(size_picks[i])],
            position=cell,
            texture=shapes.TEXTURES[int(texture_picks[i])],
        )
        cx, cy = _cell_center(cell, config.grid, height, width)
        mask = shapes.rasterize_shape(
            spec.shape, cx, cy, shapes.SIZE_RADIUS[spec.size], height, width
        )
        shapes.paint_entity(image, mask, spec.color, spec.texture)
        entities.append((spec, mask))

    for i in range(len(entities)):
        if entities[i][1].sum() == 0:
            raise AssertionError("empty entity mask")
        for j in range(i + 1, len(entities)):
            if (entities[i][1] & entities[j][1]).any():
                raise AssertionError("overlapping entity masks")

    caption = " and ".join(spec.caption_phrase() for spec, _ in entities)
    return Scene(image=image, caption=caption, entities=entities, background_id=background_id, seed=seed)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale, replicated to 3 channels."""
    image = np.asarray(image, dtype=np.float32)
    luma = (
        GRAY_WEIGHTS[0] * image[..., 0]
        + GRAY_WEIGHTS[1] * image[..., 1]
        + GRAY_WEIGHTS[2] * image[..., 2]
    )
    return np.repeat(luma[..., None], 3, axis=2)
