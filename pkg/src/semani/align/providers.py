"""Entity segmentation providers.

All providers return pairwise-disjoint pixel masks sorted by area
(largest first); an image with no detected entity raises
EmptySegmentationError.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from semani.align.masks import resolve_overlaps
from semani.align.segmenter import SegmenterCheckpoint
from semani.corpus.scenes import Scene
from semani.errors import ConfigurationError, EmptySegmentationError

PROVIDERS = ("ground_truth", "connected_components", "learned")
MIN_COMPONENT_AREA = 8
COLOR_TOLERANCE = 0.08  # below half the closest entity/background distance

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def _components_to_masks(foreground: np.ndarray) -> list[np.ndarray]:
    labels, count = ndimage.label(foreground, structure=_EIGHT_CONNECTED)
    masks = []
    for k in range(1, count + 1):
        m = labels == k
        if m.sum() >= MIN_COMPONENT_AREA:
            masks.append(m.astype(np.uint8))
    if not masks:
        raise EmptySegmentationError("no entity found")
    masks = resolve_overlaps(masks)
    masks.sort(key=lambda m: -int(m.sum()))
    return masks


def segment_ground_truth(scene: Scene) -> list[np.ndarray]:
    masks = [mask.copy() for _, mask in scene.entities]
    masks = resolve_overlaps(masks)
    masks.sort(key=lambda m: -int(m.sum()))
    return masks


def segment_connected_components(image: np.ndarray) -> list[np.ndarray]:
    """Mode-color background model; exact on uniform backgrounds.

    Textured backgrounds need the learned provider; here the dominant
    color may cover only part of the background and components degrade.
    """
    image = np.asarray(image, dtype=np.float32)
    quantized = np.round(image * 512.0).astype(np.int32)
    flat = quantized.reshape(-1, 3)
    colors, counts = np.unique(flat, axis=0, return_counts=True)
    background = colors[counts.argmax()].astype(np.float32) / 512.0
    distance = np.linalg.norm(image - background, axis=2)
    return _components_to_masks(distance > COLOR_TOLERANCE)


def segment_learned(image: np.ndarray, segmenter: SegmenterCheckpoint) -> list[np.ndarray]:
    return _components_to_masks(segmenter.foreground(image) > 0)


def segment(
    image: np.ndarray,
    provider: str = "connected_components",
    *,
    scene: Scene | None = None,
    segmenter: SegmenterCheckpoint | None = None,
) -> list[np.ndarray]:
    if provider == "ground_truth":
        if scene is None:
            raise ConfigurationError("ground_truth provider needs the source Scene")
        return segment_ground_truth(scene)
    if provider == "connected_components":
        return segment_connected_components(image)
    if provider == "learned":
        if segmenter is None:
            raise ConfigurationError("learned provider needs a segmenter checkpoint")
        return segment_learned(image, segmenter)
    raise ConfigurationError(f"unknown provider {provider!r}; expected one of {PROVIDERS}")
