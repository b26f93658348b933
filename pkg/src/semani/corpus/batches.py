"""Seeded scene sampling for training loops.

Scenes are rendered on demand from split seeds; nothing is cached to disk,
so samplers stay deterministic for a given (manifest, split, seed).
"""

from __future__ import annotations

import numpy as np

from semani.corpus.manifest import SplitManifest
from semani.corpus.scenes import Scene, generate_scene
from semani.errors import ConfigurationError


class SceneSampler:
    def __init__(self, manifest: SplitManifest, split: str, seed: int):
        if split not in manifest.splits or not manifest.splits[split]:
            raise ConfigurationError(f"split {split!r} missing or empty")
        self.manifest = manifest
        self.seeds = manifest.splits[split]
        self.rng = np.random.default_rng(seed)

    def batch(self, n: int) -> list[Scene]:
        idx = self.rng.integers(0, len(self.seeds), size=n)
        return [generate_scene(self.seeds[i], self.manifest.config) for i in idx]


def images_array(scenes: list[Scene]) -> np.ndarray:
    """(B, H, W, 3) float32 stack of scene images."""
    return np.stack([s.image for s in scenes])
