"""Procedural shapes corpus: scenes, captions, masks, tokenization."""

from semani.corpus.manifest import SplitManifest, build_dataset, load_manifest
from semani.corpus.scenes import EntitySpec, Scene, generate_scene, render_background, to_grayscale
from semani.corpus.text import TextTokens, Vocabulary
from semani.corpus import shapes

__all__ = [
    "EntitySpec",
    "Scene",
    "SplitManifest",
    "TextTokens",
    "Vocabulary",
    "build_dataset",
    "generate_scene",
    "load_manifest",
    "render_background",
    "shapes",
    "to_grayscale",
]
