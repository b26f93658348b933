"""Hard negative captions: one attribute swapped, everything else kept."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable

import numpy as np

from semani.corpus.scenes import EntitySpec, Scene
from semani.corpus.shapes import ATTRIBUTES

_FIELDS = tuple(ATTRIBUTES)


def swap_attribute(spec: EntitySpec, rng: np.random.Generator) -> EntitySpec:
    """Copy of spec with exactly one attribute changed to a different value."""
    field = _FIELDS[rng.integers(len(_FIELDS))]
    pool = [v for v in ATTRIBUTES[field] if v != getattr(spec, field)]
    return replace(spec, **{field: pool[rng.integers(len(pool))]})


def swapped_caption(scene: Scene, rng: np.random.Generator) -> str:
    """Scene caption with one attribute of one entity swapped."""
    phrases = [spec.caption_phrase() for spec, _ in scene.entities]
    k = int(rng.integers(len(phrases)))
    phrases[k] = swap_attribute(scene.entities[k][0], rng).caption_phrase()
    return " and ".join(phrases)


def _redraw(draw: Callable[[], str], taken: set[str]) -> str:
    # a swap can recreate a true caption in the batch, which would penalize a
    # correct pairing; redraw a few times, then keep (rare, softens one column)
    cap = draw()
    for _ in range(8):
        if cap not in taken:
            break
        cap = draw()
    return cap


def fresh_negatives(
    scene: Scene, count: int, rng: np.random.Generator, taken: set[str]
) -> list[str]:
    """Swapped scene captions avoiding captions already in the batch."""
    return [_redraw(lambda: swapped_caption(scene, rng), taken) for _ in range(count)]


def fresh_phrase_negatives(
    spec: EntitySpec, count: int, rng: np.random.Generator, taken: set[str]
) -> list[str]:
    """Swapped single-entity phrases avoiding phrases already in the batch."""
    return [
        _redraw(lambda: swap_attribute(spec, rng).caption_phrase(), taken)
        for _ in range(count)
    ]
