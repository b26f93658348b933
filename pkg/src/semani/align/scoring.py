"""Entity-vs-prompt scoring and selection rules."""

from __future__ import annotations

from itertools import product

import numpy as np

from semani.cliplite.model import ClipCheckpoint, cosine
from semani.cliplite.prompt import MaskPrompt
from semani.corpus.scenes import entity_phrase
from semani.corpus.shapes import ATTRIBUTES
from semani.corpus.text import TextTokens
from semani.errors import DomainError


def attribute_constraints(prompt: str) -> dict[str, str]:
    """Attribute words found in the prompt, keyed by category; later words win."""
    out: dict[str, str] = {}
    for word in prompt.lower().split():
        for category, pool in ATTRIBUTES.items():
            if word in pool:
                out[category] = word
    return out


class PhraseBank:
    """Embeddings of every full entity phrase, computed once per backbone.

    Short prompts ("circle", "red square") underdetermine the caption the
    text tower was trained on. Scoring against full phrases instead keeps
    the text in-distribution: an entity matches a prompt when some phrase
    consistent with the prompt outscores every inconsistent one.
    """

    def __init__(self, clip: ClipCheckpoint):
        combos = list(product(*ATTRIBUTES.values()))
        self.attributes: list[dict[str, str]] = [dict(zip(ATTRIBUTES, c)) for c in combos]
        self.phrases = [entity_phrase(**a) for a in self.attributes]
        self.matrix = np.stack([clip.embed_text(p) for p in self.phrases])  # (N, d)

    def consistent(self, constraints: dict[str, str]) -> np.ndarray:
        """(N,) bool: phrases agreeing with every constrained category."""
        return np.array(
            [all(a[k] == v for k, v in constraints.items()) for a in self.attributes]
        )

    def margin(self, image_emb: np.ndarray, constraints: dict[str, str]) -> float:
        """Best consistent-phrase cosine minus best inconsistent-phrase cosine."""
        keep = self.consistent(constraints)
        if keep.all() or not keep.any():
            raise DomainError("constraints must split the phrase set")
        sims = self.matrix @ np.asarray(image_emb)
        return float(sims[keep].max() - sims[~keep].max())


def score_tokenwise(
    image: np.ndarray,
    token_mask: np.ndarray,
    prompt: TextTokens | str,
    clip: ClipCheckpoint,
) -> float:
    """Mean cosine between masked token-cell embeddings and the prompt."""
    cells = np.asarray(token_mask) > 0
    if not cells.any():
        raise DomainError("token mask selects no cells")
    grid = clip.embed_tokens(image)  # (h, w, d), unit rows
    text = clip.embed_text(prompt)
    sims = [cosine(grid[i, j], text) for i, j in zip(*np.nonzero(cells))]
    return float(np.mean(sims))


def score_global(
    image: np.ndarray,
    mask: np.ndarray,
    prompt: TextTokens | str,
    clip: ClipCheckpoint,
    mask_prompt: MaskPrompt,
) -> float:
    """Cosine between the prompt and the masked-composite embedding."""
    composite = mask_prompt.apply(image, mask)
    return cosine(clip.embed_image(composite), clip.embed_text(prompt))


def score_global_margin(
    image: np.ndarray,
    mask: np.ndarray,
    constraints: dict[str, str],
    clip: ClipCheckpoint,
    mask_prompt: MaskPrompt,
    bank: PhraseBank,
) -> float:
    """Phrase-bank margin of the masked-composite embedding."""
    composite = mask_prompt.apply(image, mask)
    return bank.margin(clip.embed_image(composite), constraints)


def select_threshold(scores: list[float], theta: float) -> list[int]:
    """Indices scoring strictly above theta; may be empty (-inf selects all)."""
    if np.isnan(theta):
        raise DomainError("threshold must not be NaN")
    return [i for i, s in enumerate(scores) if s > theta]


def select_argmax(scores: list[float]) -> int:
    """Index of the maximum score; ties break to the lowest index."""
    if len(scores) == 0:
        raise DomainError("cannot select from empty score list")
    return int(np.argmax(np.asarray(scores)))
