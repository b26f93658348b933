"""Unified token vocabulary and sequence layout for the AR generator.

One flat id space: text ids first, image codebook ids offset after them,
then the two separators. A sequence reads

    [BOV] V(gray tokens) [BOT] T(text) I(image tokens)

with the [BOV] V block present only when vision guidance is on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from semani.errors import DomainError, ShapeMismatchError


@dataclass(frozen=True)
class UnifiedVocab:
    text_size: int
    codebook_size: int

    @property
    def size(self) -> int:
        return self.text_size + self.codebook_size + 2

    @property
    def bov(self) -> int:
        return self.text_size + self.codebook_size

    @property
    def bot(self) -> int:
        return self.text_size + self.codebook_size + 1

    def image_ids(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens)
        if tokens.size and (tokens.min() < 0 or tokens.max() >= self.codebook_size):
            raise DomainError(f"image token outside [0, {self.codebook_size})")
        return tokens + self.text_size

    def to_image_tokens(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (
            ids.min() < self.text_size or ids.max() >= self.text_size + self.codebook_size
        ):
            raise DomainError("id outside the image-token band")
        return ids - self.text_size


@dataclass(frozen=True)
class SequenceLayout:
    """Index arithmetic for the canonical sequence structure."""

    l_max: int
    n_cells: int  # h*w image (and gray) tokens
    has_gray: bool

    @property
    def length(self) -> int:
        base = 1 + self.l_max + self.n_cells  # [BOT] T I
        return base + (1 + self.n_cells if self.has_gray else 0)

    @property
    def gray_slice(self) -> slice:
        if not self.has_gray:
            return slice(0, 0)
        return slice(1, 1 + self.n_cells)

    @property
    def bot_index(self) -> int:
        return 1 + self.n_cells if self.has_gray else 0

    @property
    def text_slice(self) -> slice:
        start = self.bot_index + 1
        return slice(start, start + self.l_max)

    @property
    def image_slice(self) -> slice:
        start = self.text_slice.stop
        return slice(start, start + self.n_cells)


def build_sequence(
    vocab: UnifiedVocab,
    layout: SequenceLayout,
    text_ids: np.ndarray,
    image_tokens: np.ndarray | None = None,
    gray_tokens: np.ndarray | None = None,
) -> np.ndarray:
    """Assemble ids; image omitted -> sequence stops at the image boundary."""
    text_ids = np.asarray(text_ids, dtype=np.int64)
    if text_ids.shape != (layout.l_max,):
        raise ShapeMismatchError(f"text ids {text_ids.shape} != ({layout.l_max},)")
    if text_ids.min() < 0 or text_ids.max() >= vocab.text_size:
        raise DomainError(f"text id outside [0, {vocab.text_size})")
    if layout.has_gray != (gray_tokens is not None):
        raise ShapeMismatchError("layout.has_gray disagrees with gray_tokens argument")

    parts: list[np.ndarray] = []
    if gray_tokens is not None:
        gray_tokens = np.asarray(gray_tokens).reshape(-1)
        if gray_tokens.shape != (layout.n_cells,):
            raise ShapeMismatchError(f"gray tokens {gray_tokens.shape} != ({layout.n_cells},)")
        parts.append(np.array([vocab.bov], dtype=np.int64))
        parts.append(vocab.image_ids(gray_tokens).astype(np.int64))
    parts.append(np.array([vocab.bot], dtype=np.int64))
    parts.append(text_ids)
    if image_tokens is not None:
        image_tokens = np.asarray(image_tokens).reshape(-1)
        if image_tokens.shape != (layout.n_cells,):
            raise ShapeMismatchError(f"image tokens {image_tokens.shape} != ({layout.n_cells},)")
        parts.append(vocab.image_ids(image_tokens).astype(np.int64))
    return np.concatenate(parts)
