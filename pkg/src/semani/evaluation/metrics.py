"""Generation metrics: IS, CLIP-score, R@N, L2 error."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from semani.cliplite.model import ClipCheckpoint, cosine
from semani.errors import DomainError, ShapeMismatchError

EPS = 1e-12


def inception_score(
    images: np.ndarray,
    classifier: Callable[[np.ndarray], np.ndarray],
    splits: int = 4,
) -> tuple[float, float]:
    """exp(mean KL(p(y|x) || p(y))) per split; returns (mean, std).

    `classifier` maps (N, H, W, 3) images to (N, C) class posteriors; the
    marginal p(y) is computed within each split.
    """
    images = np.asarray(images)
    if splits < 1:
        raise DomainError(f"splits must be >= 1, got {splits}")
    if len(images) < 2 * splits:
        raise DomainError(f"need at least {2 * splits} images for {splits} splits")
    probs = np.asarray(classifier(images), dtype=np.float64)
    if probs.ndim != 2 or len(probs) != len(images):
        raise ShapeMismatchError(f"classifier returned {probs.shape} for {len(images)} images")

    scores = []
    for chunk in np.array_split(probs, splits):
        marginal = chunk.mean(axis=0, keepdims=True)
        kl = (chunk * (np.log(chunk + EPS) - np.log(marginal + EPS))).sum(axis=1)
        scores.append(float(np.exp(kl.mean())))
    return float(np.mean(scores)), float(np.std(scores))


def clip_score(
    images: np.ndarray, texts: Sequence[str], clip: ClipCheckpoint
) -> float:
    """Mean of 100 * cosine(image embedding, text embedding)."""
    images = np.asarray(images)
    if len(images) != len(texts):
        raise ShapeMismatchError(f"{len(images)} images vs {len(texts)} texts")
    if len(images) == 0:
        raise DomainError("clip_score over empty batch")
    vals = [
        100.0 * cosine(clip.embed_image(img), clip.embed_text(txt))
        for img, txt in zip(images, texts)
    ]
    return float(np.mean(vals))


def rank_of_positive(
    image: np.ndarray, positive: str, negatives: Sequence[str], clip: ClipCheckpoint
) -> int:
    """1-based rank of the positive among [positive] + negatives.

    Candidates sort by descending cosine; exact ties resolve by candidate
    order (positive first), matching a stable sort over (-score, index).
    """
    emb = clip.embed_image(image)
    scores = [cosine(emb, clip.embed_text(t)) for t in [positive, *negatives]]
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order.index(0) + 1


def recall_at_n(
    images: np.ndarray,
    positives: Sequence[str],
    negatives: Sequence[Sequence[str]],
    ns: Sequence[int],
    clip: ClipCheckpoint,
) -> dict[int, float]:
    """Fraction of images whose positive caption ranks in the top N."""
    if not (len(images) == len(positives) == len(negatives)):
        raise ShapeMismatchError(
            f"images/positives/negatives lengths differ: "
            f"{len(images)}/{len(positives)}/{len(negatives)}"
        )
    if len(images) == 0:
        raise DomainError("recall over empty batch")
    ranks = [
        rank_of_positive(img, pos, negs, clip)
        for img, pos, negs in zip(images, positives, negatives)
    ]
    return {int(n): float(np.mean([r <= n for r in ranks])) for n in ns}


def l2_error(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over images of the mean squared pixel difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"l2_error over {a.shape} vs {b.shape}")
    if a.size == 0:
        raise DomainError("l2_error over empty arrays")
    return float(np.mean((a - b) ** 2))
