from semani.align.engine import AlignEngine, AlignmentResult, PAPER_THETA
from semani.align.masks import mask_iou, mask_to_tokens, resolve_overlaps, tokens_to_pixels
from semani.align.providers import PROVIDERS, segment
from semani.align.scoring import (
    score_global,
    score_tokenwise,
    select_argmax,
    select_threshold,
)
from semani.align.segmenter import SegmenterCheckpoint, SegmenterModel, train_segmenter

__all__ = [
    "AlignEngine",
    "AlignmentResult",
    "PAPER_THETA",
    "PROVIDERS",
    "SegmenterCheckpoint",
    "SegmenterModel",
    "mask_iou",
    "mask_to_tokens",
    "resolve_overlaps",
    "score_global",
    "score_tokenwise",
    "segment",
    "select_argmax",
    "select_threshold",
    "tokens_to_pixels",
    "train_segmenter",
]
