from semani.cliplite.model import (
    ClipCheckpoint,
    ClipLiteModel,
    contrastive_loss,
    cosine,
    new_checkpoint,
)
from semani.cliplite.prompt import MaskPrompt, tune_mask_prompt
from semani.cliplite.train import ANCHOR_WORDS, token_labels, train_clip

__all__ = [
    "ANCHOR_WORDS",
    "ClipCheckpoint",
    "ClipLiteModel",
    "MaskPrompt",
    "contrastive_loss",
    "cosine",
    "new_checkpoint",
    "token_labels",
    "train_clip",
    "tune_mask_prompt",
]
