"""Per-segment cross-entropies and their weighted combination."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from semani.config import TransConfig
from semani.transgen.vocab import SequenceLayout


def segment_ce(logits: torch.Tensor, ids: torch.Tensor, seg: slice) -> torch.Tensor:
    """Mean CE of tokens in `seg`, each predicted from its predecessor.

    Position 0 is never a target; separators sit outside every segment, so
    they are never predicted either.
    """
    start = max(seg.start, 1)
    if start >= seg.stop:
        return logits.new_zeros(())
    pred = logits[:, start - 1 : seg.stop - 1]
    target = ids[:, start : seg.stop]
    return F.cross_entropy(pred.reshape(-1, logits.shape[-1]), target.reshape(-1))


def compute_losses(
    logits: torch.Tensor, ids: torch.Tensor, layout: SequenceLayout
) -> dict[str, torch.Tensor]:
    """{'img','gray','txt'} segment CEs for a full canonical sequence."""
    return {
        "img": segment_ce(logits, ids, layout.image_slice),
        "gray": segment_ce(logits, ids, layout.gray_slice),
        "txt": segment_ce(logits, ids, layout.text_slice),
    }


def total_loss(l_img, l_gray, l_txt, l_clip, config: TransConfig):
    """lambda-weighted sum; works on floats and on torch scalars alike."""
    return (
        config.lambda_img * l_img
        + config.lambda_gray * l_gray
        + config.lambda_txt * l_txt
        + config.lambda_clip * l_clip
    )
