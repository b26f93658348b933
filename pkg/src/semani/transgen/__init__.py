from semani.transgen.generate import (
    decode_image,
    manipulate,
    manipulate_batch,
    next_token_logits,
    sequence_log_prob,
)
from semani.transgen.losses import compute_losses, segment_ce, total_loss
from semani.transgen.model import TransCheckpoint, TransGenModel, new_model
from semani.transgen.train import tokenize_split, train_transgen
from semani.transgen.vocab import SequenceLayout, UnifiedVocab, build_sequence

__all__ = [
    "SequenceLayout",
    "TransCheckpoint",
    "TransGenModel",
    "UnifiedVocab",
    "build_sequence",
    "compute_losses",
    "decode_image",
    "manipulate",
    "manipulate_batch",
    "new_model",
    "next_token_logits",
    "segment_ce",
    "sequence_log_prob",
    "tokenize_split",
    "total_loss",
    "train_transgen",
]
