from semani.vqae.model import VqaeCheckpoint, VqaeModel, new_checkpoint, quantize
from semani.vqae.train import train_vqae

__all__ = ["VqaeCheckpoint", "VqaeModel", "new_checkpoint", "quantize", "train_vqae"]
