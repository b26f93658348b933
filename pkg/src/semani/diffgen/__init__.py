from semani.diffgen.manipulate import manipulate, manipulate_batch
from semani.diffgen.model import DenoiserUNet, DiffCheckpoint, new_checkpoint
from semani.diffgen.sampler import cfg, composite, ddim_sample, ddim_timesteps
from semani.diffgen.schedule import NoiseSchedule, make_schedule
from semani.diffgen.train import train_diffgen

__all__ = [
    "DenoiserUNet",
    "DiffCheckpoint",
    "NoiseSchedule",
    "cfg",
    "composite",
    "ddim_sample",
    "ddim_timesteps",
    "make_schedule",
    "manipulate",
    "manipulate_batch",
    "new_checkpoint",
    "train_diffgen",
]
