"""Configuration dataclasses and the canonical config hash.

Every trainable stage owns one config; checkpoints record the hash of the
config they were produced with so downstream runs can detect mismatches.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from semani.errors import ConfigurationError


@dataclass(frozen=True)
class DataConfig:
    """Procedural shapes-corpus parameters."""

    resolution: int = 64
    downsample: int = 8
    grid: int = 3
    min_entities: int = 1
    max_entities: int = 3
    background_ids: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    l_max: int = 32

    @classmethod
    def from_dict(cls, data: dict) -> "DataConfig":
        data = dict(data)
        data["background_ids"] = tuple(data["background_ids"])
        return cls(**data)

    def validate(self) -> None:
        if self.resolution <= 0 or self.resolution % self.downsample != 0:
            raise ConfigurationError(
                f"resolution {self.resolution} not divisible by downsample {self.downsample}"
            )
        if self.min_entities < 1:
            raise ConfigurationError("scenes need at least one entity")
        if self.max_entities < self.min_entities:
            raise ConfigurationError("max_entities < min_entities")
        if self.max_entities > self.grid * self.grid:
            raise ConfigurationError("more entities than grid cells")
        if not self.background_ids:
            raise ConfigurationError("at least one background style required")


@dataclass(frozen=True)
class VqaeConfig:
    codebook_size: int = 256
    latent_dim: int = 16
    downsample: int = 8
    base_channels: int = 32
    commitment_weight: float = 0.25
    steps: int = 2500
    batch_size: int = 32
    lr: float = 2e-3
    reseed_interval: int = 250
    seed: int = 0


@dataclass(frozen=True)
class ClipConfig:
    embed_dim: int = 128
    patch: int = 8
    width: int = 96
    text_width: int = 96
    logit_scale_init: float = 14.285714285714286  # 1/0.07
    token_loss_weight: float = 0.5
    hard_negatives: int = 4
    steps: int = 2500
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class MaskPromptConfig:
    steps: int = 600
    batch_size: int = 64
    hard_negatives: int = 4
    lr: float = 5e-2
    seed: int = 0


@dataclass(frozen=True)
class SegmenterConfig:
    base_channels: int = 24
    steps: int = 1200
    batch_size: int = 16
    lr: float = 2e-3
    seed: int = 0


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 1.0
    top_k: int = 32
    seed: int = 0

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.top_k < 1:
            raise ConfigurationError("top_k must be >= 1")


@dataclass(frozen=True)
class TransConfig:
    lambda_img: float = 7.0 / 9.0
    lambda_gray: float = 1.0 / 9.0
    lambda_txt: float = 1.0 / 9.0
    lambda_clip: float = 5.0
    layers: int = 6
    heads: int = 8
    head_dim: int = 32
    ffn_dim: int = 512
    vision_guidance_rate: float = 0.5
    decode: DecodeParams = field(default_factory=DecodeParams)
    steps: int = 5000
    batch_size: int = 16
    lr: float = 4e-4
    warmup_steps: int = 300
    clip_loss_interval: int = 4
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "TransConfig":
        data = dict(data)
        data["decode"] = DecodeParams(**data["decode"])
        return cls(**data)

    def validate(self) -> None:
        for name in ("lambda_img", "lambda_gray", "lambda_txt", "lambda_clip"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if not 0.0 <= self.vision_guidance_rate <= 1.0:
            raise ConfigurationError("vision_guidance_rate must be in [0,1]")
        self.decode.validate()


@dataclass(frozen=True)
class SamplerParams:
    ddim_steps: int = 50
    guidance_scale: float = 9.0
    eta: float = 0.0
    seed: int = 0

    def validate(self, total_steps: int) -> None:
        if not 1 <= self.ddim_steps <= total_steps:
            raise ConfigurationError(
                f"ddim_steps must be in [1, {total_steps}], got {self.ddim_steps}"
            )
        if self.guidance_scale < 0:
            raise ConfigurationError("guidance_scale must be >= 0")


@dataclass(frozen=True)
class DiffConfig:
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 3)
    text_width: int = 128
    condition_dropout: float = 0.1
    sampler: SamplerParams = field(default_factory=SamplerParams)
    steps: int = 7000
    batch_size: int = 12
    lr: float = 2e-4
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "DiffConfig":
        data = dict(data)
        data["channel_mults"] = tuple(data["channel_mults"])
        data["sampler"] = SamplerParams(**data["sampler"])
        return cls(**data)


@dataclass(frozen=True)
class ClassifierConfig:
    base_channels: int = 32
    steps: int = 1500
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    n_scenes: int = 96
    negatives: int = 99
    recall_ns: tuple[int, ...] = (1, 5, 10)
    is_splits: int = 4
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        data = dict(data)
        data["recall_ns"] = tuple(data["recall_ns"])
        return cls(**data)


def config_dict(cfg) -> dict:
    """Canonical plain-dict view of a (possibly nested) config dataclass."""
    return dataclasses.asdict(cfg)


def config_hash(cfg) -> str:
    payload = json.dumps(
        {"type": type(cfg).__name__, "fields": config_dict(cfg)},
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
