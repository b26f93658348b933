"""Wire schemas for /v1; unknown fields are rejected everywhere."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SegmentRequest(StrictModel):
    image: str  # base64 PNG, decoded size capped at 1 MiB
    provider: Literal["connected_components", "learned"] = "connected_components"


class MaskView(StrictModel):
    id: int
    mask_ref: str
    png: str  # base64 PNG, 0/255 grayscale


class SegmentResponse(StrictModel):
    masks: list[MaskView]
    scores: None = None


class AlignRequest(StrictModel):
    image: str
    prompt: str = Field(min_length=1)
    mode: Literal["argmax", "threshold"] = "argmax"
    scoring: Literal["global", "tokenwise"] = "global"
    theta: float | None = None
    provider: Literal["connected_components", "learned"] = "connected_components"


class AlignResponse(StrictModel):
    masks: list[MaskView]
    scores: list[float]
    selected: list[int]
    mode: str
    scoring: str
    status: str
    theta: float | None


class ManipulateParams(StrictModel):
    seed: int = 0
    # denoising path
    steps: int = Field(default=50, ge=1, le=1000)
    guidance: float = Field(default=9.0, ge=0.0)
    eta: float = Field(default=0.0, ge=0.0, le=1.0)
    # token path
    temperature: float = Field(default=1.0, gt=0.0)
    top_k: int = Field(default=32, ge=1)
    use_gray: bool = False


class ManipulateRequest(StrictModel):
    image: str
    text: str = Field(min_length=1)
    method: Literal["trans", "diff"]
    prompt: str | None = Field(default=None, min_length=1)
    mask_ref: str | None = None
    scoring: Literal["global", "tokenwise"] = "global"
    params: ManipulateParams = ManipulateParams()

    @model_validator(mode="after")
    def _one_mask_source(self) -> "ManipulateRequest":
        if (self.prompt is None) == (self.mask_ref is None):
            raise ValueError("exactly one of prompt or mask_ref is required")
        return self


class ManipulateAccepted(StrictModel):
    job_id: str


class CountersResponse(StrictModel):
    align_calls: int
    segment_calls: int
    manipulate_jobs: int
