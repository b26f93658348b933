"""Alignment pipeline: segment, project, score, select."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from semani.align.masks import mask_to_tokens
from semani.align.providers import segment
from semani.align.scoring import (
    PhraseBank,
    attribute_constraints,
    score_global,
    score_global_margin,
    score_tokenwise,
    select_argmax,
    select_threshold,
)
from semani.align.segmenter import SegmenterCheckpoint
from semani.cliplite.model import ClipCheckpoint
from semani.cliplite.prompt import MaskPrompt
from semani.corpus.scenes import Scene
from semani.errors import ConfigurationError

# paper-reported threshold for the original backbone; engines trained here
# recalibrate on validation and carry their own default
PAPER_THETA = 0.163

SCORINGS = ("tokenwise", "global")
MODES = ("threshold", "argmax")


@dataclass
class AlignmentResult:
    masks: list[np.ndarray]  # pixel masks, area-descending
    token_masks: list[np.ndarray]
    scores: list[float]
    selected: list[int]
    mode: str
    scoring: str
    status: str = "ok"  # "ok" | "no_entity_matched"
    theta: float | None = None

    def selected_mask(self) -> np.ndarray:
        out = np.zeros_like(self.masks[0])
        for i in self.selected:
            out |= self.masks[i]
        return out

    def selected_token_mask(self) -> np.ndarray:
        out = np.zeros_like(self.token_masks[0])
        for i in self.selected:
            out |= self.token_masks[i]
        return out

    def to_json(self) -> dict:
        return {
            "scores": [float(s) for s in self.scores],
            "selected": list(self.selected),
            "mode": self.mode,
            "scoring": self.scoring,
            "status": self.status,
            "theta": self.theta,
        }


@dataclass
class AlignEngine:
    clip: ClipCheckpoint
    mask_prompt: MaskPrompt
    segmenter: SegmenterCheckpoint | None = None
    token_grid: int = 8
    theta: float = PAPER_THETA
    calls: int = field(default=0, init=False)  # instrumentation for mask-override audits
    _bank: PhraseBank | None = field(default=None, init=False, repr=False)

    def phrase_bank(self) -> PhraseBank:
        """Full-phrase text embeddings; built once, image-independent."""
        if self._bank is None:
            self._bank = PhraseBank(self.clip)
        return self._bank

    def align(
        self,
        image: np.ndarray,
        prompt: str,
        *,
        scoring: str = "global",
        mode: str = "argmax",
        provider: str = "connected_components",
        scene: Scene | None = None,
        theta: float | None = None,
    ) -> AlignmentResult:
        if scoring not in SCORINGS:
            raise ConfigurationError(f"unknown scoring {scoring!r}; expected one of {SCORINGS}")
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
        self.calls += 1

        masks = segment(image, provider, scene=scene, segmenter=self.segmenter)
        token_masks = [mask_to_tokens(m, self.token_grid, self.token_grid) for m in masks]
        if scoring == "tokenwise":
            scores = [
                score_tokenwise(image, tm, prompt, self.clip) for tm in token_masks
            ]
        else:
            constraints = attribute_constraints(prompt)
            if constraints:
                bank = self.phrase_bank()
                scores = [
                    score_global_margin(
                        image, m, constraints, self.clip, self.mask_prompt, bank
                    )
                    for m in masks
                ]
            else:
                scores = [
                    score_global(image, m, prompt, self.clip, self.mask_prompt)
                    for m in masks
                ]

        if mode == "argmax":
            selected = [select_argmax(scores)]
            used_theta = None
        else:
            used_theta = self.theta if theta is None else theta
            selected = select_threshold(scores, used_theta)
        return AlignmentResult(
            masks=masks,
            token_masks=token_masks,
            scores=scores,
            selected=selected,
            mode=mode,
            scoring=scoring,
            status="ok" if selected else "no_entity_matched",
            theta=used_theta,
        )
