"""Named checkpoints under a run directory, loaded lazily and cached."""

from __future__ import annotations

import json
import os
from pathlib import Path

from semani.align.engine import AlignEngine
from semani.align.segmenter import SegmenterCheckpoint
from semani.cliplite.model import ClipCheckpoint
from semani.cliplite.prompt import MaskPrompt
from semani.corpus.manifest import SplitManifest, load_manifest
from semani.corpus.text import Vocabulary
from semani.diffgen.model import DiffCheckpoint
from semani.errors import ConfigurationError
from semani.evaluation.classifier import ClassifierCheckpoint
from semani.numerics import flush_subnormals
from semani.storage import file_sha256
from semani.transgen.model import TransCheckpoint
from semani.vqae.model import VqaeCheckpoint

CHECKPOINT_NAMES = (
    "vqae",
    "cliplite",
    "mask_prompt",
    "segmenter",
    "transgen",
    "diffgen",
    "classifier",
)

_LOADERS = {
    "vqae": VqaeCheckpoint.load,
    "cliplite": ClipCheckpoint.load,
    "mask_prompt": MaskPrompt.load,
    "segmenter": SegmenterCheckpoint.load,
    "transgen": TransCheckpoint.load,
    "diffgen": DiffCheckpoint.load,
    "classifier": ClassifierCheckpoint.load,
}

# CLI train stage that produces each checkpoint, for actionable errors
TRAIN_STAGES = {
    "vqae": "vqae",
    "cliplite": "clip",
    "mask_prompt": "maskprompt",
    "segmenter": "segmenter",
    "transgen": "trans",
    "diffgen": "diff",
    "classifier": "classifier",
}


def resolve_home(home: str | Path | None = None) -> Path:
    """Run directory from the argument or the SEMANI_HOME env var."""
    if home is None or home == "":
        home = os.environ.get("SEMANI_HOME", "")
    if not home:
        raise ConfigurationError("no run directory: pass --home or set SEMANI_HOME")
    return Path(home)


class ModelRegistry:
    """Read-only view of one run directory's checkpoints and dataset."""

    def __init__(self, home: str | Path) -> None:
        flush_subnormals()  # inference shares the trainers' numeric environment
        self.home = Path(home)
        self._cache: dict[str, object] = {}
        self._hashes: dict[str, str] = {}
        self._manifest: SplitManifest | None = None

    def checkpoint_path(self, name: str) -> Path:
        if name not in CHECKPOINT_NAMES:
            raise ConfigurationError(f"unknown checkpoint name {name!r}")
        return self.home / "checkpoints" / f"{name}.pt"

    @property
    def data_dir(self) -> Path:
        return self.home / "data"

    @property
    def reports_dir(self) -> Path:
        return self.home / "reports"

    def missing(self, names) -> list[str]:
        return [n for n in names if not self.checkpoint_path(n).exists()]

    def require(self, *names: str) -> None:
        missing = self.missing(names)
        if missing:
            fixes = "; ".join(f"semani train {TRAIN_STAGES[n]}" for n in missing)
            raise ConfigurationError(
                f"missing checkpoint(s) {', '.join(missing)}; run: {fixes}"
            )

    def get(self, name: str):
        if name not in self._cache:
            self.require(name)
            self._cache[name] = _LOADERS[name](self.checkpoint_path(name))
        return self._cache[name]

    @property
    def vqae(self) -> VqaeCheckpoint:
        return self.get("vqae")

    @property
    def cliplite(self) -> ClipCheckpoint:
        return self.get("cliplite")

    @property
    def mask_prompt(self) -> MaskPrompt:
        return self.get("mask_prompt")

    @property
    def segmenter(self) -> SegmenterCheckpoint:
        return self.get("segmenter")

    @property
    def transgen(self) -> TransCheckpoint:
        return self.get("transgen")

    @property
    def diffgen(self) -> DiffCheckpoint:
        return self.get("diffgen")

    @property
    def classifier(self) -> ClassifierCheckpoint:
        return self.get("classifier")

    def has_dataset(self) -> bool:
        return all((self.data_dir / f"{s}.json").exists() for s in ("train", "val", "test"))

    @property
    def manifest(self) -> SplitManifest:
        if self._manifest is None:
            if not self.has_dataset():
                raise ConfigurationError(
                    f"no dataset under {self.data_dir}; run: semani gen-data"
                )
            self._manifest = load_manifest(self.data_dir)
        return self._manifest

    @property
    def vocabulary(self) -> Vocabulary:
        """Tokenizer shared by every model of the run."""
        for name in ("cliplite", "diffgen"):
            if self.checkpoint_path(name).exists():
                return self.get(name).vocabulary
        return self.manifest.vocabulary

    def file_hash(self, name: str) -> str:
        if name not in self._hashes:
            self.require(name)
            self._hashes[name] = file_sha256(self.checkpoint_path(name))
        return self._hashes[name]

    def hashes(self, names=None) -> dict[str, str]:
        """sha256 of each present checkpoint file; identity for job results."""
        names = CHECKPOINT_NAMES if names is None else names
        return {n: self.file_hash(n) for n in names if self.checkpoint_path(n).exists()}

    def calibrated_theta(self) -> float | None:
        """Threshold fit on validation scenes, if the run recorded one."""
        path = self.reports_dir / "theta.json"
        if not path.exists():
            return None
        return float(json.loads(path.read_text())["theta"])

    def engine(self, theta: float | None = None) -> AlignEngine:
        """Alignment engine over this run's scoring models."""
        clip = self.cliplite
        mask_prompt = self.mask_prompt
        segmenter = (
            self.segmenter if self.checkpoint_path("segmenter").exists() else None
        )
        # canvas spans the full image, so it fixes the working resolution
        grid = mask_prompt.canvas.shape[0] // clip.config.patch
        if theta is None:
            theta = self.calibrated_theta()
        kwargs = {} if theta is None else {"theta": theta}
        return AlignEngine(
            clip=clip,
            mask_prompt=mask_prompt,
            segmenter=segmenter,
            token_grid=grid,
            **kwargs,
        )
