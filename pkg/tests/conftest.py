"""Shared fixtures: small datasets, briefly-trained models, desk-run artifacts."""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from semani.config import (
    ClassifierConfig,
    ClipConfig,
    DataConfig,
    DiffConfig,
    MaskPromptConfig,
    SegmenterConfig,
    TransConfig,
    VqaeConfig,
)
from semani.corpus.manifest import build_dataset

# artifacts of the full desk-scale run; e2e tests skip when absent
DESK_RUN = Path(os.environ.get("SEMANI_RUN", Path(__file__).resolve().parents[1] / "run"))


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """120 scenes, in memory plus on disk; enough variety for every split."""
    out = tmp_path_factory.mktemp("tiny_data")
    return build_dataset(120, 0, DataConfig(), out_dir=out)


@pytest.fixture(scope="session")
def micro_home(tmp_path_factory, tiny_manifest):
    """Run directory whose models trained just long enough to exercise APIs.

    Nothing here is expected to produce good images; service and CLI tests
    only need loadable checkpoints with the right shapes.
    """
    from semani.align.segmenter import train_segmenter
    from semani.cliplite.prompt import tune_mask_prompt
    from semani.cliplite.train import train_clip
    from semani.corpus.manifest import write_manifest
    from semani.diffgen.train import train_diffgen
    from semani.evaluation.classifier import train_classifier
    from semani.transgen.train import train_transgen
    from semani.vqae.train import train_vqae
    from semani.service.registry import ModelRegistry

    home = tmp_path_factory.mktemp("micro_home")
    write_manifest(tiny_manifest, home / "data")
    ck = home / "checkpoints"
    ck.mkdir()
    m = tiny_manifest
    train_vqae(m, VqaeConfig(steps=40, batch_size=8), ck / "vqae.pt", log_every=0)
    train_clip(m, ClipConfig(steps=40, batch_size=8), ck / "cliplite.pt", log_every=0)
    reg = ModelRegistry(home)
    tune_mask_prompt(
        m, reg.cliplite, MaskPromptConfig(steps=10, batch_size=8), ck / "mask_prompt.pt", log_every=0
    )
    train_segmenter(m, SegmenterConfig(steps=15, batch_size=8), ck / "segmenter.pt", log_every=0)
    train_classifier(m, ClassifierConfig(steps=20, batch_size=16), ck / "classifier.pt", log_every=0)
    train_transgen(
        m,
        reg.vqae,
        reg.cliplite,
        TransConfig(steps=8, batch_size=4, warmup_steps=2),
        ck / "transgen.pt",
        log_every=0,
    )
    train_diffgen(m, DiffConfig(steps=8, batch_size=4), ck / "diffgen.pt", log_every=0)
    return home


@pytest.fixture(scope="session")
def micro_registry(micro_home):
    from semani.service.registry import ModelRegistry

    return ModelRegistry(micro_home)


def require_desk_run(*relative: str) -> Path:
    """Skip the calling test when the desk-scale run has not been produced."""
    missing = [r for r in relative if not (DESK_RUN / r).exists()]
    if missing:
        pytest.skip(
            f"desk-run artifact(s) missing under {DESK_RUN}: {', '.join(missing)}; "
            "produce them with: semani pipeline --home run"
        )
    return DESK_RUN
