"""Dataset manifests: splits carry scene seeds, never pixels."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from semani.config import DataConfig, config_dict, config_hash
from semani.corpus.scenes import Scene, generate_scene
from semani.corpus.text import Vocabulary
from semani.errors import ConfigurationError, StorageError

MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")


@dataclass
class SplitManifest:
    version: int
    n: int
    seed: int
    config: DataConfig
    config_hash: str
    splits: dict[str, list[int]]  # split name -> scene seeds
    vocabulary: Vocabulary

    def scenes(self, split: str) -> list[Scene]:
        return [generate_scene(s, self.config) for s in self.splits[split]]

    def iter_scenes(self, split: str):
        for s in self.splits[split]:
            yield generate_scene(s, self.config)


def build_dataset(n: int, seed: int, config: DataConfig, out_dir=None) -> SplitManifest:
    """Split n scene seeds 80/10/10 (floor for val/test, remainder to train)."""
    config.validate()
    if n < 3:
        raise ConfigurationError(f"need at least 3 scenes for three splits, got {n}")

    scene_seeds = [seed * 1_000_003 + i for i in range(n)]
    order = np.random.default_rng(seed).permutation(n)
    n_val = n // 10
    n_test = n // 10
    splits = {
        "val": [scene_seeds[i] for i in order[:n_val]],
        "test": [scene_seeds[i] for i in order[n_val : n_val + n_test]],
        "train": [scene_seeds[i] for i in order[n_val + n_test :]],
    }

    manifest = SplitManifest(
        version=MANIFEST_VERSION,
        n=n,
        seed=seed,
        config=config,
        config_hash=config_hash(config),
        splits=splits,
        vocabulary=Vocabulary(l_max=config.l_max),
    )
    if out_dir is not None:
        write_manifest(manifest, out_dir)
    return manifest


def write_manifest(manifest: SplitManifest, out_dir) -> None:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        vocab_path = out_dir / "vocabulary.json"
        vocab_path.write_text(json.dumps(manifest.vocabulary.to_dict(), indent=1, sort_keys=True))
        for split in SPLITS:
            doc = {
                "version": manifest.version,
                "split": split,
                "n_total": manifest.n,
                "seed": manifest.seed,
                "config": config_dict(manifest.config),
                "config_hash": manifest.config_hash,
                "vocabulary_file": vocab_path.name,
                "scene_seeds": manifest.splits[split],
            }
            (out_dir / f"{split}.json").write_text(json.dumps(doc, indent=1, sort_keys=True))
    except OSError as exc:
        raise StorageError(f"cannot write manifest under {out_dir}: {exc}") from exc


def load_manifest(out_dir) -> SplitManifest:
    out_dir = Path(out_dir)
    splits: dict[str, list[int]] = {}
    meta = None
    for split in SPLITS:
        path = out_dir / f"{split}.json"
        if not path.exists():
            raise StorageError(f"missing split document: {path}")
        doc = json.loads(path.read_text())
        if doc.get("version") != MANIFEST_VERSION:
            raise ConfigurationError(f"unsupported manifest version in {path}")
        splits[split] = [int(s) for s in doc["scene_seeds"]]
        meta = doc
    vocab = Vocabulary.from_dict(json.loads((out_dir / meta["vocabulary_file"]).read_text()))
    cfg_fields = dict(meta["config"])
    cfg_fields["background_ids"] = tuple(cfg_fields["background_ids"])
    config = DataConfig(**cfg_fields)
    return SplitManifest(
        version=MANIFEST_VERSION,
        n=int(meta["n_total"]),
        seed=int(meta["seed"]),
        config=config,
        config_hash=str(meta["config_hash"]),
        splits=splits,
        vocabulary=vocab,
    )
