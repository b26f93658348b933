"""Checkpoint archives and PNG round-tripping.

A checkpoint is a single ``torch.save`` archive carrying a format version,
the producing stage's config (and its hash) and the model state. Loaders
reject unknown versions instead of guessing.
"""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from semani.errors import ConfigurationError, StorageError

CHECKPOINT_FORMAT = 1


def save_checkpoint(path, kind: str, config_dict: dict, config_hash: str, state: dict, extra: dict | None = None) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT,
                "kind": kind,
                "config": config_dict,
                "config_hash": config_hash,
                "state": state,
                "extra": extra or {},
            },
            path,
        )
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path, kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"missing checkpoint: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except OSError as exc:
        raise StorageError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"unsupported checkpoint version {version} in {path}")
    if kind is not None and payload.get("kind") != kind:
        raise ConfigurationError(
            f"checkpoint {path} holds '{payload.get('kind')}', expected '{kind}'"
        )
    return payload


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def image_to_png(image: np.ndarray) -> bytes:
    """Encode an (H, W, 3) float image in [0,1] as PNG bytes."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_to_image(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def mask_to_png(mask: np.ndarray) -> bytes:
    """Encode a binary (H, W) mask as a single-channel 0/255 PNG."""
    arr = (np.asarray(mask) > 0).astype(np.uint8) * 255
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def png_to_mask(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as img:
        arr = np.asarray(img.convert("L"))
    return (arr >= 128).astype(np.uint8)
