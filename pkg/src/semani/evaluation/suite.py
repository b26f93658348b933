"""End-to-end evaluation protocol for both manipulation pipelines.

For every sampled held-out scene one entity is edited twice: once toward
a randomly drawn target description (the "flip") and once toward its own
description (the "positive"), mirroring the preservation protocol of the
L2 metric. All randomness derives from the suite seed, so reports are
bit-reproducible.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from semani.align.engine import AlignEngine
from semani.align.masks import mask_iou, mask_to_tokens, tokens_to_pixels
from semani.align.providers import segment_learned
from semani.cliplite.model import ClipCheckpoint, cosine
from semani.config import DecodeParams, EvalConfig, SamplerParams
from semani.corpus.manifest import SplitManifest
from semani.corpus.scenes import Scene, generate_scene, to_grayscale
from semani.corpus.text import Vocabulary
from semani.corpus.shapes import COLOR_NAMES, SHAPES, SIZES, TEXTURES
from semani.diffgen.manipulate import manipulate_batch as diff_manipulate_batch
from semani.diffgen.model import DiffCheckpoint
from semani.errors import ConfigurationError
from semani.evaluation.classifier import ClassifierCheckpoint, class_index
from semani.evaluation.metrics import clip_score, inception_score, l2_error, recall_at_n
from semani.transgen.generate import manipulate_batch as trans_manipulate_batch
from semani.transgen.model import TransCheckpoint
from semani.vqae.model import VqaeCheckpoint

ALL_PHRASES = tuple(
    f"a {size} {color} {texture} {shape}"
    for size, color, texture, shape in itertools.product(SIZES, COLOR_NAMES, TEXTURES, SHAPES)
)


@dataclass
class EditSpec:
    scene_seed: int
    entity_index: int
    original_phrase: str
    target_phrase: str
    target_shape: str
    target_color: str


@dataclass
class EvalReport:
    pipeline: str
    split: str
    seed: int
    n_samples: int
    fidelity: float
    clip_preference: float
    clip_score_target: float
    is_mean: float
    is_std: float
    recall: dict[str, float]
    l2_positive: float
    l2_outside_mask: float
    config_hashes: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls(**json.loads(Path(path).read_text()))


def _draw_edits(
    manifest: SplitManifest, split: str, config: EvalConfig
) -> tuple[list[Scene], list[EditSpec]]:
    rng = np.random.default_rng(config.seed)
    seeds = manifest.splits[split]
    if not seeds:
        raise ConfigurationError(f"split {split!r} is empty")
    chosen = rng.choice(len(seeds), size=config.n_scenes, replace=len(seeds) < config.n_scenes)
    scenes, edits = [], []
    for i in chosen:
        scene = generate_scene(seeds[int(i)], manifest.config)
        k = int(rng.integers(len(scene.entities)))
        spec, _ = scene.entities[k]
        while True:
            shape = SHAPES[rng.integers(len(SHAPES))]
            color = COLOR_NAMES[rng.integers(len(COLOR_NAMES))]
            if (shape, color) != (spec.shape, spec.color):
                break
        size = SIZES[rng.integers(len(SIZES))]
        texture = TEXTURES[rng.integers(len(TEXTURES))]
        scenes.append(scene)
        edits.append(
            EditSpec(
                scene_seed=seeds[int(i)],
                entity_index=k,
                original_phrase=spec.caption_phrase(),
                target_phrase=f"a {size} {color} {texture} {shape}",
                target_shape=shape,
                target_color=color,
            )
        )
    return scenes, edits


def _negatives(positive: str, rng: np.random.Generator, count: int) -> list[str]:
    pool = [p for p in ALL_PHRASES if p != positive]
    idx = rng.choice(len(pool), size=count, replace=False)
    return [pool[int(i)] for i in idx]


def _edit_trans(
    scenes: list[Scene],
    edits: list[EditSpec],
    texts: list[str],
    vocabulary: Vocabulary,
    vqae: VqaeCheckpoint,
    trans: TransCheckpoint,
    use_gray: bool,
    decode: DecodeParams,
    batch: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (edited images, pixel masks used for compositing)."""
    from semani.transgen.generate import decode_image

    grid = trans.model.grid
    results, pix_masks = [], []
    for lo in range(0, len(scenes), batch):
        part = slice(lo, lo + batch)
        toks, tmasks, tids, grays = [], [], [], []
        for scene, edit, text in zip(scenes[part], edits[part], texts[part]):
            toks.append(vqae.tokens(scene.image))
            tmasks.append(mask_to_tokens(scene.entities[edit.entity_index][1], grid, grid))
            tids.append(vocabulary.tokenize(text).ids)
            if use_gray:
                grays.append(vqae.tokens(to_grayscale(scene.image)))
        out = trans_manipulate_batch(
            trans.model,
            np.stack(toks),
            np.stack(tmasks),
            np.stack(tids),
            np.stack(grays) if use_gray else None,
            decode,
        )
        for scene, grid_tokens, tmask in zip(scenes[part], out, tmasks):
            pixel_mask = tokens_to_pixels(tmask, *scene.image.shape[:2])
            results.append(decode_image(vqae, grid_tokens, scene.image, pixel_mask))
            pix_masks.append(pixel_mask)
    return np.stack(results), np.stack(pix_masks)


def _edit_diff(
    scenes: list[Scene],
    edits: list[EditSpec],
    texts: list[str],
    diff: DiffCheckpoint,
    params: SamplerParams,
    batch: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    results, masks = [], []
    for lo in range(0, len(scenes), batch):
        part = slice(lo, lo + batch)
        images = np.stack([s.image for s in scenes[part]])
        ms = np.stack(
            [s.entities[e.entity_index][1] for s, e in zip(scenes[part], edits[part])]
        )
        out = diff_manipulate_batch(diff, images, ms, list(texts[part]), params)
        results.append(out)
        masks.append(ms)
    return np.concatenate(results), np.concatenate(masks)


def run_suite(
    manifest: SplitManifest,
    split: str,
    pipeline: str,
    *,
    vqae: VqaeCheckpoint | None = None,
    trans: TransCheckpoint | None = None,
    diff: DiffCheckpoint | None = None,
    clip: ClipCheckpoint,
    classifier: ClassifierCheckpoint,
    config: EvalConfig = EvalConfig(),
    out_path=None,
) -> EvalReport:
    if pipeline not in ("trans", "diff"):
        raise ConfigurationError(f"unknown pipeline {pipeline!r}")
    if pipeline == "trans" and (vqae is None or trans is None):
        raise ConfigurationError("trans pipeline needs vqae and trans checkpoints")
    if pipeline == "diff" and diff is None:
        raise ConfigurationError("diff pipeline needs a diff checkpoint")

    scenes, edits = _draw_edits(manifest, split, config)
    flip_texts = [e.target_phrase for e in edits]
    pos_texts = [e.original_phrase for e in edits]

    if pipeline == "trans":
        decode = DecodeParams(
            temperature=trans.config.decode.temperature,
            top_k=trans.config.decode.top_k,
            seed=config.seed,
        )
        flips, masks = _edit_trans(
            scenes, edits, flip_texts, manifest.vocabulary, vqae, trans, False, decode
        )
        positives, _ = _edit_trans(
            scenes, edits, pos_texts, manifest.vocabulary, vqae, trans, True, decode
        )
    else:
        params = SamplerParams(
            ddim_steps=diff.config.sampler.ddim_steps,
            guidance_scale=diff.config.sampler.guidance_scale,
            eta=diff.config.sampler.eta,
            seed=config.seed,
        )
        flips, masks = _edit_diff(scenes, edits, flip_texts, diff, params)
        positives, _ = _edit_diff(scenes, edits, pos_texts, diff, params)

    originals = np.stack([s.image for s in scenes])

    # fidelity: classifier on the edited region must match the target pair
    probs = classifier.predict_proba(flips, (masks > 0).astype(np.float32))
    want = np.array([class_index(e.target_shape, e.target_color) for e in edits])
    fidelity = float(np.mean(probs.argmax(axis=1) == want))

    # does the edit move the image toward the target text and off the original?
    prefer = []
    for img, edit in zip(flips, edits):
        emb = clip.embed_image(img)
        prefer.append(
            cosine(emb, clip.embed_text(edit.target_phrase))
            > cosine(emb, clip.embed_text(edit.original_phrase))
        )
    clip_preference = float(np.mean(prefer))

    is_mean, is_std = inception_score(
        flips, lambda ims: classifier.predict_proba(ims), splits=config.is_splits
    )
    score = clip_score(flips, flip_texts, clip)

    neg_rng = np.random.default_rng(config.seed + 1)
    negatives = [_negatives(t, neg_rng, config.negatives) for t in flip_texts]
    recall = recall_at_n(flips, flip_texts, negatives, config.recall_ns, clip)

    outside = [
        l2_error(res[m == 0], orig[m == 0])
        for res, orig, m in zip(positives, originals, masks)
    ]
    report = EvalReport(
        pipeline=pipeline,
        split=split,
        seed=config.seed,
        n_samples=len(scenes),
        fidelity=fidelity,
        clip_preference=clip_preference,
        clip_score_target=score,
        is_mean=is_mean,
        is_std=is_std,
        recall={str(k): v for k, v in recall.items()},
        l2_positive=l2_error(positives, originals),
        l2_outside_mask=float(np.max(outside)),
        config_hashes={
            "manifest": manifest.config_hash,
            "clip": clip.config_hash,
            "classifier": classifier.config_hash,
            **({"vqae": vqae.config_hash, "trans": trans.config_hash} if pipeline == "trans" else {}),
            **({"diff": diff.config_hash} if pipeline == "diff" else {}),
        },
    )
    if out_path is not None:
        report.save(out_path)
    return report


def alignment_report(
    manifest: SplitManifest,
    engine: AlignEngine,
    split: str = "val",
    n_scenes: int = 200,
    seed: int = 0,
    out_path=None,
) -> dict:
    """Accuracy of prompt-entity selection plus segmenter quality."""
    rng = np.random.default_rng(seed)
    two_entity, token_ious, learned_ious = [], [], []
    seeds = manifest.splits[split]
    grid = engine.token_grid
    f = manifest.config.resolution // grid

    examined = 0
    for s in seeds:
        if examined >= n_scenes:
            break
        scene = generate_scene(s, manifest.config)
        examined += 1

        # token projection vs direct block-coverage rasterization
        for _, mask in scene.entities:
            tm = mask_to_tokens(mask, grid, grid)
            block = (mask > 0).reshape(grid, f, grid, f).max(axis=(1, 3))
            token_ious.append(mask_iou(tm, block.astype(np.uint8)))

        if engine.segmenter is not None:
            try:
                predicted = segment_learned(scene.image, engine.segmenter)
                for _, mask in scene.entities:
                    best = max(mask_iou(p, mask) for p in predicted)
                    learned_ious.append(best)
            except Exception:
                learned_ious.extend(0.0 for _ in scene.entities)

        if len(scene.entities) == 2:
            k = int(rng.integers(2))
            spec, mask = scene.entities[k]
            result = engine.align(
                scene.image,
                spec.shape,
                scoring="global",
                mode="argmax",
                provider="ground_truth",
                scene=scene,
            )
            sel = result.selected_mask()
            two_entity.append(mask_iou(sel, mask) > 0.5)

    report = {
        "split": split,
        "seed": seed,
        "n_scenes": examined,
        "two_entity_accuracy": float(np.mean(two_entity)) if two_entity else None,
        "n_two_entity": len(two_entity),
        "token_mask_iou_mean": float(np.mean(token_ious)),
        "token_mask_iou_min": float(np.min(token_ious)),
        "learned_iou_mean": float(np.mean(learned_ious)) if learned_ious else None,
    }
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def calibrate_theta(
    manifest: SplitManifest,
    engine: AlignEngine,
    split: str = "val",
    n_scenes: int = 200,
    seed: int = 0,
    out_path=None,
) -> dict:
    """Threshold for the match/no-match decision, fit on held-out scenes.

    Scores every entity of multi-entity scenes against each distinct shape
    word present; the prompt-named entity is a positive, the rest negatives.
    Picks the midpoint threshold with the best balanced accuracy (ties go to
    the lowest threshold).
    """
    from semani.align.scoring import attribute_constraints, score_global, score_global_margin

    matched: list[float] = []
    unmatched: list[float] = []
    examined = 0
    for s in manifest.splits[split]:
        if examined >= n_scenes:
            break
        scene = generate_scene(s, manifest.config)
        if len(scene.entities) < 2:
            continue
        shapes = [spec.shape for spec, _ in scene.entities]
        if len(set(shapes)) < 2:
            continue
        examined += 1
        for spec, _ in scene.entities:
            if shapes.count(spec.shape) > 1:  # ambiguous prompt, skip
                continue
            constraints = attribute_constraints(spec.shape)
            for other, mask in scene.entities:
                # same scoring rule the engine applies to this prompt
                if constraints:
                    score = score_global_margin(
                        scene.image,
                        mask,
                        constraints,
                        engine.clip,
                        engine.mask_prompt,
                        engine.phrase_bank(),
                    )
                else:
                    score = score_global(
                        scene.image, mask, spec.shape, engine.clip, engine.mask_prompt
                    )
                (matched if other is spec else unmatched).append(score)

    if not matched or not unmatched:
        raise ConfigurationError(
            f"split {split!r} lacks multi-entity scenes for calibration"
        )
    scores = np.array(sorted(set(matched) | set(unmatched)))
    candidates = np.concatenate(
        [[scores[0] - 1.0], (scores[:-1] + scores[1:]) / 2.0, [scores[-1] + 1.0]]
    )
    pos = np.array(matched)
    neg = np.array(unmatched)
    best_theta, best_acc = float(candidates[0]), -1.0
    for theta in candidates:
        tpr = float(np.mean(pos > theta))
        tnr = float(np.mean(neg <= theta))
        acc = (tpr + tnr) / 2.0
        if acc > best_acc:
            best_theta, best_acc = float(theta), acc

    report = {
        "split": split,
        "seed": seed,
        "n_scenes": examined,
        "theta": best_theta,
        "balanced_accuracy": best_acc,
        "matched_mean": float(pos.mean()),
        "unmatched_mean": float(neg.mean()),
        "n_matched": len(pos),
        "n_unmatched": len(neg),
    }
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(report, indent=1, sort_keys=True))
    return report
