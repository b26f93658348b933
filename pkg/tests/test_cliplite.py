"""Contrastive towers, scoring embeddings, and the learned mask prompt."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semani.cliplite.model import ClipLiteModel, contrastive_loss, cosine, new_checkpoint
from semani.cliplite.prompt import MaskPrompt
from semani.cliplite.train import ANCHOR_WORDS, MAX_LOG_SCALE, token_labels
from semani.config import ClipConfig, DataConfig
from semani.corpus.scenes import generate_scene
from semani.corpus.shapes import SHAPES
from semani.corpus.text import Vocabulary
from semani.errors import DomainError, ShapeMismatchError

CFG = ClipConfig(width=32, text_width=32, embed_dim=16)
VOCAB = Vocabulary()


@pytest.fixture(scope="module")
def ckpt():
    return new_checkpoint(CFG, VOCAB)


class TestCosine:
    def test_zero_vector_rejected(self):
        with pytest.raises(DomainError):
            cosine(np.zeros(4), np.ones(4))

    def test_parallel_and_antiparallel(self):
        v = np.array([1.0, 2.0, 3.0])
        assert cosine(v, 2 * v) == pytest.approx(1.0)
        assert cosine(v, -v) == pytest.approx(-1.0)

    @given(
        arrays(np.float64, (6,), elements=st.floats(-5, 5)),
        arrays(np.float64, (6,), elements=st.floats(-5, 5)),
    )
    @settings(max_examples=40, deadline=None)
    def test_bounded_and_symmetric(self, a, b):
        if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
            return
        s = cosine(a, b)
        assert -1.0 - 1e-9 <= s <= 1.0 + 1e-9
        assert s == pytest.approx(cosine(b, a))


class TestEmbeddings:
    def test_unit_norm(self, ckpt):
        rng = np.random.default_rng(0)
        img = rng.random((64, 64, 3), dtype=np.float32)
        assert np.linalg.norm(ckpt.embed_image(img)) == pytest.approx(1.0, abs=1e-5)
        assert np.linalg.norm(ckpt.embed_text("a red circle")) == pytest.approx(1.0, abs=1e-5)

    def test_token_grid_shape_and_norms(self, ckpt):
        rng = np.random.default_rng(1)
        grid = ckpt.embed_tokens(rng.random((64, 64, 3), dtype=np.float32))
        assert grid.shape == (8, 8, CFG.embed_dim)
        assert np.allclose(np.linalg.norm(grid, axis=2), 1.0, atol=1e-5)

    def test_uniform_image_gives_identical_cells(self, ckpt):
        # replicate padding keeps every receptive field identical on a flat image
        img = np.full((64, 64, 3), 0.4, dtype=np.float32)
        grid = ckpt.embed_tokens(img)
        assert np.allclose(grid, grid[0, 0], atol=1e-5)

    def test_semantic_loss_matches_cosine(self, ckpt):
        rng = np.random.default_rng(2)
        img = rng.random((64, 64, 3), dtype=np.float32)
        text = "a small blue solid star"
        want = 1.0 - cosine(ckpt.embed_image(img), ckpt.embed_text(text))
        assert ckpt.semantic_loss(img, text) == pytest.approx(want, abs=1e-6)


class TestContrastiveLoss:
    def test_constant_similarities_give_2_log_b(self):
        # identical rows make every logit equal: CE is exactly ln B per direction
        img = torch.nn.functional.normalize(torch.ones(5, 8), dim=1)
        txt = torch.nn.functional.normalize(torch.ones(5, 8), dim=1)
        loss = contrastive_loss(img, txt, scale=torch.tensor(3.7))
        assert float(loss) == pytest.approx(2 * math.log(5), abs=1e-5)

    def test_perfectly_aligned_pairs_beat_uniform(self):
        torch.manual_seed(0)
        img = torch.nn.functional.normalize(torch.eye(4, 8), dim=1)
        loss = contrastive_loss(img, img.clone(), scale=torch.tensor(50.0))
        assert float(loss) < 0.01

    def test_scale_clamp_constant(self):
        assert MAX_LOG_SCALE == pytest.approx(math.log(100.0))


class TestTokenLabels:
    def test_entity_cells_and_background(self):
        scene = generate_scene(17, DataConfig())
        labels = token_labels(scene, grid=8)
        assert labels.shape == (8, 8)
        bg = ANCHOR_WORDS.index("background")
        assert (labels == bg).any()
        for spec, mask in scene.entities:
            want = ANCHOR_WORDS.index(spec.shape)
            covered = mask.reshape(8, 8, 8, 8).max(axis=(1, 3)) > 0
            # every fully-covered cell of this entity carries its shape label
            inner = mask.reshape(8, 8, 8, 8).min(axis=(1, 3)) > 0
            if inner.any():
                assert (labels[inner] == want).all()
            assert set(np.unique(labels[covered])) <= {want, bg} | {
                ANCHOR_WORDS.index(s.shape) for s, _ in scene.entities
            }

    def test_anchor_words_cover_shapes(self):
        assert set(SHAPES) < set(ANCHOR_WORDS)
        assert "background" in ANCHOR_WORDS


class TestMaskPrompt:
    def test_apply_algebra(self):
        rng = np.random.default_rng(3)
        canvas = rng.random((8, 8, 3), dtype=np.float32)
        prompt = MaskPrompt(canvas, backbone_hash="00")
        image = rng.random((8, 8, 3), dtype=np.float32)
        ones = np.ones((8, 8), dtype=np.uint8)
        assert np.allclose(prompt.apply(image, ones), image)
        assert np.allclose(prompt.apply(image, 1 - ones), canvas)
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[:4] = 1
        mixed = prompt.apply(image, mask)
        assert np.allclose(mixed[:4], image[:4])
        assert np.allclose(mixed[4:], canvas[4:])

    def test_shape_mismatch_rejected(self):
        prompt = MaskPrompt(np.zeros((8, 8, 3), dtype=np.float32), backbone_hash="00")
        with pytest.raises(ShapeMismatchError):
            prompt.apply(np.zeros((9, 8, 3), dtype=np.float32), np.zeros((9, 8)))
        with pytest.raises(ShapeMismatchError):
            prompt.apply(np.zeros((8, 8, 3), dtype=np.float32), np.zeros((4, 4)))

    def test_round_trip(self, tmp_path):
        from semani.config import MaskPromptConfig

        canvas = np.random.default_rng(4).random((64, 64, 3)).astype(np.float32)
        MaskPrompt(canvas, backbone_hash="ab").save(tmp_path / "p.pt", MaskPromptConfig())
        loaded = MaskPrompt.load(tmp_path / "p.pt")
        assert np.array_equal(loaded.canvas, canvas)
        assert loaded.backbone_hash == "ab"


class TestCheckpointRoundTrip:
    def test_embeddings_survive_reload(self, ckpt, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.random((64, 64, 3), dtype=np.float32)
        ckpt.save(tmp_path / "clip.pt")
        from semani.cliplite.model import ClipCheckpoint

        loaded = ClipCheckpoint.load(tmp_path / "clip.pt")
        assert np.allclose(loaded.embed_image(img), ckpt.embed_image(img), atol=1e-7)
        assert loaded.vocabulary.words == VOCAB.words
