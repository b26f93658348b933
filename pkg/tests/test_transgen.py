"""Unified vocabulary, sequence layout, AR model, losses, and constrained decoding."""

from __future__ import annotations

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from semani.config import DecodeParams, TransConfig
from semani.errors import DomainError, ShapeMismatchError
from semani.transgen.generate import (
    _sample_image_token,
    manipulate,
    manipulate_batch,
    next_token_logits,
    sequence_log_prob,
)
from semani.transgen.losses import compute_losses, segment_ce, total_loss
from semani.transgen.model import SEG_GRAY, SEG_IMAGE, TransCheckpoint, new_model
from semani.transgen.vocab import SequenceLayout, UnifiedVocab, build_sequence

VOCAB = UnifiedVocab(text_size=38, codebook_size=16)
TINY = TransConfig(layers=1, heads=2, head_dim=8, ffn_dim=32, seed=7)


@pytest.fixture(scope="module")
def tiny_model():
    return new_model(TINY, VOCAB, grid=4, l_max=8)


class TestUnifiedVocab:
    def test_id_space_arithmetic(self):
        assert VOCAB.size == 38 + 16 + 2
        assert VOCAB.bov == 54
        assert VOCAB.bot == 55

    def test_image_band_round_trip(self):
        tokens = np.arange(16)
        ids = VOCAB.image_ids(tokens)
        assert ids.min() == 38 and ids.max() == 53
        assert np.array_equal(VOCAB.to_image_tokens(ids), tokens)

    def test_out_of_band_rejected(self):
        with pytest.raises(DomainError):
            VOCAB.image_ids(np.array([16]))
        with pytest.raises(DomainError):
            VOCAB.image_ids(np.array([-1]))
        with pytest.raises(DomainError):
            VOCAB.to_image_tokens(np.array([37]))
        with pytest.raises(DomainError):
            VOCAB.to_image_tokens(np.array([54]))


class TestSequenceLayout:
    def test_text_only_layout(self):
        lay = SequenceLayout(l_max=8, n_cells=16, has_gray=False)
        assert lay.length == 1 + 8 + 16
        assert lay.gray_slice == slice(0, 0)
        assert lay.bot_index == 0
        assert lay.text_slice == slice(1, 9)
        assert lay.image_slice == slice(9, 25)

    def test_gray_layout(self):
        lay = SequenceLayout(l_max=8, n_cells=16, has_gray=True)
        assert lay.length == (1 + 16) + 1 + 8 + 16
        assert lay.gray_slice == slice(1, 17)
        assert lay.bot_index == 17
        assert lay.text_slice == slice(18, 26)
        assert lay.image_slice == slice(26, 42)

    def test_segments_tile_sequence(self):
        for has_gray in (False, True):
            lay = SequenceLayout(l_max=5, n_cells=9, has_gray=has_gray)
            covered = set()
            for s in (lay.gray_slice, lay.text_slice, lay.image_slice):
                covered |= set(range(s.start, s.stop))
            separators = {lay.bot_index} | ({0} if has_gray else set())
            assert covered | separators == set(range(lay.length))
            assert not covered & separators


class TestBuildSequence:
    LAY = SequenceLayout(l_max=8, n_cells=16, has_gray=False)
    GLAY = SequenceLayout(l_max=8, n_cells=16, has_gray=True)

    def test_assembly_matches_manual_concat(self):
        rng = np.random.default_rng(0)
        text = rng.integers(0, 38, size=8)
        image = rng.integers(0, 16, size=16)
        gray = rng.integers(0, 16, size=16)
        seq = build_sequence(VOCAB, self.GLAY, text, image_tokens=image, gray_tokens=gray)
        want = np.concatenate([[55], text, image + 38])
        want = np.concatenate([[54], gray + 38, want])
        assert np.array_equal(seq, want)
        assert seq.dtype == np.int64

    def test_prefix_without_image(self):
        text = np.zeros(8, dtype=np.int64)
        seq = build_sequence(VOCAB, self.LAY, text)
        assert seq.shape == (9,)
        assert seq[0] == VOCAB.bot

    def test_validation_errors(self):
        text = np.zeros(8, dtype=np.int64)
        with pytest.raises(ShapeMismatchError):
            build_sequence(VOCAB, self.LAY, np.zeros(7, dtype=np.int64))
        with pytest.raises(DomainError):
            build_sequence(VOCAB, self.LAY, np.full(8, 38))
        with pytest.raises(ShapeMismatchError):  # layout disagrees with gray argument
            build_sequence(VOCAB, self.LAY, text, gray_tokens=np.zeros(16, dtype=int))
        with pytest.raises(ShapeMismatchError):
            build_sequence(VOCAB, self.GLAY, text, gray_tokens=None)
        with pytest.raises(ShapeMismatchError):
            build_sequence(VOCAB, self.GLAY, text, gray_tokens=np.zeros(9, dtype=int))
        with pytest.raises(ShapeMismatchError):
            build_sequence(VOCAB, self.LAY, text, image_tokens=np.zeros(4, dtype=int))


class TestModel:
    def test_forward_shapes_full_and_prefix(self, tiny_model):
        lay = tiny_model.layout(False)
        ids = torch.zeros((2, lay.length), dtype=torch.int64)
        assert tiny_model(ids, False).shape == (2, lay.length, VOCAB.size)
        assert tiny_model(ids[:, :5], False).shape == (2, 5, VOCAB.size)

    def test_position_embedding_lengths(self, tiny_model):
        for has_gray in (False, True):
            emb = tiny_model.position_embedding(has_gray)
            assert emb.shape == (tiny_model.layout(has_gray).length, tiny_model.dim)

    def test_gray_and_image_share_axial_embeddings(self, tiny_model):
        with torch.no_grad():
            emb = tiny_model.position_embedding(True)
            rows = torch.arange(4).repeat_interleave(4)
            cols = torch.arange(4).repeat(4)
            axial = tiny_model.pos_row(rows) + tiny_model.pos_col(cols)
            gray_block = emb[1:17]
            image_block = emb[-16:]
        assert torch.equal(gray_block, axial + tiny_model.seg.weight[SEG_GRAY])
        assert torch.equal(image_block, axial + tiny_model.seg.weight[SEG_IMAGE])

    def test_causal_prefix_logits_bitwise_stable(self, tiny_model):
        torch.manual_seed(3)
        lay = tiny_model.layout(False)
        a = torch.randint(0, VOCAB.size, (1, lay.length))
        b = a.clone()
        k = 12
        b[0, k:] = (b[0, k:] + 1) % VOCAB.size
        with torch.no_grad():
            la = tiny_model(a, False)
            lb = tiny_model(b, False)
        assert torch.equal(la[:, :k], lb[:, :k])
        assert not torch.equal(la[:, k:], lb[:, k:])

    def test_checkpoint_round_trip(self, tiny_model, tmp_path):
        ckpt = TransCheckpoint(tiny_model, "cfg123", {"vqae": "v1", "cliplite": "c1"})
        path = tmp_path / "transgen.pt"
        ckpt.save(path)
        loaded = TransCheckpoint.load(path)
        assert loaded.refs == {"vqae": "v1", "cliplite": "c1"}
        assert loaded.config_hash == "cfg123"
        assert loaded.model.vocab == VOCAB
        for p, q in zip(tiny_model.state_dict().values(), loaded.model.state_dict().values()):
            assert torch.equal(p, q)
        assert all(not p.requires_grad for p in loaded.model.parameters())


class TestLosses:
    def test_segment_ce_matches_manual_shift(self):
        torch.manual_seed(0)
        logits = torch.randn(2, 10, 7)
        ids = torch.randint(0, 7, (2, 10))
        seg = slice(4, 8)
        got = segment_ce(logits, ids, seg)
        want = F.cross_entropy(logits[:, 3:7].reshape(-1, 7), ids[:, 4:8].reshape(-1))
        assert torch.equal(got, want)

    def test_segment_ce_never_targets_position_zero(self):
        torch.manual_seed(1)
        logits = torch.randn(1, 6, 5)
        ids = torch.randint(0, 5, (1, 6))
        got = segment_ce(logits, ids, slice(0, 3))
        want = F.cross_entropy(logits[:, 0:2].reshape(-1, 5), ids[:, 1:3].reshape(-1))
        assert torch.equal(got, want)

    def test_empty_segment_is_zero(self):
        logits = torch.randn(1, 6, 5)
        ids = torch.randint(0, 5, (1, 6))
        assert segment_ce(logits, ids, slice(0, 0)).item() == 0.0
        assert segment_ce(logits, ids, slice(0, 1)).item() == 0.0

    def test_compute_losses_covers_layout(self):
        lay = SequenceLayout(l_max=4, n_cells=4, has_gray=True)
        torch.manual_seed(2)
        logits = torch.randn(2, lay.length, VOCAB.size)
        ids = torch.randint(0, VOCAB.size, (2, lay.length))
        parts = compute_losses(logits, ids, lay)
        assert set(parts) == {"img", "gray", "txt"}
        for seg_name, seg in (("img", lay.image_slice), ("gray", lay.gray_slice), ("txt", lay.text_slice)):
            assert torch.equal(parts[seg_name], segment_ce(logits, ids, seg))

    def test_total_loss_weights(self):
        cfg = TransConfig()
        got = total_loss(0.9, 0.36, 0.18, 0.02, cfg)
        assert got == (7.0 / 9.0) * 0.9 + (1.0 / 9.0) * 0.36 + (1.0 / 9.0) * 0.18 + 5.0 * 0.02


class TestSampling:
    def test_top_k_one_is_greedy(self):
        torch.manual_seed(0)
        logits = torch.randn(3, VOCAB.size)
        params = DecodeParams(temperature=0.37, top_k=1, seed=5)
        gen = torch.Generator().manual_seed(5)
        got = _sample_image_token(logits, params, gen, 38, 16)
        want = logits[:, 38:54].argmax(dim=-1)
        assert torch.equal(got, want)

    def test_only_image_band_reachable(self):
        logits = torch.full((4, VOCAB.size), 1e9)
        logits[:, 38:54] = 0.0  # every non-image id massively preferred
        params = DecodeParams(temperature=1.0, top_k=16, seed=0)
        gen = torch.Generator().manual_seed(0)
        for _ in range(5):
            got = _sample_image_token(logits, params, gen, 38, 16)
            assert got.min() >= 0 and got.max() < 16

    def test_top_k_restricts_support(self):
        logits = torch.zeros(1, VOCAB.size)
        logits[0, 38 + 3] = 5.0
        logits[0, 38 + 7] = 4.0
        logits[0, 38 + 1] = 3.0
        params = DecodeParams(temperature=1.0, top_k=2, seed=0)
        gen = torch.Generator().manual_seed(0)
        seen = {int(_sample_image_token(logits, params, gen, 38, 16)[0]) for _ in range(50)}
        assert seen <= {3, 7}
        assert len(seen) == 2


class TestManipulate:
    def _inputs(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        tokens = rng.integers(0, 16, size=(4, 4))
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[1:3, 1:3] = 1
        text = rng.integers(0, 38, size=8)
        return tokens, mask, text

    def test_unmasked_cells_preserved_bitwise(self, tiny_model):
        tokens, mask, text = self._inputs()
        out = manipulate(tiny_model, tokens, mask, text, params=DecodeParams(seed=1))
        assert np.array_equal(out[mask == 0], tokens[mask == 0])
        assert out.shape == tokens.shape

    def test_empty_mask_returns_input(self, tiny_model):
        tokens, _, text = self._inputs()
        out = manipulate(tiny_model, tokens, np.zeros((4, 4), dtype=np.uint8), text)
        assert np.array_equal(out, tokens)

    def test_deterministic_given_seed(self, tiny_model):
        tokens, mask, text = self._inputs()
        a = manipulate(tiny_model, tokens, mask, text, params=DecodeParams(seed=3))
        b = manipulate(tiny_model, tokens, mask, text, params=DecodeParams(seed=3))
        assert np.array_equal(a, b)

    def test_gray_conditioning_changes_distribution(self, tiny_model):
        tokens, mask, text = self._inputs()
        gray = np.random.default_rng(9).integers(0, 16, size=(4, 4))
        out = manipulate(
            tiny_model, tokens, mask, text, gray_tokens=gray, params=DecodeParams(seed=3)
        )
        assert np.array_equal(out[mask == 0], tokens[mask == 0])

    def test_batch_masks_independent(self, tiny_model):
        tokens, mask, text = self._inputs()
        batch_tokens = np.stack([tokens, tokens])
        masks = np.stack([mask, np.zeros_like(mask)])
        texts = np.stack([text, text])
        out = manipulate_batch(
            tiny_model, batch_tokens, masks, texts, None, DecodeParams(seed=2)
        )
        assert np.array_equal(out[1], tokens)
        assert np.array_equal(out[0][mask == 0], tokens[mask == 0])

    def test_shape_validation(self, tiny_model):
        tokens, mask, text = self._inputs()
        with pytest.raises(ShapeMismatchError):
            manipulate_batch(tiny_model, tokens, mask[None], text[None], None, DecodeParams())
        with pytest.raises(ShapeMismatchError):
            manipulate(tiny_model, tokens, mask[:2], text)
        with pytest.raises(ShapeMismatchError):
            manipulate(tiny_model, np.zeros((2, 2), dtype=int), np.ones((2, 2), dtype=int), text)


class TestScoringHelpers:
    def test_sequence_log_prob_matches_stepwise(self, tiny_model):
        rng = np.random.default_rng(4)
        lay = tiny_model.layout(False)
        text = rng.integers(0, 38, size=8)
        image = rng.integers(0, 16, size=16)
        seq = build_sequence(VOCAB, lay, text, image_tokens=image)
        total = sequence_log_prob(tiny_model, seq, False)
        stepwise = 0.0
        for pos in range(1, len(seq)):
            logits = next_token_logits(tiny_model, seq[:pos], False)
            logp = torch.log_softmax(torch.from_numpy(logits).double(), dim=-1)
            stepwise += float(logp[seq[pos]])
        # prefix-length forwards reduce attention in different order; float32
        # logits agree to ~1e-6, so the 40-step sum is loose only to ~1e-4
        assert total == pytest.approx(stepwise, abs=1e-4)
