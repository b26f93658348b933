"""Vector quantization, straight-through training, and the VQ autoencoder."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from semani.config import VqaeConfig
from semani.errors import ConfigurationError, DomainError, ShapeMismatchError
from semani.vqae.model import VectorQuantizer, VqaeModel, new_checkpoint, quantize
from semani.vqae.train import _reseed_dead_codes

SMALL = VqaeConfig(codebook_size=16, latent_dim=4, base_channels=8)


class TestQuantize:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        grid = rng.standard_normal((6, 5, 4))
        codebook = rng.standard_normal((16, 4))
        idx, quantized = quantize(grid, codebook)
        flat = grid.reshape(-1, 4)
        want = np.argmin(((flat[:, None] - codebook[None]) ** 2).sum(-1), axis=1)
        assert np.array_equal(idx.reshape(-1), want)
        assert np.array_equal(quantized, codebook[idx])

    def test_tie_break_lowest_index(self):
        codebook = np.array([[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        grid = np.array([[[0.0, 1.0]], [[0.5, 0.5]]])
        idx, _ = quantize(grid, codebook)
        assert idx.reshape(-1).tolist() == [0, 0]

    def test_empty_codebook_rejected(self):
        with pytest.raises(ConfigurationError):
            quantize(np.zeros((2, 2, 3)), np.zeros((0, 3)))

    def test_depth_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            quantize(np.zeros((2, 2, 3)), np.zeros((4, 5)))


class TestVectorQuantizer:
    def test_straight_through_gradient_is_identity(self):
        torch.manual_seed(0)
        vq = VectorQuantizer(8, 4, 0.25)
        z = torch.randn(2, 4, 3, 3, requires_grad=True)
        quantized, _, _ = vq(z)
        quantized.sum().backward()
        # the quantization step must pass gradients through unchanged
        assert torch.allclose(z.grad, torch.ones_like(z))

    def test_loss_arithmetic(self):
        torch.manual_seed(1)
        vq = VectorQuantizer(8, 4, 0.25)
        z = torch.randn(1, 4, 2, 2)
        moved = z.permute(0, 2, 3, 1)
        codes = vq.codebook[vq.indices(moved)]
        want = ((codes - moved) ** 2).mean() * (1 + 0.25)
        _, loss, _ = vq(z)
        assert torch.allclose(loss, want, atol=1e-6)

    def test_indices_agree_with_kernel(self):
        torch.manual_seed(2)
        vq = VectorQuantizer(16, 4, 0.25)
        z = torch.randn(3, 5, 5, 4)
        idx = vq.indices(z)
        want, _ = quantize(z.numpy().reshape(1, -1, 4), vq.codebook.detach().numpy())
        assert np.array_equal(idx.reshape(-1).numpy(), want.reshape(-1))


class TestModelShapes:
    def test_encode_decode_shapes(self):
        ckpt = new_checkpoint(SMALL)
        image = np.random.default_rng(0).random((64, 64, 3), dtype=np.float32)
        latents = ckpt.encode(image)
        assert latents.shape == (8, 8, SMALL.latent_dim)
        tokens = ckpt.tokens(image)
        assert tokens.shape == (8, 8)
        decoded = ckpt.decode(tokens)
        assert decoded.shape == (64, 64, 3)
        assert decoded.min() >= 0.0 and decoded.max() <= 1.0

    def test_indivisible_image_rejected(self):
        ckpt = new_checkpoint(SMALL)
        with pytest.raises(ShapeMismatchError):
            ckpt.encode(np.zeros((60, 64, 3), dtype=np.float32))

    def test_token_range_checked_on_decode(self):
        ckpt = new_checkpoint(SMALL)
        bad = np.full((8, 8), SMALL.codebook_size, dtype=np.int64)
        with pytest.raises(DomainError):
            ckpt.decode(bad)

    def test_checkpoint_round_trip(self, tmp_path):
        ckpt = new_checkpoint(SMALL)
        image = np.random.default_rng(1).random((64, 64, 3), dtype=np.float32)
        before = ckpt.tokens(image)
        ckpt.save(tmp_path / "vq.pt")
        from semani.vqae.model import VqaeCheckpoint

        loaded = VqaeCheckpoint.load(tmp_path / "vq.pt")
        assert np.array_equal(loaded.tokens(image), before)
        assert np.array_equal(loaded.decode(before), ckpt.decode(before))


class TestReseed:
    def test_dead_codes_replaced_live_codes_kept(self):
        torch.manual_seed(3)
        model = VqaeModel(SMALL)
        before = model.quantizer.codebook.detach().clone()
        usage = torch.zeros(SMALL.codebook_size, dtype=torch.long)
        usage[:4] = 10  # first four codes in use, the rest dead
        images = torch.rand(4, 3, 64, 64)
        _reseed_dead_codes(model, usage, images)
        after = model.quantizer.codebook.detach()
        assert torch.equal(after[:4], before[:4])
        assert not torch.equal(after[4:], before[4:])

    def test_training_reduces_reconstruction_error(self, tiny_manifest):
        from semani.vqae.train import train_vqae
        import tempfile

        with tempfile.TemporaryDirectory() as d:
            ckpt = train_vqae(
                tiny_manifest,
                VqaeConfig(codebook_size=32, latent_dim=8, base_channels=8, steps=60, batch_size=8),
                f"{d}/vq.pt",
                log_every=0,
            )
        scene = tiny_manifest.scenes("val")[0]
        err = float(((ckpt.decode(ckpt.tokens(scene.image)) - scene.image) ** 2).mean())
        assert err < 0.05
