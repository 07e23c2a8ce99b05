import numpy as np
import pytest

from cogent.errors import ConfigError, ContractError
from cogent.patchmask import (
    PatchConfig,
    apply_mask,
    batch_patchify_mask,
    patchify,
    sample_mask,
    visible_patches,
)


class TestPatchify:
    def test_reference_patch_count(self):
        cfg = PatchConfig(L=64, theta=0.75)
        x = np.zeros((1280, 1), dtype=np.float32)
        assert patchify(x, cfg).shape == (20, 64, 1)

    def test_floor_division_drops_tail(self):
        cfg = PatchConfig(L=64, theta=0.0)
        x = np.arange(100, dtype=np.float32).reshape(100, 1)
        patches = patchify(x, cfg)
        assert patches.shape == (1, 64, 1)
        assert patches[0, -1, 0] == 63.0  # rows 64..99 dropped

    def test_round_trip_when_divisible(self):
        cfg = PatchConfig(L=4, theta=0.0)
        rng = np.random.default_rng(0)
        x = rng.normal(size=(16, 3)).astype(np.float32)
        patches = patchify(x, cfg)
        np.testing.assert_array_equal(patches.reshape(16, 3), x)

    def test_patch_longer_than_series(self):
        cfg = PatchConfig(L=32, theta=0.0)
        with pytest.raises(ConfigError):
            patchify(np.zeros((16, 1), dtype=np.float32), cfg)


class TestSampleMask:
    def test_reference_visible_count(self):
        m = sample_mask(20, 0.75, np.random.default_rng(0))
        assert int(m.sum()) == 5

    def test_zero_theta_all_visible(self):
        m = sample_mask(6, 0.0, np.random.default_rng(0))
        assert int(m.sum()) == 6

    def test_small_n(self):
        m = sample_mask(4, 0.75, np.random.default_rng(0))
        assert int(m.sum()) == 1

    def test_exact_count_over_1000_draws(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            m = sample_mask(20, 0.75, rng)
            assert int(m.sum()) == 5

    def test_count_identity(self):
        rng = np.random.default_rng(2)
        for n in (1, 3, 7, 20, 33):
            for theta in (0.0, 0.25, 0.5, 0.75):
                if n - round(theta * n) < 1:
                    continue
                m = sample_mask(n, theta, rng)
                assert int(m.sum()) + round(theta * n) == n

    def test_no_visible_patch_rejected(self):
        with pytest.raises(ConfigError):
            sample_mask(1, 0.75, np.random.default_rng(0))  # round(0.75)=1 -> 0 left


class TestApplyMask:
    def test_all_ones_mask(self):
        patches = np.zeros((4, 2, 1), dtype=np.float32)
        ps = apply_mask(patches, np.ones(4, dtype=np.uint8))
        np.testing.assert_array_equal(ps.visible_idx, [0, 1, 2, 3])

    def test_gather_order(self):
        patches = np.zeros((4, 2, 1), dtype=np.float32)
        ps = apply_mask(patches, np.array([1, 0, 1, 0], dtype=np.uint8))
        np.testing.assert_array_equal(ps.visible_idx, [0, 2])

    def test_masked_patches_excluded_from_encoder_input(self):
        patches = np.arange(8, dtype=np.float32).reshape(4, 2, 1)
        ps = apply_mask(patches, np.array([0, 1, 0, 1], dtype=np.uint8))
        vis = visible_patches(ps)
        np.testing.assert_array_equal(vis, [[2.0, 3.0], [6.0, 7.0]])

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            apply_mask(np.zeros((4, 2, 1), np.float32), np.ones(3, np.uint8))

    def test_visible_idx_strictly_increasing(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            m = sample_mask(12, 0.5, rng)
            ps = apply_mask(np.zeros((12, 2, 1), np.float32), m)
            assert np.all(np.diff(ps.visible_idx) > 0)


class TestBatchHelpers:
    def test_batch_shapes(self):
        cfg = PatchConfig(L=4, theta=0.5)
        values = np.random.default_rng(0).normal(size=(3, 16, 2)).astype(np.float32)
        tokens, idx, masks = batch_patchify_mask(values, cfg, np.random.default_rng(1))
        assert tokens.shape == (3, 2, 8)  # N=4, V=2, L*D=8
        assert idx.shape == (3, 2)
        assert masks.shape == (3, 4)

    def test_keep_zeroed_form(self):
        cfg = PatchConfig(L=4, theta=0.5)
        values = np.ones((2, 16, 1), dtype=np.float32)
        tokens, idx, masks = batch_patchify_mask(
            values, cfg, np.random.default_rng(1), keep_zeroed=True
        )
        assert tokens.shape == (2, 4, 4)
        for b in range(2):
            for n in range(4):
                if masks[b, n]:
                    assert np.all(tokens[b, n] == 1.0)
                else:
                    assert np.all(tokens[b, n] == 0.0)

    def test_tokens_match_per_sample_path(self):
        cfg = PatchConfig(L=4, theta=0.5)
        rng_values = np.random.default_rng(5)
        values = rng_values.normal(size=(2, 12, 2)).astype(np.float32)
        tokens, idx, masks = batch_patchify_mask(values, cfg, np.random.default_rng(9))
        for b in range(2):
            patches = patchify(values[b], cfg)
            ps = apply_mask(patches, masks[b])
            np.testing.assert_array_equal(visible_patches(ps), tokens[b])
            np.testing.assert_array_equal(ps.visible_idx, idx[b])
