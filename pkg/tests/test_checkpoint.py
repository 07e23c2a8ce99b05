import numpy as np
import pytest

from cogent.checkpoint import (
    MAGIC,
    Checkpoint,
    arch_digest,
    load_checkpoint,
    save_checkpoint,
)
from cogent.errors import ConfigError


def sample_checkpoint(with_moments=True):
    rng = np.random.default_rng(0)
    params = {
        "patch_proj.w": rng.normal(size=(4, 8)).astype(np.float32),
        "patch_proj.b": np.zeros(8, dtype=np.float32),
        "cls_token": rng.normal(size=(1, 8)).astype(np.float32),
    }
    moments = None
    if with_moments:
        moments = {
            k: (
                rng.normal(size=v.shape).astype(np.float32),
                np.abs(rng.normal(size=v.shape)).astype(np.float32),
            )
            for k, v in params.items()
        }
    config = {
        "data.T": 16,
        "data.D": 1,
        "data.num_classes": 2,
        "patch.L": 4,
        "patch.theta": 0.75,
        "model.d_model": 8,
        "model.n_blocks": 2,
        "model.n_heads": 2,
        "model.mlp_ratio": 4,
        "model.classifier_hidden_ratio": 0.1,
        "seed": 7,
    }
    return Checkpoint(
        config=config,
        params=params,
        lambda_c=1.0,
        lambda_r=0.0171875,
        epoch=12,
        adam_step=480,
        rng_state={"seed": 7, "epoch": 12},
        moments=moments,
        norm_mean=[0.25],
        norm_std=[1.5],
    )


class TestRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        ckpt = sample_checkpoint()
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(ckpt, p1)
        loaded = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_fields_survive(self, tmp_path):
        ckpt = sample_checkpoint()
        save_checkpoint(ckpt, tmp_path / "c.ckpt")
        loaded = load_checkpoint(tmp_path / "c.ckpt")
        assert loaded.lambda_r == ckpt.lambda_r
        assert loaded.epoch == 12
        assert loaded.adam_step == 480
        assert loaded.rng_state == {"seed": 7, "epoch": 12}
        assert loaded.norm_mean == [0.25]
        assert list(loaded.params) == list(ckpt.params)  # order preserved
        for k in ckpt.params:
            np.testing.assert_array_equal(loaded.params[k], ckpt.params[k])
            np.testing.assert_array_equal(loaded.moments[k][0], ckpt.moments[k][0])
            np.testing.assert_array_equal(loaded.moments[k][1], ckpt.moments[k][1])

    def test_without_moments(self, tmp_path):
        ckpt = sample_checkpoint(with_moments=False)
        save_checkpoint(ckpt, tmp_path / "d.ckpt")
        loaded = load_checkpoint(tmp_path / "d.ckpt")
        assert loaded.moments is None

    def test_magic_bytes_lead_the_file(self, tmp_path):
        save_checkpoint(sample_checkpoint(), tmp_path / "e.ckpt")
        assert (tmp_path / "e.ckpt").read_bytes()[:8] == MAGIC

    def test_bad_magic_rejected(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(ConfigError, match="magic"):
            load_checkpoint(bad)


class TestDigest:
    def test_digest_ignores_non_arch_keys(self):
        ckpt = sample_checkpoint()
        other = dict(ckpt.config)
        other["seed"] = 999
        other["patch.theta"] = 0.0  # masking ratio is stage-specific
        assert arch_digest(other) == ckpt.digest

    def test_digest_tracks_arch_keys(self):
        ckpt = sample_checkpoint()
        other = dict(ckpt.config)
        other["model.d_model"] = 16
        assert arch_digest(other) != ckpt.digest

    def test_mismatched_digest_refused(self, tmp_path):
        ckpt = sample_checkpoint()
        save_checkpoint(ckpt, tmp_path / "f.ckpt")
        other = dict(ckpt.config)
        other["model.d_model"] = 16
        with pytest.raises(ConfigError, match="digest"):
            load_checkpoint(tmp_path / "f.ckpt", expect_digest=arch_digest(other))
        # matching digest loads fine
        load_checkpoint(tmp_path / "f.ckpt", expect_digest=ckpt.digest)
