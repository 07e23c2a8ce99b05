import json

import pytest

from cogent.config import defaults, resolve_config, settings_from_config
from cogent.data import DatasetMeta
from cogent.errors import ConfigError


class TestResolveConfig:
    def test_empty_file_gives_all_defaults(self, tmp_path):
        f = tmp_path / "empty.json"
        f.write_text("{}")
        cfg = resolve_config(f, {})
        assert cfg == defaults()
        assert cfg["patch.theta"] == 0.75

    def test_no_file_gives_defaults(self):
        cfg = resolve_config(None, {}, env={})
        assert cfg["model.d_model"] == 512
        assert cfg["loss.tau"] == 0.2

    def test_nested_and_flat_keys_both_accepted(self, tmp_path):
        nested = tmp_path / "nested.json"
        nested.write_text(json.dumps({"patch": {"theta": 0.5}, "loss.tau": 0.3}))
        cfg = resolve_config(nested, {})
        assert cfg["patch.theta"] == 0.5
        assert cfg["loss.tau"] == 0.3

    def test_override_precedence(self, tmp_path):
        f = tmp_path / "cfg.json"
        f.write_text(json.dumps({"patch.theta": 0.5, "seed": 3}))
        cfg = resolve_config(f, {"patch.theta": "0.25"}, env={"COGENT_SEED": "99"})
        assert cfg["patch.theta"] == 0.25  # cli beats file
        assert cfg["seed"] == 3  # file beats env

    def test_env_seed_lowest_precedence(self):
        cfg = resolve_config(None, {}, env={"COGENT_SEED": "42"})
        assert cfg["seed"] == 42

    def test_unknown_keys_all_reported(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"patch.len": 4, "modle.d_model": 8}))
        with pytest.raises(ConfigError) as err:
            resolve_config(f, {"also.bad": "1"})
        msg = str(err.value)
        assert "patch.len" in msg and "modle.d_model" in msg and "also.bad" in msg

    def test_type_mismatch_reported(self, tmp_path):
        f = tmp_path / "bad.json"
        f.write_text(json.dumps({"patch.L": "abc"}))
        with pytest.raises(ConfigError, match="patch.L"):
            resolve_config(f, {})

    def test_bool_and_null_parsing(self):
        cfg = resolve_config(
            None,
            {
                "mask.keep_zeroed": "true",
                "loss.symmetric_ntxent": "0",
                "model.init_seed": "null",
            },
            env={},
        )
        assert cfg["mask.keep_zeroed"] is True
        assert cfg["loss.symmetric_ntxent"] is False
        assert cfg["model.init_seed"] is None


class TestSettingsFromConfig:
    def meta(self):
        return DatasetMeta(T=96, D=1, num_classes=3, name="m")

    def test_theta_one_rejected_with_invariant_message(self):
        cfg = resolve_config(None, {"patch.theta": "1.0", "patch.L": "16"}, env={})
        with pytest.raises(ConfigError, match="masking ratio"):
            settings_from_config(cfg, self.meta())

    def test_init_seed_falls_back_to_run_seed(self):
        cfg = resolve_config(None, {"seed": "17", "patch.L": "16"}, env={})
        settings = settings_from_config(cfg, self.meta())
        assert settings.model.init_seed == 17
        cfg2 = resolve_config(
            None, {"seed": "17", "model.init_seed": "3", "patch.L": "16"}, env={}
        )
        assert settings_from_config(cfg2, self.meta()).model.init_seed == 3

    def test_patch_longer_than_series_rejected(self):
        cfg = resolve_config(None, {"patch.L": "128"}, env={})
        with pytest.raises(ConfigError, match="patch.L"):
            settings_from_config(cfg, self.meta())

    def test_config_dict_carries_corpus_shape(self):
        cfg = resolve_config(None, {"patch.L": "16"}, env={})
        settings = settings_from_config(cfg, self.meta())
        assert settings.config_dict["data.T"] == 96
        assert settings.config_dict["data.num_classes"] == 3

    def test_multiple_constraint_violations_reported_together(self):
        cfg = resolve_config(
            None,
            {"patch.theta": "1.0", "patch.L": "16", "loss.tau": "-1"},
            env={},
        )
        with pytest.raises(ConfigError) as err:
            settings_from_config(cfg, self.meta())
        msg = str(err.value)
        assert "masking ratio" in msg and "temperature" in msg
