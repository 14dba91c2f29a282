"""Run-config schema: defaults, unknown-key rejection, type checking."""

import json
from pathlib import Path

import pytest

from flowbg.config import DEFAULT_CONFIG, load_config, validate_config
from flowbg.errors import ConfigError

REPO = Path(__file__).resolve().parent.parent


class TestDefaults:
    def test_empty_config_fills_defaults(self):
        cfg = validate_config({})
        assert cfg.K == 4 and cfg.D == 2
        assert cfg.model_type == "eqflow"
        assert cfg.train.batch_size == 256
        assert cfg.train.n_iters_ml == 2000 and cfg.train.n_iters_mixed == 2000
        assert cfg.mcmc.n_samples == 10000
        assert cfg.energy_params.a == -4.0

    def test_seed_propagates_to_sections(self):
        cfg = validate_config({"seed": 17})
        assert cfg.train.seed == 17
        assert cfg.mcmc.seed == 17

    def test_to_dict_revalidates(self):
        cfg = validate_config({"seed": 3, "system": {"K": 5}})
        again = validate_config(cfg.to_dict())
        assert again.K == 5 and again.seed == 3


class TestRejection:
    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            validate_config({"systems": {}})

    @pytest.mark.parametrize("section,payload", [
        ("system", {"K": 4, "particles": 3}),
        ("model", {"type": "eqflow", "width": 8}),
        ("train", {"batchsize": 8}),
        ("mcmc", {"nsamples": 10}),
        ("experiment", {"fraction": 0.5}),
        ("paths", {"output": "x"}),
    ])
    def test_unknown_nested_keys(self, section, payload):
        with pytest.raises(ConfigError):
            validate_config({section: payload})

    def test_model_hyperparams_checked_per_type(self):
        validate_config({"model": {"type": "eqflow", "hyperparams": {"M": 16}}})
        with pytest.raises(ConfigError):
            validate_config({"model": {"type": "eqflow", "hyperparams": {"L": 4}}})
        validate_config({"model": {"type": "realnvp", "hyperparams": {"L": 4}}})
        with pytest.raises(ConfigError):
            validate_config({"model": {"type": "realnvp", "hyperparams": {"M": 16}}})

    def test_bad_types(self):
        with pytest.raises(ConfigError):
            validate_config({"seed": "zero"})
        with pytest.raises(ConfigError):
            validate_config({"train": {"batch_size": 0.5}})
        with pytest.raises(ConfigError):
            validate_config({"system": {"K": True}})

    def test_domain_checks(self):
        with pytest.raises(ConfigError):
            validate_config({"system": {"D": 4}})
        with pytest.raises(ConfigError):
            validate_config({"system": {"K": 1}})
        with pytest.raises(ConfigError):
            validate_config({"train": {"kl_weight": 1.5}})
        with pytest.raises(ConfigError):
            validate_config({"experiment": {"split_fraction": 1.0}})
        with pytest.raises(ConfigError):
            validate_config({"system": {"energy": {"b": -0.1}}})

    def test_init_shape_checked(self):
        with pytest.raises(ConfigError):
            validate_config({"mcmc": {"init": [[0.0, 0.0]]}})
        cfg = validate_config({"system": {"K": 2},
                               "mcmc": {"init": [[0.0, 0.0], [4.0, 0.0]]}})
        assert cfg.mcmc.init.shape == (2, 2)


class TestLoadConfig:
    def test_load_from_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"seed": 5}))
        assert load_config(path).seed == 5

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json_is_config_error(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_shipped_experiment_configs_valid(self):
        for name in ("experiment1", "experiment2"):
            cfg = load_config(REPO / "configs" / f"{name}.json")
            assert cfg.experiment["name"] == name

    def test_default_config_template_is_schema_valid(self):
        validate_config(DEFAULT_CONFIG)
