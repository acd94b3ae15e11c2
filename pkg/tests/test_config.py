import json

import pytest

from slateopt.config import ConfigError, ExperimentConfig, config_from_dict, load_config


class TestLoad:
    def test_defaults_round_trip(self):
        cfg = ExperimentConfig()
        assert config_from_dict(json.loads(cfg.dumps())) == cfg

    def test_partial_sections(self):
        cfg = config_from_dict({"training": {"lr": 0.01, "k": 5}, "mmr": {"k": 5}})
        assert cfg.training.lr == 0.01 and cfg.training.batch_size == 1024
        assert cfg.mmr.k == 5

    def test_int_accepted_for_float(self):
        assert config_from_dict({"training": {"lr": 1}}).training.lr == 1.0

    def test_nested_tuples(self):
        cfg = config_from_dict({"schema": {"variables": [[0, 1], [2, 3, 4]], "num_features": 5}})
        assert cfg.schema.variables == ((0, 1), (2, 3, 4))
        assert cfg.schema.build().sizes == (2, 3)

    def test_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"seed": 4}')
        assert load_config(p).seed == 4


class TestErrors:
    @pytest.mark.parametrize("data, path", [
        ({"training": {"lr": "fast"}}, "training.lr"),
        ({"training": {"speed": 1}}, "training.speed"),
        ({"bogus": 1}, "bogus"),
        ({"schema": {"variables": [[0, "x"]]}}, "schema.variables[0][1]"),
        ({"model": {"batch_norm": 1}}, "model.batch_norm"),
        ({"simulation": {"nu": 2.5}}, "simulation.nu"),
        ({"training": {"alpha": 2.0}}, "training"),
        ({"paths": []}, "paths"),
    ])
    def test_field_path(self, data, path):
        with pytest.raises(ConfigError) as info:
            config_from_dict(data)
        assert info.value.path == path
        assert str(info.value).startswith(path + ":")

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{seed: 1}")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "none.json")

    def test_schema_requires_dimension(self):
        with pytest.raises(ConfigError, match="schema.num_features"):
            ExperimentConfig().schema.build()

    def test_schema_column_out_of_range(self):
        cfg = config_from_dict({"schema": {"variables": [[0, 9]], "num_features": 4}})
        with pytest.raises(ConfigError, match="schema"):
            cfg.schema.build()


def test_with_seed_propagates():
    cfg = ExperimentConfig().with_seed(7)
    assert (cfg.seed, cfg.simulation.rng_seed, cfg.training.rng_seed, cfg.synthetic.seed) == (7, 7, 7, 7)


def test_model_config_dimensions():
    cfg = config_from_dict({"schema": {"variables": [[0, 1], [2, 3, 4]], "num_features": 6},
                            "training": {"k": 4}, "model": {"use_condition_info": False}})
    m = cfg.model_config()
    assert (m.feature_dim, m.ci_dim, m.slate_size, m.use_condition_info) == (6, 5, 4, False)
