import pytest
from pydantic import ValidationError

from src.core.errors import ConfigError
from src.core.semantic_graph import GraphVariant
from src.tools.config import RunConfig, build_run_config, load_config_file


def test_defaults():
    config = build_run_config({}, {})
    assert config.train.epochs == 30
    assert config.train.learning_rate == 0.05
    assert config.train.margin == 0.5
    assert config.train.batch_size == 16
    assert config.split_ratio == (0.5, 0.25, 0.25)
    assert config.seed == 0


def test_file_values_are_read(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("# training\nEPOCHS=12\nlearning_rate=0.1\nvariant=seed+identifier\n"
                    "train_problems=1-4\nval_problems=5\nsplit_ratio=0.6,0.2,0.2\n")
    config = build_run_config(load_config_file(path), {})
    assert config.train.epochs == 12
    assert config.train.learning_rate == 0.1
    assert config.train.variant is GraphVariant.SEED_IDENTIFIER
    assert config.train_problems == "1-4"
    assert config.split_ratio == (0.6, 0.2, 0.2)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("seed=3\nvariant=seed+type\n")
    config = build_run_config(load_config_file(path), {"seed": 9, "variant": None})
    assert config.seed == 9
    assert config.train.variant is GraphVariant.SEED_TYPE


def test_unknown_keys_rejected(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("epochs=3\noptimizer=adam\n")
    with pytest.raises(ConfigError, match="optimizer"):
        build_run_config(load_config_file(path), {})


def test_key_without_value(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("epochs\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "nope.env")
    assert load_config_file(None) == {}


def test_bad_values_fail_validation():
    with pytest.raises(ValidationError):
        build_run_config({"margin": "3"}, {})
    with pytest.raises(ValidationError):
        build_run_config({"train_pairs": "1"}, {})
    with pytest.raises(ValidationError):
        RunConfig(split_ratio="0.5,0.5")
