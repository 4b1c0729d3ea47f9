import pytest

from spreadrag.config import RunConfig, config_from_dict, load_config
from spreadrag.errors import ConfigError


def test_defaults_match_shipped_parameters():
    config = RunConfig()
    assert (config.index.chunk_size, config.index.overlap) == (500, 200)
    assert (config.baseline_index.chunk_size, config.baseline_index.overlap) == (500, 100)
    assert config.pipeline.max_steps == 3
    assert config.api.embed_model == "BAAI/bge-large-en-v1.5"
    assert (config.retrieval.tau_a, config.retrieval.tau_d, config.retrieval.tau_r) == (
        0.5,
        0.45,
        0.5,
    )


def test_yaml_round_trip(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(RunConfig().to_yaml())
    assert load_config(str(path)) == RunConfig()


def test_partial_override():
    config = config_from_dict({"retrieval": {"tau_d": 0.3}, "eval": {"seed": 5}})
    assert config.retrieval.tau_d == 0.3
    assert config.retrieval.tau_a == 0.5
    assert config.eval.seed == 5


def test_preset_merges_before_explicit_keys():
    config = config_from_dict({"retrieval": {"preset": "twowiki", "n": 7}})
    assert config.retrieval.k == 10
    assert config.retrieval.n == 7


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict({"retrieval": {"preset": "neverland"}})
    assert "preset" in str(excinfo.value)


def test_preset_key_only_valid_in_retrieval():
    with pytest.raises(ConfigError):
        config_from_dict({"index": {"preset": "musique"}})


def test_unknown_section_and_key_report_dotted_path():
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict({"retrieval": {"tau_x": 1}})
    assert "retrieval.tau_x" in str(excinfo.value)
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict({"mystery": {}})
    assert "mystery" in str(excinfo.value)


def test_type_errors_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"retrieval": {"k": "three"}})
    with pytest.raises(ConfigError):
        config_from_dict({"retrieval": {"tau_a": True}})
    with pytest.raises(ConfigError):
        config_from_dict({"api": {"base_url": 42}})


def test_int_accepted_for_float_field():
    config = config_from_dict({"retrieval": {"tau_a": 1}})
    assert config.retrieval.tau_a == 1.0


def test_domain_validation_wrapped_as_config_error():
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict({"retrieval": {"c": 1.0}})
    assert "retrieval" in str(excinfo.value)


def test_empty_sections_fall_back_to_defaults():
    config = config_from_dict({"retrieval": None})
    assert config == RunConfig()


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.yaml"))


def test_invalid_yaml_is_config_error(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("retrieval: [unclosed")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_non_mapping_top_level_rejected(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(str(path))
