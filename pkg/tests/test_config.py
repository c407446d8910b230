import pytest

from tweetframe.config import ConfigError, ModelConfig, load_config

TABLE_DEFAULTS = {
    "model_name": "vinai/bertweet-base",
    "dropout_p": 0.1,
    "trials": 20,
    "cross_val_folds": 7,
    "learning_rate": 3e-5,
    "max_epochs": 25,
    "accumulate_grad_batches": 1,
    "stopping_patience": 3,
    "batch_size": 64,
    "global_seed": 2025,
}


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("")
    cfg = load_config(p)
    for key, value in TABLE_DEFAULTS.items():
        assert getattr(cfg, key) == value


def test_no_file():
    assert load_config() == ModelConfig()


def test_override_trials():
    cfg = load_config(overrides=["trials=1"])
    assert cfg.trials == 1
    assert cfg.replace(trials=20) == ModelConfig()


@pytest.mark.parametrize("item,message", [
    ("batch_size=zero", "batch_size"),
    ("batch_size=0", "batch_size must be positive"),
    ("learning_rate=-1", "learning_rate must be positive"),
    ("nonsense=1", "unknown config key(s): nonsense"),
    ("label_source=both", "label_source"),
    ("dropout_p=1.0", "dropout_p"),
    ("trials", "not key=value"),
])
def test_bad_values(item, message):
    with pytest.raises(ConfigError, match=message.replace("(", r"\(").replace(")", r"\)")):
        load_config(overrides=[item])


def test_file_then_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("trials: 5\nlearning_rate: 1.0e-4\nmodel_name: scratch:tiny\n")
    cfg = load_config(p, ["trials=2"])
    assert (cfg.trials, cfg.learning_rate, cfg.model_name) == (2, 1e-4, "scratch:tiny")


def test_int_coerced_to_float():
    assert load_config(overrides=["dropout_p=0"]).dropout_p == 0.0


def test_non_mapping_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- a\n- b\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_digest_tracks_values():
    assert ModelConfig().digest() == ModelConfig().digest()
    assert ModelConfig().digest() != ModelConfig(trials=3).digest()


def test_decay_lambda():
    assert ModelConfig().decay_lambda == pytest.approx(3e-5 * 0.01)
