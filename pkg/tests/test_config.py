import json

import pytest

from src.config import DEFAULTS, RunConfig, read_config_file
from src.errors import ConfigError


def test_defaults():
    config = RunConfig()
    assert config["limits.sentences"] == 35
    assert config["selector.chunk_size"] == 7
    assert config["encoder.process_pads"] is True
    assert config["base.tokens"] == 300
    assert config.as_dict() == DEFAULTS


def test_precedence_file_then_env_then_flags(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nselector.kind = cnn\nmodel.hidden=32\ntrain.seed=1\n")
    env = {"C2F_MODEL_HIDDEN": "48", "C2F_TRAIN_SEED": "2", "HOME": "/root"}
    config = RunConfig.load(str(path), env=env, overrides={"train.seed": 3, "train.lr": None})
    assert config["selector.kind"] == "cnn"
    assert config["model.hidden"] == 48
    assert config["train.seed"] == 3
    assert config["train.lr"] == DEFAULTS["train.lr"]


def test_nested_and_flat_json_files(tmp_path):
    nested = tmp_path / "nested.json"
    nested.write_text(json.dumps({"selector": {"kind": "chunk", "fixed_j": True}, "summary.k": 2}))
    assert read_config_file(str(nested)) == {"selector.kind": "chunk", "selector.fixed_j": True, "summary.k": 2}
    config = RunConfig.load(str(nested), env={})
    assert config["selector.fixed_j"] is True and config["summary.k"] == 2


@pytest.mark.parametrize("layer", ["file", "env", "flags"])
def test_unknown_keys_are_rejected_in_every_layer(tmp_path, layer):
    path = tmp_path / "run.cfg"
    path.write_text("selector.knd=cnn\n" if layer == "file" else "")
    env = {"C2F_SELECTOR_KND": "cnn"} if layer == "env" else {}
    overrides = {"selector.knd": "cnn"} if layer == "flags" else {}
    with pytest.raises(ConfigError, match="knd|KND"):
        RunConfig.load(str(path), env=env, overrides=overrides)


@pytest.mark.parametrize("key, value", [
    ("model.hidden", "wide"),
    ("encoder.process_pads", "maybe"),
    ("selector.kind", "rnn"),
    ("summary.k", 1.5),
    ("summary.k", 0),
    ("train.decay", 0.1),
    ("train.decay", 1.5),
    ("limits.sentences", 40),
    ("train.lr", 0.0),
    ("train.batch_size", 0),
])
def test_bad_values_are_rejected(key, value):
    with pytest.raises(ConfigError):
        RunConfig({key: value})


def test_string_values_are_coerced():
    config = RunConfig({"data.title_append": "yes", "train.decay": "0.5", "summary.k": "2"})
    assert config["data.title_append"] is True
    assert config["train.decay"] == 0.5
    assert config["summary.k"] == 2


def test_config_hash_is_stable_and_sensitive():
    a, b = RunConfig(), RunConfig()
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 64
    assert a.replace(selector__kind="cnn").config_hash() != a.config_hash()


def test_save_and_reload(tmp_path):
    config = RunConfig({"train.method": "soft", "summary.mode": "soft"})
    path = config.save(str(tmp_path / "config.json"))
    payload = json.loads(open(path).read())
    assert payload["config_hash"] == config.config_hash()
    assert RunConfig.from_file(path).config_hash() == config.config_hash()


def test_invalid_file_content(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{ nope")
    with pytest.raises(ConfigError):
        read_config_file(str(bad_json))
    bad_lines = tmp_path / "bad.cfg"
    bad_lines.write_text("selector.kind\n")
    with pytest.raises(ConfigError):
        read_config_file(str(bad_lines))


def test_overlay_applies_only_explicit_keys():
    saved = RunConfig({"selector.kind": "cnn", "model.hidden": 32})
    flags = RunConfig.load(env={}, overrides={"base.tokens": 50}, dotenv=False)
    assert flags.explicit == {"base.tokens"}
    merged = saved.overlay(flags)
    assert merged["selector.kind"] == "cnn"
    assert merged["model.hidden"] == 32
    assert merged["base.tokens"] == 50
    assert saved["base.tokens"] == 300
