"""Strict INI configuration: schema enforcement, coercion, canonical hashing."""

import pytest

from dise.config import (
    SCHEMA,
    canonical_text,
    config_hash,
    default_config,
    load_config,
    save_config,
)
from dise.errors import ConfigError


def test_defaults_cover_every_schema_key():
    cfg = load_config()
    assert cfg == default_config()
    assert set(cfg) == set(SCHEMA)
    for section in SCHEMA:
        assert set(cfg[section]) == set(SCHEMA[section])
    # defaults are copies, not aliases of the schema
    cfg["run"]["seed"] = 99
    assert SCHEMA["run"]["seed"] == 0


def test_file_and_overrides_layer_in_order(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nseed = 7\n[train]\nlr = 0.01\n")
    cfg = load_config(path)
    assert cfg["run"]["seed"] == 7
    assert cfg["train"]["lr"] == 0.01
    assert cfg["generate"]["length"] == 4  # untouched default
    cfg = load_config(path, overrides={"run.seed": "9", "score.per_token": "yes"})
    assert cfg["run"]["seed"] == 9
    assert cfg["score"]["per_token"] is True


def test_non_string_overrides_pass_through():
    cfg = load_config(overrides={"train.lr": 0.25, "uq.n_answers": 3})
    assert cfg["train"]["lr"] == 0.25
    assert cfg["uq"]["n_answers"] == 3


def test_unknown_sections_and_keys_are_rejected(tmp_path):
    bad_section = tmp_path / "a.ini"
    bad_section.write_text("[experiments]\nx = 1\n")
    with pytest.raises(ConfigError, match=r"unknown config section \[experiments\]"):
        load_config(bad_section)
    bad_key = tmp_path / "b.ini"
    bad_key.write_text("[run]\nverbosity = 3\n")
    with pytest.raises(ConfigError, match=r"unknown config key \[run\] verbosity"):
        load_config(bad_key)
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(overrides={"run.verbosity": "3"})
    with pytest.raises(ConfigError, match="unknown config key"):
        load_config(overrides={"nosection.seed": "3"})


def test_type_coercion_and_errors(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[score]\nper_token = off\n[remote]\ntimeout = 2.5\nretries = 4\n")
    cfg = load_config(path)
    assert cfg["score"]["per_token"] is False
    assert cfg["remote"]["timeout"] == 2.5
    assert cfg["remote"]["retries"] == 4
    bad_int = tmp_path / "d.ini"
    bad_int.write_text("[run]\nseed = seven\n")
    with pytest.raises(ConfigError, match="cannot parse 'seven' as int"):
        load_config(bad_int)
    bad_bool = tmp_path / "e.ini"
    bad_bool.write_text("[score]\nper_token = maybe\n")
    with pytest.raises(ConfigError, match="as bool"):
        load_config(bad_bool)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "absent.ini")
    mangled = tmp_path / "m.ini"
    mangled.write_text("seed = 7\n")  # key before any section header
    with pytest.raises(ConfigError, match="bad config"):
        load_config(mangled)


def test_canonical_text_is_sorted_and_repr_exact():
    text = canonical_text(load_config())
    lines = [l for l in text.splitlines() if l.startswith("[")]
    assert lines == sorted(lines)
    assert "lr = 0.05\n" in text
    assert "per_token = false\n" in text
    # repr-exact floats distinguish 0.1 from 0.1000000001
    a = canonical_text(load_config(overrides={"train.lr": 0.1}))
    b = canonical_text(load_config(overrides={"train.lr": 0.1000000001}))
    assert a != b


def test_config_hash_tracks_content_not_formatting(tmp_path):
    base = config_hash(load_config())
    assert len(base) == 16 and int(base, 16) >= 0
    assert config_hash(load_config()) == base
    # any single value change moves the hash
    assert config_hash(load_config(overrides={"run.seed": "1"})) != base
    # an INI file that restates the defaults hashes identically
    restated = tmp_path / "same.ini"
    restated.write_text("[run]\n  seed =   0\n")
    assert config_hash(load_config(restated)) == base


def test_save_config_round_trips(tmp_path):
    cfg = load_config(overrides={"train.lr": 0.125, "run.dataset": "grammar"})
    path = tmp_path / "resolved.ini"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    save_config(again, tmp_path / "second.ini")
    assert (tmp_path / "second.ini").read_bytes() == path.read_bytes()
