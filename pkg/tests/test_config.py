"""Config parsing, typed coercion, overrides and bit-exact round-trips."""

import pytest

from suparlab.config import (default_config, dump_config, format_value,
                             load_config, parse_config_text, parse_value)
from suparlab.errors import ConfigError


def test_defaults_cover_schema():
    cfg = default_config()
    assert cfg["model.d_model"] == 128
    assert cfg["train.steps"] == 300
    assert cfg["sweep.lr_exponents"] == [-10, -9, -8, -7, -6, -5, -4, -3, -2]
    assert cfg["model.scheme"] == "supar"


def test_parse_scalar_values():
    assert parse_value("3") == 3
    assert parse_value("-4") == -4
    assert parse_value("0.25") == 0.25
    assert parse_value("1e-3") == 0.001
    assert parse_value('"hello world"') == "hello world"
    assert parse_value("supar") == "supar"
    assert parse_value("[1, 2, 3]") == [1, 2, 3]
    assert parse_value("[]") == []
    assert parse_value("[0.5, sp]") == [0.5, "sp"]


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_value("[1, 2")
    with pytest.raises(ConfigError):
        parse_value("")
    with pytest.raises(ConfigError):
        parse_value("a b c")


def test_parse_config_text_lines_and_comments():
    text = """
    # a comment
    model.d_model = 256

    train.steps = 50  # trailing comment
    model.scheme = sp
    """
    cfg = parse_config_text(text)
    assert cfg == {"model.d_model": 256, "train.steps": 50,
                   "model.scheme": "sp"}


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("model.bogus = 1")


def test_type_mismatch_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("model.d_model = 0.5")   # int key
    with pytest.raises(ConfigError):
        parse_config_text("model.scheme = 3")       # str key
    with pytest.raises(ConfigError):
        parse_config_text("train.seeds = 3")        # list key


def test_number_keys_accept_ints():
    cfg = parse_config_text("model.density = 1")
    assert cfg["model.density"] == 1.0
    assert isinstance(cfg["model.density"], float)


def test_missing_equals_reports_line():
    with pytest.raises(ConfigError) as err:
        parse_config_text("model.d_model = 64\nnonsense line\n")
    assert "line 2" in str(err.value)


def test_load_config_layering(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("model.d_model = 256\ntrain.steps = 42\n")
    cfg = load_config(p, overrides=["train.steps=7", "model.scheme=sp"])
    assert cfg["model.d_model"] == 256   # from file
    assert cfg["train.steps"] == 7       # override beats file
    assert cfg["model.scheme"] == "sp"   # override beats default
    assert cfg["model.n_layers"] == 2    # untouched default


def test_load_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.cfg")


def test_bad_override_rejected():
    with pytest.raises(ConfigError):
        load_config(None, overrides=["train.steps"])
    with pytest.raises(ConfigError):
        load_config(None, overrides=["no.such.key=1"])


def test_dump_parse_round_trip_bit_exact():
    cfg = default_config()
    cfg["base.sigma"] = 0.1 + 0.2          # 0.30000000000000004
    cfg["model.density"] = 1.0 / 3.0
    cfg["sweep.densities"] = [1.0, 1.0 / 7.0]
    text = dump_config(cfg)
    again = parse_config_text(text)
    for key, val in cfg.items():
        assert key in again
        assert again[key] == val
        if isinstance(val, float):
            assert repr(again[key]) == repr(val)  # bit-exact, not approx


def test_dump_is_sorted_and_stable():
    cfg = default_config()
    a = dump_config(cfg)
    b = dump_config(dict(reversed(list(cfg.items()))))
    assert a == b
    keys = [line.split(" = ")[0] for line in a.strip().splitlines()]
    assert keys == sorted(keys)


def test_format_value_floats_use_repr():
    assert format_value(0.1) == "0.1"
    assert format_value(1.0 / 3.0) == repr(1.0 / 3.0)
    assert format_value("sp") == '"sp"'
    assert format_value([1, 0.5]) == "[1, 0.5]"
