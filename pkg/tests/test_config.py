import pytest
from hypothesis import given, strategies as st

from dualview.config import ConfigError, RunConfig, convert, parse_config_text, read_config


def test_round_trip_text():
    cfg = RunConfig(data="/d", out="/o", kind="multimodal", epochs=3, lr=0.5, rotate=False)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_comments_and_dashes():
    raw = parse_config_text("# header\nseed-crop = 256  # inline\n\nkind=parallel\n")
    assert raw == {"seed_crop": "256", "kind": "parallel"}


def test_errors_name_the_problem(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys: bogus"):
        RunConfig.from_text("bogus = 1")
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("a = 1\nno equals sign")
    with pytest.raises(ConfigError, match="epochs"):
        RunConfig.from_text("epochs = many")
    with pytest.raises(FileNotFoundError):
        read_config(tmp_path / "none.txt")


@given(st.booleans())
def test_bool_conversion(b):
    assert convert(str(b), bool) is b
    assert convert("yes" if b else "off", bool) is b


def test_bad_bool():
    with pytest.raises(ConfigError, match="boolean"):
        convert("maybe", bool, "rotate")
