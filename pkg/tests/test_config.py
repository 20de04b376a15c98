import pytest

from graspmap.config import build_settings, format_settings, load_settings, parse_lines
from graspmap.errors import ConfigError


def test_defaults():
    s = build_settings({})
    assert s.train.learning_rate == 0.0005
    assert s.train.momentum == 0.9
    assert s.net.num_heads == 5
    assert s.split_mode == "shape_wise"


def test_aliases_and_types():
    s = build_settings(parse_lines("train.lr=0.01\nnet.heads=3\nnet.encoder_channels=8,16,32\n"
                                   "train.batch_size=auto\nnet.batch_norm=false\ndata.split=object"))
    assert s.train.learning_rate == 0.01
    assert s.net.num_heads == 3
    assert s.net.encoder_channels == (8, 16, 32)
    assert s.train.batch_size is None
    assert s.net.batch_norm is False
    assert s.split_mode == "object_wise"


@pytest.mark.parametrize("text", ["train.learning_rat=1", "model.lr=1", "lr=1", "train.epochs=ten",
                                  "data.split=random", "net.batch_norm=maybe", "no equals sign"])
def test_bad_config_rejected(text):
    with pytest.raises(ConfigError):
        build_settings(parse_lines(text))


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# base\ntrain.epochs=50\ntrain.lr=0.0005\n\n")
    s = load_settings(path, ["train.epochs=2"])
    assert s.train.epochs == 2
    assert s.train.learning_rate == 0.0005
    with pytest.raises(FileNotFoundError):
        load_settings(tmp_path / "missing.cfg")


def test_format_round_trip():
    s = build_settings(parse_lines("train.lr=0.02\nnet.heads=2\ndata.fold=1"))
    again = build_settings(parse_lines(format_settings(s)))
    assert again == s
