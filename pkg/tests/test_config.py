from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mambaspike.harness.config import (
    ConfigError, RunConfig, copy_config, dump_config, flatten, load_config, parse_config,
)

CONFIGS = sorted((Path(__file__).parent.parent / "configs").glob("*.cfg"))


def test_grammar():
    cfg = parse_config("""
        # comment line
        frontend.lif.tau_m = 20      # trailing comment
        frontend.channels = 4, 8, 16
        frontend.enabled = false
        data.dataset = "synth-gesture"
        optim.lr = 3e-4

        out_dir = runs/x
    """)
    assert cfg.frontend.lif.tau_m == 20.0
    assert cfg.frontend.channels == (4, 8, 16)
    assert cfg.frontend.enabled is False
    assert cfg.optim.lr == 3e-4
    assert cfg.out_dir == "runs/x"


def test_empty_text_gives_defaults():
    assert flatten(parse_config("")) == flatten(RunConfig())


@pytest.mark.parametrize("text,match", [
    ("frontend.lif.tau = 3", "unknown config key"),
    ("nosuch.key = 1", "unknown config key"),
    ("frontend.lif = 3", "unknown config key"),
    ("frontend.lif.tau_m = 3\nfrontend.lif.tau_m = 4", "duplicate"),
    ("train.epochs = three", "cannot parse"),
    ("frontend.enabled = maybe", "cannot parse"),
    ("train.epochs", "expected 'key = value'"),
    ("frontend.lif.tau_m = -1", "positive"),
    ("data.dataset = cifar", "dataset"),
    ("backbone.depth = 0", "depth"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_error_names_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config("train.epochs = 1\n\nbogus = 2\n")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("does/not/exist.cfg")


@pytest.mark.parametrize("path", CONFIGS, ids=[p.name for p in CONFIGS])
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert flatten(copy_config(cfg)) == flatten(cfg)


@settings(max_examples=100)
@given(st.floats(1.0, 100.0), st.integers(0, 50), st.booleans(),
       st.lists(st.integers(1, 64), min_size=1, max_size=4),
       st.sampled_from(["rate", "running-rate"]))
def test_dump_parse_round_trip(tau, epochs, enabled, channels, norm):
    cfg = RunConfig()
    cfg.frontend.lif.tau_m = tau
    cfg.train.epochs = epochs
    cfg.frontend.enabled = enabled
    cfg.frontend.channels = tuple(channels)
    cfg.bridge.norm_mode = norm
    assert flatten(parse_config(dump_config(cfg))) == flatten(cfg)
