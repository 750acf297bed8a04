"""Run configuration document."""
from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, strategies as st

from stylegraph.config import CONFIG_ENV, RunConfig, load_config
from stylegraph.errors import ConfigError

configs = st.builds(
    RunConfig,
    mu=st.floats(0.1, 100.0),
    capacity=st.integers(1, 5000),
    dwell=st.integers(0, 50),
    degree=st.integers(2, 5),
    delta=st.floats(1.01, 1e6),
    sle_window=st.integers(6, 101),
    weave_window=st.integers(3, 31),
    stride=st.integers(1, 5),
    eps_ball=st.integers(1, 5),
    sharp_tol=st.floats(0, 1),
    conservative_tol=st.none() | st.floats(0, 1),
    frame_rate=st.floats(0.5, 60),
    seed=st.integers(0, 2**31),
    feature_layout=st.sampled_from(["coefficients", "extended"]),
    series_noise=st.floats(0, 1),
    jobs=st.integers(1, 8),
    paths=st.dictionaries(st.sampled_from(["input", "out", "model"]), st.text(min_size=1, max_size=10)),
)


@given(configs)
def test_round_trip_is_lossless(cfg):
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_defaults():
    cfg = RunConfig()
    assert (cfg.mu, cfg.capacity, cfg.degree, cfg.delta, cfg.frame_rate) == (10.0, 1000, 2, 2.0, 10.0)


@pytest.mark.parametrize(
    "bad",
    [{"mu": 0}, {"mu": float("inf")}, {"capacity": 0}, {"degree": 1}, {"delta": 1.0}, {"sle_window": 2},
     {"weave_window": 2}, {"stride": 0}, {"eps_ball": 0}, {"sharp_tol": -1}, {"conservative_tol": -0.1},
     {"frame_rate": 0}, {"feature_layout": "wide"}, {"series_noise": -1}, {"jobs": 0}, {"dwell": -1}],
)
def test_out_of_range_values(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_document_errors():
    with pytest.raises(ConfigError):
        RunConfig.from_json('{"mu": 5, "colour": "red"}')
    with pytest.raises(ConfigError):
        RunConfig.from_json("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.from_json("{not json")


def test_replace_skips_unset_overrides():
    cfg = RunConfig(mu=5.0)
    assert cfg.replace(mu=None, seed=3) == dataclasses.replace(cfg, seed=3)


def test_env_var_supplies_default_path(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(RunConfig(mu=7.5).to_json())
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert load_config().mu == 7.5
    monkeypatch.delenv(CONFIG_ENV)
    assert load_config() == RunConfig()
