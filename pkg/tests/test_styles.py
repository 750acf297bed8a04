import dataclasses

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import episode
from stylegraph.centrality import CentralitySeries
from stylegraph.config import RunConfig
from stylegraph.errors import DomainError, StyleKindError
from stylegraph.io import TrajectorySet
from stylegraph.polyfit import CentralityPolynomial
from stylegraph.styles import (
    CENTRALITY_OF,
    SPECIFIC_STYLES,
    EpisodeAnalysis,
    StyleCurve,
    StyleKind,
    classify_conservative,
    detect_weaving,
    local_curve,
    style_intensity,
    style_likelihood,
    style_report,
)
from stylegraph.synthgen import LANE_WIDTH, SUBJECT, lane_change_frames, quintic, scripted_episode

CFG = RunConfig()


def closeness_series(values, t0=0):
    values = np.asarray(values, float)
    return CentralitySeries("a", "closeness", values, (t0, t0 + len(values) - 1))


def poly(beta, window=(0, 10), kind=None):
    return CentralityPolynomial(np.asarray(beta, float), len(beta) - 1, window=window, kind=kind)


# likelihood / intensity --------------------------------------------------------------

def test_constant_polynomial_has_zero_sle():
    c = style_likelihood(poly([3.0, 0.0, 0.0]), StyleKind.OVERSPEEDING)
    assert not c.sle.any() and c.sle_max == 0.0


def test_pure_quadratic_sle():
    c = style_likelihood(poly([0.0, 0.0, 1.0]), StyleKind.OVERTAKING)
    assert np.array_equal(c.sle, np.abs(2.0 * np.arange(11)))
    assert (c.sle_max, c.t_sle) == (20.0, 10)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_sie_of_quadratic_is_constant(a, b, c):
    sie = style_intensity(poly([a, b, c]), StyleKind.SUDDEN_LANE_CHANGE)
    assert np.allclose(sie, abs(2 * c), rtol=0, atol=1e-12)


def test_linear_polynomial_has_zero_sie():
    assert not style_intensity(poly([1.0, 2.0]), StyleKind.OVERSPEEDING).any()


def test_wrong_centrality_kind_is_rejected():
    with pytest.raises(StyleKindError):
        style_likelihood(poly([0, 1, 0], kind="degree"), StyleKind.OVERTAKING)
    with pytest.raises(StyleKindError):
        style_intensity(poly([0, 1, 0], kind="closeness"), StyleKind.OVERSPEEDING)
    with pytest.raises(StyleKindError):
        style_likelihood(poly([0, 1, 0]), StyleKind.WEAVING)
    with pytest.raises(StyleKindError):
        detect_weaving(CentralitySeries("a", "degree", np.zeros(20), (0, 19)))


def test_style_parse():
    assert StyleKind.parse("Sudden-Lane-Change") is StyleKind.SUDDEN_LANE_CHANGE
    with pytest.raises(DomainError):
        StyleKind.parse("drifting")


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=80), st.integers(3, 60))
def test_sle_sie_nonnegative(values, window):
    c = local_curve(closeness_series(values), window)
    assert (c.sle >= 0).all() and (c.sie >= 0).all()


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100.0))
def test_scaling_values_scales_curves(seed, k):
    y = np.random.default_rng(seed).normal(size=60).cumsum()
    a = local_curve(closeness_series(y), 21)
    b = local_curve(closeness_series(k * y), 21)
    assert np.allclose(b.sle, k * a.sle, rtol=1e-9, atol=1e-12)
    assert np.allclose(b.sie, k * a.sie, rtol=1e-9, atol=1e-12)
    assert a.t_sle == b.t_sle or np.isclose(a.sle[a.t_sle], a.sle[b.t_sle], rtol=1e-9)


# weaving ----------------------------------------------------------------------------

def test_constant_series_has_no_critical_points():
    assert detect_weaving(closeness_series(np.full(60, 0.3))) == []


def test_ramp_has_no_critical_points():
    assert detect_weaving(closeness_series(np.linspace(0.1, 0.9, 60))) == []


def test_sine_extrema():
    t = np.arange(60)
    pts = detect_weaving(closeness_series(np.sin(2 * np.pi * t / 20)))
    assert len(pts) == 6
    for c, expected in zip(pts, (5, 15, 25, 35, 45, 55)):
        assert abs(c.t_c - expected) <= 2


def smoothed_sign_changes(y: np.ndarray, k: int = 3) -> int:
    """Oracle: sign changes of a k-point moving average of the first difference."""
    dy = np.convolve(np.diff(y), np.ones(k) / k, mode="valid")
    s = np.sign(dy[np.abs(dy) > 1e-12])
    return int(np.count_nonzero(s[1:] != s[:-1]))


@given(st.integers(20, 60), st.floats(0, 2 * np.pi), st.floats(0.05, 5.0), st.integers(80, 200), st.floats(0, 3))
def test_weaving_count_matches_sign_change_oracle(period, phase, amp, n, offset):
    t = np.arange(n)
    y = offset + amp * np.sin(2 * np.pi * t / period + phase)
    # only extrema that clear the sharpness floor (x3) are expected to be admitted
    sharp = amp * (2 * np.pi / period) ** 2 / 2 * CFG.eps_ball
    assume(sharp / np.mean(np.abs(y)) > 3 * CFG.sharp_tol)
    got = len(detect_weaving(closeness_series(y)))
    assert abs(got - smoothed_sign_changes(y)) <= 1


def test_weaving_argument_checks():
    s = closeness_series(np.zeros(20))
    for kw in ({"stride": 0}, {"eps_ball": 0}, {"window_len": 2}, {"window_len": 21}):
        with pytest.raises(DomainError):
            detect_weaving(s, **kw)


# reports ----------------------------------------------------------------------------

def test_conservative_rule():
    zero = StyleCurve.from_samples(np.arange(5), np.zeros(5), np.zeros(5))
    report = type("R", (), {})()
    report.curves = {k: zero for k in SPECIFIC_STYLES}
    report.weave_count = 0
    assert classify_conservative(report, 0.0)
    edge = StyleCurve.from_samples(np.arange(5), np.array([0, 0, 0.5, 0, 0]), np.zeros(5))
    report.curves[StyleKind.OVERSPEEDING] = edge
    assert classify_conservative(report, 0.5)  # inclusive
    assert not classify_conservative(report, 0.4999)
    report.curves[StyleKind.OVERSPEEDING] = zero
    report.weave_count = 1
    assert not classify_conservative(report, 1.0)


def test_overspeeder_is_not_conservative():
    ts, _ = scripted_episode(StyleKind.OVERSPEEDING, 0)
    assert style_report(ts, SUBJECT, CFG).conservative_flag is False


def test_single_stationary_agent():
    ts = episode({"a": [(t, 5.0, 1.0) for t in range(40)]})
    r = style_report(ts, "a", CFG)
    assert r.conservative_flag is True
    assert all(r.sle_max(s) == 0.0 for s in SPECIFIC_STYLES)


def test_scripted_lane_change_peak_at_30():
    for style in (StyleKind.SUDDEN_LANE_CHANGE, StyleKind.OVERTAKING):
        ts, truth = scripted_episode(style, 3, peak=30, horizon=100)
        assert truth.maneuvers[0].peak == 30
        assert abs(style_report(ts, SUBJECT, CFG).t_sle(style) - 30) <= 10


def test_reports_are_deterministic():
    ts, _ = scripted_episode(StyleKind.WEAVING, 1)
    a = style_report(ts, SUBJECT, CFG).to_dict()
    b = style_report(ts, SUBJECT, CFG).to_dict()
    assert a == b


@given(st.integers(0, 50), st.integers(1, 500))
def test_time_shift_equivariance(seed, shift):
    ts, _ = scripted_episode(StyleKind.OVERTAKING, seed, horizon=80, n_vehicles=3)
    shifted = TrajectorySet({t + shift: pos for t, pos in ts.frames.items()}, ts.frame_rate_hz,
                            dict(ts.agent_index), dict(ts.agent_types))
    a = EpisodeAnalysis(ts, CFG).report(SUBJECT)
    b = EpisodeAnalysis(shifted, CFG).report(SUBJECT)
    for s in SPECIFIC_STYLES:
        assert b.t_sle(s) == a.t_sle(s) + shift
        assert b.sle_max(s) == a.sle_max(s)


def test_overspeeder_beats_uniform_agents():
    wins = 0
    for seed in range(100):
        ts, _ = scripted_episode(StyleKind.OVERSPEEDING, seed, n_vehicles=5)
        analysis = EpisodeAnalysis(ts, CFG)
        sle = {a: local_curve(analysis.series(a, "degree"), CFG.sle_window).sle_max for a in ts.agents}
        wins += sle[SUBJECT] > max(v for a, v in sle.items() if a != SUBJECT)
    assert wins >= 95


def _lane_change(jerk: float, seed: int) -> TrajectorySet:
    rng = np.random.default_rng(seed)
    frames = lane_change_frames(jerk, 10.0)
    start, n = 40, 120
    tracks = {"s": [], "a1": [], "a2": []}
    for t in range(n):
        x = 2.5 * t
        frac = quintic((t - start) / frames)
        tracks["s"].append((t, x, LANE_WIDTH * frac))
        tracks["a1"].append((t, x + 8 + rng.uniform(-0.5, 0.5), LANE_WIDTH))
        tracks["a2"].append((t, x - 8 + rng.uniform(-0.5, 0.5), LANE_WIDTH))
    return episode(tracks)


def test_sharper_lane_change_has_larger_intensity():
    def mean_sie(jerk):
        vals = []
        for seed in range(10):
            c = EpisodeAnalysis(_lane_change(jerk, seed), RunConfig(sle_window=21)).report("s")
            vals.append(c.curves[StyleKind.OVERTAKING].sie[30:100].mean())
        return np.mean(vals)

    assert mean_sie(3.0) / mean_sie(1.0) > 1


def test_centrality_assignment():
    assert CENTRALITY_OF[StyleKind.OVERSPEEDING] == "degree"
    assert {CENTRALITY_OF[s] for s in SPECIFIC_STYLES if s is not StyleKind.OVERSPEEDING} == {"closeness"}


def test_noise_is_reproducible_per_agent():
    ts, _ = scripted_episode(StyleKind.OVERTAKING, 2, horizon=80)
    cfg = dataclasses.replace(CFG, series_noise=1e-2, seed=5)
    a = EpisodeAnalysis(ts, cfg).series(SUBJECT, "closeness")
    b = EpisodeAnalysis(ts, cfg).series(SUBJECT, "closeness")
    clean = EpisodeAnalysis(ts, CFG).series(SUBJECT, "closeness")
    assert np.array_equal(a.values, b.values)
    assert 0 < np.abs(a.values - clean.values).max() <= 1e-2
