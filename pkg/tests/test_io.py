import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stylegraph.centrality import CentralitySeries
from stylegraph.errors import DomainError, EmptyInputError, OrderingError, ParseError
from stylegraph.io import (
    inject_position_noise,
    inject_series_noise,
    parse_trajectory_csv,
    trajectory_to_csv,
    write_plot_csv,
)


def test_minimal_input():
    ts = parse_trajectory_csv("0,a,car,0.0,0.0\n1,a,car,1.0,0.0", 10.0)
    assert len(ts) == 2
    assert ts.agent_index == {"a": 0}


def test_first_appearance_index():
    ts = parse_trajectory_csv("0,a,car,0.0,0.0\n0,b,car,5.0,0.0\n1,a,car,1.0,0.0", 10.0)
    assert ts.agent_index == {"a": 0, "b": 1}


def test_header_is_optional():
    body = "0,a,car,0.0,0.0\n"
    assert parse_trajectory_csv("t,agent_id,agent_type,x,y\n" + body, 1.0).frames == parse_trajectory_csv(body, 1.0).frames


def test_nan_coordinate_reports_line():
    with pytest.raises(ParseError) as err:
        parse_trajectory_csv("0,a,car,0.0,0.0\n1,a,car,NaN,0", 10.0)
    assert err.value.line == 2


@pytest.mark.parametrize(
    "text, exc",
    [
        ("", EmptyInputError),
        ("0,a,car,0.0\n", ParseError),
        ("x,a,car,0.0,0.0\n", ParseError),
        ("2,a,car,0,0\n1,a,car,0,0\n", OrderingError),
        ("-1,a,car,0,0\n", ParseError),
    ],
)
def test_malformed_inputs(text, exc):
    with pytest.raises(exc):
        parse_trajectory_csv(text, 10.0)


def test_bad_frame_rate():
    with pytest.raises(DomainError):
        parse_trajectory_csv("0,a,car,0,0\n", 0.0)


def test_unknown_type_is_kept_as_other():
    ts = parse_trajectory_csv("0,a,tractor,0,0\n", 1.0)
    assert ts.agent_types["a"] == "other"


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@given(st.lists(st.tuples(st.integers(0, 30), st.sampled_from("abcd"), finite, finite), min_size=1, max_size=40))
def test_roundtrip_is_identity(rows):
    seen = {}
    for t, a, x, y in sorted(rows, key=lambda r: r[0]):
        seen[(t, a)] = (x, y)  # one observation per (frame, agent)
    text = "".join(f"{t},{a},car,{x!r},{y!r}\n" for (t, a), (x, y) in sorted(seen.items()))
    ts = parse_trajectory_csv(text, 10.0)
    again = parse_trajectory_csv(trajectory_to_csv(ts), 10.0)
    assert again.frames == ts.frames
    assert again.agent_index == ts.agent_index
    assert again.agent_types == ts.agent_types


def _walk(n=2500):
    rows = [f"{t},{a},car,{t * 1.5},{i * 3.5}\n" for t in range(n // 4) for i, a in enumerate("abcd")]
    return parse_trajectory_csv("".join(rows), 10.0)


def test_position_noise_zero_is_bitwise_identity():
    ts = _walk(200)
    assert inject_position_noise(ts, 0.0, 7).frames == ts.frames


def test_position_noise_is_deterministic_and_seeded():
    ts = _walk(200)
    a = inject_position_noise(ts, 0.1, 3)
    assert a.frames == inject_position_noise(ts, 0.1, 3).frames
    assert a.frames != inject_position_noise(ts, 0.1, 4).frames


def test_position_noise_std_within_5_percent():
    ts = _walk(10_000)  # 2500 frames x 4 agents x 2 coords
    noisy = inject_position_noise(ts, 0.1, 0)
    d = [noisy.frames[t][a][k] - ts.frames[t][a][k] for t in ts.frames for a in ts.frames[t] for k in (0, 1)]
    assert abs(np.std(d) - 0.1) < 0.005


def _series(n=50):
    return CentralitySeries("a", "degree", np.linspace(0, 5, n), (0, n - 1))


def test_series_noise_zero_is_identity():
    s = _series()
    assert np.array_equal(inject_series_noise(s, 0.0, 1).values, s.values)


@pytest.mark.parametrize("eps", [1e-4, 1e-3, 1e-2, 1e-1])
def test_series_noise_is_bounded(eps):
    s = _series(500)
    dev = np.abs(inject_series_noise(s, eps, 9).values - s.values)
    assert dev.max() <= eps
    assert dev.max() > 0.5 * eps


def test_series_noise_rejects_negative():
    with pytest.raises(DomainError):
        inject_series_noise(_series(), -1.0, 0)


def test_plot_csv_layout():
    text = write_plot_csv([3, 4], [0.5, 1.0], peak=4)
    assert text.splitlines() == ["# t_sle,4", "t,value", "3,0.5", "4,1.0"]
    assert not math.isnan(float(text.splitlines()[-1].split(",")[1]))
