import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tmbumps.profile import ProfileTable, fmt
from tmbumps.serialize import dumps

finite = st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False)


@st.composite
def tables(draw):
    n = draw(st.integers(1, 40))
    steps = draw(arrays(float, n - 1, elements=st.floats(1e-9, 1e3)))
    grid = np.concatenate([[0.0], np.cumsum(steps)])
    grid = np.unique(grid)
    n = len(grid)
    value = draw(arrays(float, n, elements=finite))
    deriv = draw(arrays(float, n, elements=finite))
    coord = draw(st.sampled_from(["radial_r", "log_t"]))
    return ProfileTable(coord, grid, value, deriv)


@settings(max_examples=100, deadline=None)
@given(tables())
def test_csv_round_trip_is_exact(tab):
    back = ProfileTable.from_csv(tab.to_csv())
    assert back.coordinate == tab.coordinate
    assert np.array_equal(back.grid, tab.grid)
    assert np.array_equal(back.value, tab.value)
    assert np.array_equal(back.derivative, tab.derivative)


@settings(max_examples=200)
@given(finite)
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_csv_layout(tmp_path):
    tab = ProfileTable("log_t", [0.0, 0.5], [6.0, 5.9], [-1 / 6, -0.2])
    path = tmp_path / "p.csv"
    tab.to_csv(path)
    raw = path.read_bytes()
    assert raw.startswith(b"coord,t_or_r,value,derivative\r\n")
    assert raw.count(b"\r\n") == 3
    assert b"log_t,0,6,-0.16666666666666666\r\n" in raw
    assert ProfileTable.from_csv(path).value[1] == 5.9


@pytest.mark.parametrize(
    "grid",
    [[0.1, 0.2], [0.0, 0.0], [0.0, 2.0, 1.0], []],
)
def test_grid_validation(grid):
    with pytest.raises(ValueError):
        ProfileTable("radial_r", grid, np.zeros(len(grid)), np.zeros(len(grid)))


def test_rejects_unknown_coordinate():
    with pytest.raises(ValueError):
        ProfileTable("theta", [0.0], [1.0], [0.0])


def test_rejects_bad_header():
    with pytest.raises(ValueError):
        ProfileTable.from_csv("a,b,c,d\r\nlog_t,0,1,0\r\n")


def test_rejects_mixed_coordinates():
    text = "coord,t_or_r,value,derivative\r\nlog_t,0,1,0\r\nradial_r,1,1,0\r\n"
    with pytest.raises(ValueError):
        ProfileTable.from_csv(text)


def test_dumps_precision_and_nonfinite():
    text = dumps({"a": 0.1, "b": [1, math.nan, math.inf], "c": np.float64(1 / 3), "d": True})
    data = json.loads(text)
    assert data == {"a": 0.1, "b": [1, None, None], "c": 1 / 3, "d": True}
    assert "0.33333333333333331" in text
