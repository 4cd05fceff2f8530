import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lowdev import textio
from lowdev.fkpp import GridSpec, SpaceTimeField


@given(st.floats(allow_nan=False))
def test_float_round_trip(x):
    assert textio.parse_value(textio.format_value(x)) == x


def test_scalar_kinds():
    for v in (True, False, None, 3, "deep", [1.0, 2.5]):
        assert textio.parse_value(textio.format_value(v)) == v
    assert math.isnan(textio.parse_value(textio.format_value(float("nan"))))


def test_field_round_trip(tmp_path):
    grid = GridSpec(-1.0, 1.0, 0.25, 0.05, 0.1)
    rng = np.random.default_rng(0)
    fld = SpaceTimeField(grid, np.array([0.05, 0.1]), np.array([0, 0]), rng.random((2, grid.n_cells)), "v")
    path = textio.write_field(tmp_path / "f.txt", fld)
    back = textio.read_field(path)
    assert back.field_kind == "v" and back.grid == grid
    assert np.array_equal(back.values, fld.values) and np.array_equal(back.times, fld.times)


def test_kv_round_trip(tmp_path):
    groups = {"deep:-1.0": {"rate": 2.0, "regime": "deep", "ok": True}, "b": {"n": 3}}
    path = textio.write_kv(tmp_path / "r.txt", groups)
    assert textio.read_kv(path) == groups


def test_columnar_header(tmp_path):
    path = textio.write_columnar(tmp_path / "c.txt", "trend", ["t", "y"], [(1.0, 0.5)], {"delta": "0.7"})
    kind, header, cols, rows = textio.read_columnar(path)
    assert (kind, header, cols, rows) == ("trend", {"delta": "0.7"}, ["t", "y"], [[1.0, 0.5]])
