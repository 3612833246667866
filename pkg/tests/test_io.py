import io
import json
import math

import numpy as np
import pytest

from bdspectra.io import format_value, jsonable, rows_to_records, write_csv, write_json


@pytest.mark.parametrize("v,text", [
    (None, ""), (True, "1"), (np.bool_(False), "0"), (3, "3"), (np.int64(7), "7"),
    (0.1, "0.1"), (np.float64(1 / 3), repr(1 / 3)), (1e-300, "1e-300"), ("S1only", "S1only"),
])
def test_format_value(v, text):
    assert format_value(v) == text


def test_floats_round_trip():
    rng = np.random.default_rng(0)
    for x in rng.standard_normal(200) * 10.0 ** rng.integers(-30, 30, 200):
        assert float(format_value(x)) == x


def test_csv_layout():
    buf = io.StringIO()
    write_csv(buf, ["a", "b"], [(1, 0.5), (2, None)])
    assert buf.getvalue() == "a,b\n1,0.5\n2,\n"


def test_json_nonfinite_become_null():
    buf = io.StringIO()
    write_json(buf, {"x": math.nan, "y": [np.float64(np.inf), 1.5], "z": np.arange(2)})
    assert json.loads(buf.getvalue()) == {"x": None, "y": [None, 1.5], "z": [0, 1]}
    assert jsonable((np.bool_(True),)) == [True]


def test_records():
    assert rows_to_records(["j", "rho"], [(0, 1.0)]) == [{"j": 0, "rho": 1.0}]
