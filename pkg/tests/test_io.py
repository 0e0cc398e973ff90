import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fraclab.io import dumps_canonical, read_matrix_csv, to_jsonable, write_columns_csv, write_field_csv, write_matrix_csv


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_matrix_csv_round_trip_is_exact(tmp_path_factory, A):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_matrix_csv(path, A, {"n": 1, "tag": "x"})
    B, header = read_matrix_csv(path)
    np.testing.assert_array_equal(B, A)
    assert header == {"n": "1", "tag": "x"}


def test_columns_csv(tmp_path):
    path = write_columns_csv(tmp_path / "c.csv", {"r": [1.0, 2.0], "N": [0.5, 0.25]}, {"s": 0.5})
    lines = path.read_text().splitlines()
    assert lines == ["# s=0.5", "r,N", "1,0.5", "2,0.25"]


def test_columns_must_share_length(tmp_path):
    with pytest.raises(ValueError):
        write_columns_csv(tmp_path / "c.csv", {"a": [1.0], "b": [1.0, 2.0]})


def test_field_csv_is_x_major(tmp_path):
    path = write_field_csv(tmp_path / "f.csv", [0.0, 1.0], [0.0, 2.0], np.array([[1.0, 2.0], [3.0, 4.0]]))
    rows = path.read_text().splitlines()[1:]
    assert rows == ["0,0,1", "0,2,2", "1,0,3", "1,2,4"]


def test_jsonable_conversions():
    obj = {"a": np.float64(1.5), "b": np.arange(2), "c": np.bool_(True), "d": float("nan"), "e": -np.inf}
    assert to_jsonable(obj) == {"a": 1.5, "b": [0, 1], "c": True, "d": "nan", "e": "-inf"}


def test_canonical_json_sorts_keys():
    text = dumps_canonical({"b": 1, "a": {"d": 2, "c": 3}})
    assert text.index('"a"') < text.index('"b"')
    assert text.index('"c"') < text.index('"d"')
    assert json.loads(text) == {"a": {"c": 3, "d": 2}, "b": 1}
    assert text.endswith("\n")
