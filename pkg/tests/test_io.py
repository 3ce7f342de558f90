import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusresponse.io import emit_csv, format_value, read_csv, write_json


def test_empty_table_is_header_only(tmp_path):
    emit_csv(["gamma", "mean", "std_error"], [], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "gamma,mean,std_error\n"


def test_identical_inputs_identical_bytes(tmp_path):
    rows = [(1, 0.1, np.float64(1 / 3)), (2, -2.5e-300, 7)]
    emit_csv(["a", "b", "c"], rows, tmp_path / "a.csv")
    emit_csv(["a", "b", "c"], rows, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@settings(max_examples=300)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_seventeen_digits_round_trip(v):
    assert float(format_value(v)) == v


def test_format_value_types():
    assert format_value(3) == "3"
    assert format_value(np.int64(-4)) == "-4"
    assert format_value(True) == "1"
    assert format_value(0.5) == "0.5"
    assert format_value("B1_(1,0)") == "B1_(1,0)"


def test_read_back(tmp_path):
    emit_csv(["x"], [(0.1,), (2,)], tmp_path / "r.csv")
    header, rows = read_csv(tmp_path / "r.csv")
    assert header == ["x"] and rows == [["0.10000000000000001"], ["2"]]


def test_unwritable_path_names_the_path(tmp_path):
    target = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        emit_csv(["a"], [], target)


def test_json_handles_numpy(tmp_path):
    write_json({"a": np.arange(3), "b": np.float64(0.5), "c": (1, 2)}, tmp_path / "m.json")
    assert '"a": [\n    0,' in (tmp_path / "m.json").read_text()
