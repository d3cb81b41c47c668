import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bvsbench.io import format_cell, parse_float, read_csv, read_pgm, to_levels, write_csv, write_pgm


def test_pgm_8bit_header_and_levels(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 0.25]])
    path = write_pgm(tmp_path / "a.pgm", img)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n2 2\n255\n")
    assert list(raw[-4:]) == [0, 128, 255, 64]
    meta = json.loads((tmp_path / "a.pgm.json").read_text())
    assert meta["value_at_0"] == 0.0 and meta["value_at_max"] == 1.0


def test_pgm_16bit_is_big_endian(tmp_path):
    img = np.array([[0.0, 1.0]])
    raw = write_pgm(tmp_path / "b.pgm", img, maxval=65535).read_bytes()
    assert raw.endswith(b"\x00\x00\xff\xff")


@given(arrays(np.float64, (5, 7), elements=st.floats(-3, 3)))
def test_pgm_16bit_round_trip(tmp_path_factory, img):
    path = tmp_path_factory.mktemp("pgm") / "c.pgm"
    write_pgm(path, img, maxval=65535)
    back = read_pgm(path, rescale=True)
    span = float(np.ptp(img))
    assert np.max(np.abs(back - img)) <= 0.5 * span / 65535 + 1e-12


def test_pgm_fixed_range_and_constant(tmp_path):
    levels, rng = to_levels(np.full((3, 3), 2.0))
    assert np.all(levels == 0) and rng == (2.0, 2.0)
    levels, _ = to_levels(np.array([[-1.0, 2.0]]), lo=0.0, hi=1.0)
    assert levels.tolist() == [[0, 255]]


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros((2, 2)), maxval=1023)
    (tmp_path / "p2.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(ValueError):
        read_pgm(tmp_path / "p2.pgm")


def test_pgm_header_comments(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# made elsewhere\n2 1\n255\n\x01\x02")
    assert read_pgm(tmp_path / "c.pgm").tolist() == [[1, 2]]


def test_format_cell():
    assert format_cell(math.nan) == "" and format_cell(None) == ""
    assert format_cell(True) == "true"
    assert format_cell(0.1 + 0.2) == "0.3"
    assert format_cell(np.float32(2.5)) == "2.5"
    assert format_cell(3) == "3"


def test_csv_round_trip(tmp_path):
    rows = [{"a": 1.5, "b": "x"}, {"a": math.nan}]
    path = write_csv(tmp_path / "t.csv", rows, ("a", "b"))
    assert path.read_text() == "a,b\n1.5,x\n,\n"
    back = read_csv(path)
    assert parse_float(back[0]["a"]) == 1.5 and math.isnan(parse_float(back[1]["a"]))
    assert back[0]["b"] == "x"
