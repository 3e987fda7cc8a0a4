import numpy as np
import pytest

from tailbound import io
from tailbound.errors import CalibrationError


def test_samples_round_trip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(5, 2))
    io.write_samples(tmp_path / "s.csv", pts)
    np.testing.assert_array_equal(io.read_samples(tmp_path / "s.csv"), pts)


def test_headerless_and_blank_lines(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1,2\n\n3,4\n")
    np.testing.assert_array_equal(io.read_samples(p), [[1, 2], [3, 4]])


@pytest.mark.parametrize("text, where", [("1,2,3\n", ":1:"), ("x,y\n1,2\nnan,1\n", "sample 2"), ("x,y\n", "no samples")])
def test_bad_samples(tmp_path, text, where):
    p = tmp_path / "s.csv"
    p.write_text(text)
    with pytest.raises(CalibrationError, match=where):
        io.read_samples(p)


def test_config_formats(tmp_path):
    p = tmp_path / "c"
    p.write_text("mc-draws = 10  # inline\n\nseed=3\n")
    assert io.read_config(p) == {"mc_draws": "10", "seed": "3"}
    p.write_text('{"box-bound": 50}')
    assert io.read_config(p) == {"box_bound": 50}


def test_atomic_write_leaves_no_temp(tmp_path):
    io.write_json(tmp_path / "d" / "x.json", {"b": 1, "a": 2})
    assert (tmp_path / "d" / "x.json").read_text() == '{\n  "a": 2,\n  "b": 1\n}\n'
    assert [f.name for f in (tmp_path / "d").iterdir()] == ["x.json"]
