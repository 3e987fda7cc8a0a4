import json

import numpy as np
import pytest

from tailbound import io
from tailbound.cli import main
from tailbound.pou import desk_instance


def test_sample_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sample", "--n", "4", "--out", str(a), "--seed", "1"]) == 0
    assert main(["sample", "--n", "4", "--out", str(b), "--seed", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert io.read_samples(a).shape == (4, 2)


def test_sample_rejects_zero(tmp_path, capsys):
    assert main(["sample", "--n", "0", "--out", str(tmp_path / "x.csv")]) == 2
    assert "tailbound.cli:" in capsys.readouterr().err


def test_sample_moments(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sample", "--n", "1000000", "--out", str(out), "--seed", "5"]) == 0
    pts = io.read_samples(out)
    assert np.all(np.abs(pts.mean(axis=0)) < 0.02)
    np.testing.assert_allclose(pts.var(axis=0), 16.0, rtol=0.01)
    assert abs(np.corrcoef(pts.T)[0, 1]) < 0.005


def test_calibrate_writes_constraints(tmp_path):
    s, c = tmp_path / "s.csv", tmp_path / "c.json"
    main(["sample", "--n", "20000", "--out", str(s), "--seed", "2"])
    assert main(["calibrate", str(s), "--out", str(c), "--bootstrap", "200"]) == 0
    doc = json.loads(c.read_text())
    assert doc["x0"] > 0 and doc["y0"] > 0 and len(doc["rows"]) > 0


def test_calibrate_reports_bad_line(tmp_path, capsys):
    s = tmp_path / "bad.csv"
    s.write_text("x,y\n1,2\n3,oops\n")
    assert main(["calibrate", str(s), "--out", str(tmp_path / "c.json")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("tailbound.calibration:") and ":3:" in err


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    rep = d / "r.json"
    assert main(["solve", "7.1", "--target", "S2", "--c-grid", "1", "--out", str(rep)]) == 0
    return d, rep


def test_solve_verify_round_trip(solved, tmp_path):
    d, rep = solved
    out = tmp_path / "v.json"
    assert main(["verify", str(rep), "7.1", "--target", "S2", "--out", str(out), "--mc-draws", "100000"]) == 0
    doc = json.loads(out.read_text())
    assert doc["verification"]["passed"]
    assert main(["verify", str(rep), "7.1", "--target", "S2", "--out", str(out), "--mc-draws", "0"]) == 0


def test_verify_tampered_report(solved, tmp_path, capsys):
    d, rep = solved
    doc = json.loads(rep.read_text())
    doc["mixture"]["probs"][0] += 0.05
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["verify", str(bad), "7.1", "--target", "S2", "--mc-draws", "0"]) == 4
    assert "tailbound.oracle:" in capsys.readouterr().err


def test_solve_is_byte_identical(solved, tmp_path):
    d, rep = solved
    again = tmp_path / "r.json"
    assert main(["solve", "7.1", "--target", "S2", "--c-grid", "1", "--out", str(again)]) == 0
    assert again.read_bytes() == rep.read_bytes()


def test_solve_pou_problem(tmp_path):
    prob, rep = tmp_path / "p.json", tmp_path / "r.json"
    io.write_json(prob, desk_instance().to_dict())
    assert main(["solve", str(prob), "--out", str(rep), "--c-grid", "1"]) == 0
    assert json.loads(rep.read_text())["value"] == pytest.approx(0.49, abs=0.01)
    assert main(["verify", str(rep), str(prob), "--mc-draws", "100000"]) == 0


def test_infeasible_exit_writes_report(tmp_path):
    cs = {"x0": 0.0, "y0": 0.0, "lF": 1.0, "uF": 1.0, "uX": "inf", "uY": "inf",
          "rows": [{"x1": 0.0, "x2": 1.0, "y1": 0.0, "y2": "inf", "a": 0.9, "b": 1.0},
                   {"x1": 2.0, "x2": "inf", "y1": 0.0, "y2": "inf", "a": 0.5, "b": 1.0}]}
    p = tmp_path / "cs.json"
    p.write_text(json.dumps(cs))
    rep = tmp_path / "r.json"
    assert main(["solve", str(p), "--target", "S1", "--c-grid", "1", "--out", str(rep)]) == 3
    assert json.loads(rep.read_text())["status"] != "optimal"


def test_reproduce_small(tmp_path):
    out = tmp_path / "rep"
    code = main(["reproduce", "7.2", "--outdir", str(out), "--reps", "2", "--m", "20000",
                 "--bootstrap", "200", "--c-grid", "1"])
    assert code == 0
    assert (out / "summary.csv").exists() and (out / "runs_S3.csv").exists()
    assert len(list((out / "runs").glob("S3_*.json"))) == 2


def test_reproduce_unknown(tmp_path, capsys):
    assert main(["reproduce", "9.9", "--outdir", str(tmp_path)]) == 2
    assert "tailbound.cli:" in capsys.readouterr().err


def test_config_file_defaults(tmp_path):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# defaults\nseed = 9\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--config", str(cfg), "sample", "--n", "3", "--out", str(a)]) == 0
    assert main(["sample", "--n", "3", "--out", str(b), "--seed", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()
    cfg.write_text("not a pair\n")
    assert main(["--config", str(cfg), "sample", "--n", "3", "--out", str(a)]) == 2
