import csv
import io
import json

import numpy as np
import pytest

from collapse_kaon.cli import main
from collapse_kaon.config import ConfigError, RunConfig, parse_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_wick_table_contains_nested_row(capsys):
    code, out, _ = run(capsys, "wick-table")
    assert code == 0
    assert out.startswith("layout,pairing,k,j,coefficient\r\n")
    assert {"layout": "(4,0)", "pairing": "(12)(34)", "k": "2", "j": "2",
            "coefficient": "1/2"} in rows_of(out)


def test_sweep_theta_linear_column_is_affine(capsys):
    thetas = ["0", "0.25", "0.5", "0.75", "1"]
    args = [a for th in thetas for a in ("--theta", th)]
    code, out, _ = run(capsys, "sweep-theta", *args)
    assert code == 0
    rows = rows_of(out)
    th = np.array([float(r["theta0"]) for r in rows])
    for col in ("survival_S_linear", "survival_L_linear", "oscillation_linear"):
        y = np.array([float(r[col]) for r in rows])
        design = np.stack([np.ones_like(th), th], axis=1)
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert np.max(np.abs(design @ coef - y)) < 1e-12
    assert rows[2]["survival_S_linear_exact"] == "0/1"


def test_compare_json_and_blank_cells(capsys):
    code, out, _ = run(capsys, "compare", "--theta", "0.25", "--theta", "0.5", "--trajectories", "50",
                       "--steps", "2", "--t-max", "0.2", "--format", "json")
    assert code == 0
    rows = json.loads(out)
    assert len(rows) == 6
    assert all(r["P_SS_mc"] is None for r in rows if r["theta0"] == 0.25)
    mid = [r for r in rows if r["theta0"] == 0.5]
    for r in mid:
        assert r["P_SS_mc"] == pytest.approx(r["P_SS_analytic"], abs=1e-9)
        assert r["P_K0K0_assembly"] == pytest.approx(r["P_K0K0_analytic"], rel=1e-12)


def test_compare_breakdown_goes_to_stderr(capsys):
    code, out, err = run(capsys, "compare", "--theta", "0.5", "--trajectories", "10", "--steps", "1",
                         "--t-max", "0.1", "--breakdown")
    assert code == 0
    assert "branch=(S,S) a=4 b=0" in err
    assert "branch" not in out


def test_simulate_writes_file(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    code, _, _ = run(capsys, "simulate", "--scheme", "RightPoint", "--trajectories", "20",
                     "--steps", "2", "--t-max", "0.1", "--out", str(out))
    assert code == 0
    rows = rows_of(out.read_text())
    assert [r["scheme"] for r in rows] == ["RightPoint"] * 3
    assert float(rows[0]["norm2"]) == pytest.approx(1.0)


def test_overflow_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"params": {"lambda": 200.0}, "scheme": "LeftPoint", "t_max": 5,
                               "t_steps": 5, "dt": 0.1, "trajectories": 16, "theta0": [0]}))
    code, _, err = run(capsys, "simulate", "--config", str(cfg))
    assert code == 3
    assert "overflow" in err


def test_config_error_exit_code_and_line(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "t_max": 1.0,\n  "dt": 0.001,\n  "colour": "red"\n}\n')
    code, _, err = run(capsys, "compare", "--config", str(cfg))
    assert code == 2
    assert f"{cfg}:4:" in err


def test_config_rejects_misaligned_dt():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "t_max": 1.0,\n  "t_steps": 3,\n  "dt": 0.1\n}')
    assert info.value.line is not None


def test_config_rejects_bad_param_with_line():
    with pytest.raises(ConfigError) as info:
        parse_config('{\n  "params": {\n    "m_S": -1\n  }\n}')
    assert info.value.line == 3


@pytest.mark.parametrize("text", ['{"theta0": [1.5]}', '{"trajectories": 0}', '{"dt": NaN}',
                                  '{"scheme": "Heun"}', '{"t_max": 1', '[]'])
def test_config_rejects_invalid(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_round_trip():
    cfg = parse_config(json.dumps({"params": {"lambda": 0.2, "m_L": 1.1}, "theta0": [0, 1],
                                   "scheme": "RightPoint", "grid": {"G": 256}}))
    text = cfg.to_json()
    again = parse_config(text)
    assert again == cfg
    assert again.to_json() == text


def test_default_config_round_trip():
    assert parse_config(RunConfig().to_json()) == RunConfig()


def test_compare_is_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        assert run(capsys, "compare", "--trajectories", "200", "--seed", "42", "--steps", "3",
                   "--t-max", "0.3", "--out", str(path))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_validate_subset(tmp_path, capsys):
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "validate", "--only", "3", "--only", "2", "--report", str(report))
    assert code == 0
    assert "[PASS] 2." in out and "[PASS] 3." in out
    assert [r["number"] for r in json.loads(report.read_text())] == [2, 3]
