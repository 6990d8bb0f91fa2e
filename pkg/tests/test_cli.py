import json
import math
import subprocess
import sys

import numpy as np
import pytest

from finsler.cli import main
from finsler.control import compare_grid, cone_oracle, grid_from_csv, grid_to_csv
from finsler.geodesic import Trajectory
from finsler.jacobi import read_field_csv


def run(argv):
    lines = []
    code = main([str(a) for a in argv], out=lines.append)
    return code, lines


def test_sin_wind_lift_csv(tmp_path):
    out = tmp_path / "traj.csv"
    code, lines = run(["geodesic", "--scenario", "sin_wind_r3", "--x0", "0,0,0", "--v0", "1,0,0.25",
                       "--T", 6.2832, "--step", 0.001, "--out", out])
    assert code == 0 and str(out) in lines[0]
    tr = Trajectory.from_csv(out)
    t = tr.times
    expect = np.column_stack([t, 0 * t, 3 * t / 8 - np.sin(2 * t) / 16])
    assert np.abs(tr.x - expect).max() <= 1e-5


def test_geodesic_svg_and_zermelo(tmp_path):
    svg = tmp_path / "g.svg"
    code, lines = run(["geodesic", "--scenario", "cone_r2", "--v0", "1,0.5", "--T", 2, "--zermelo", "--svg", svg])
    assert code == 0
    assert "end (2,1)" in lines[0]
    assert svg.read_text().startswith("<svg")


def test_cone_reach_example(tmp_path):
    grid_csv, svg = tmp_path / "grid.csv", tmp_path / "cone.svg"
    code, lines = run(["reach", "--scenario", "cone_r2", "--q0", "0,0", "--horizon", 6, "--letters", 4,
                       "--samples", 20000, "--window", "-2,2,-0.25,2.75", "--res", 0.05, "--seed", 1,
                       "--out", grid_csv, "--svg", svg])
    assert code == 0 and "cone agreement" in lines[0]
    grid = grid_from_csv(grid_csv, (-2, 2, -0.25, 2.75), 0.05)
    assert compare_grid(grid, cone_oracle(0.5), 0.1).agreement >= 0.99
    assert "polyline" in svg.read_text()


def test_outputs_are_byte_identical(tmp_path):
    paths = []
    for k in range(2):
        p = tmp_path / f"grid{k}.csv"
        threads = 1 + k  # thread count must not matter either
        assert run(["orbit", "--scenario", "torus", "--samples", 3000, "--res", 0.05, "--seed", 3,
                    "--threads", threads, "--out", p])[0] == 0
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    geo = []
    for k in range(2):
        p = tmp_path / f"traj{k}.csv"
        assert run(["geodesic", "--scenario", "sphere2", "--x0", "1.5,0", "--v0", "0.2,1", "--T", 1, "--out", p])[0] == 0
        geo.append(p)
    assert geo[0].read_bytes() == geo[1].read_bytes()


def test_grid_csv_reserialises_identically(tmp_path):
    p, q = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["reach", "--scenario", "cone_r2", "--samples", 500, "--window", "-1,1,0,1", "--res", 0.1, "--out", p])
    grid_to_csv(grid_from_csv(p, (-1, 1, 0, 1), 0.1), q)
    assert p.read_bytes() == q.read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"scenario": "cone_r2", "v0": [1.0, 0.5], "T": 3.0, "step": 0.01}))
    code, lines = run(["geodesic", "--config", cfg])
    assert code == 0 and "end (3,1.5)" in lines[0]
    code, lines = run(["geodesic", "--config", cfg, "--T", 1])
    assert code == 0 and "end (1,0.5)" in lines[0]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"horizon": 3}))
    assert run(["geodesic", "--config", cfg])[0] == 2
    assert "config error: horizon" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv, field",
    [
        (["geodesic", "--scenario", "moebius"], "scenario"),
        (["geodesic", "--step", "-1"], "step"),
        (["geodesic", "--scenario", "cone_r2", "--x0", "1,2,3"], "x0"),
        (["geodesic", "--scenario", "cone_r2", "--v0", "0,0"], "v0"),
        (["reach", "--window", "1,0,0,1"], "window"),
        (["reach", "--samples", "-3"], "samples"),
        (["reach", "--scenario", "sphere2"], "scenario"),
        (["reach", "--axes", "0,0"], "axes"),
        (["jacobi", "--triple", "klein"], "triple"),
        (["jacobi", "--triple", "flat", "--J0", "1,2"], "J0"),
        (["lierank", "--depth", "0"], "depth"),
    ],
)
def test_config_errors_exit_2(argv, field, capsys):
    assert run(argv)[0] == 2
    assert f"config error: {field}" in capsys.readouterr().err


def test_numeric_failure_exits_3(capsys):
    code, _ = run(["geodesic", "--scenario", "sin_wind_r3", "--v0", "1e200,0,0", "--T", 1, "--step", 0.5])
    assert code == 3
    assert "numeric failure" in capsys.readouterr().err


def test_lierank(capsys):
    code, lines = run(["lierank", "--scenario", "cone_r2", "--points", 10])
    assert code == 0 and "rank 2..2" in lines[0]
    code, lines = run(["lierank", "--scenario", "sin_wind_r3", "--x", "0.3,0,0", "--depth", 3])
    assert code == 0 and "rank 3..3" in lines[0]


def test_jacobi_catalog(tmp_path):
    out = tmp_path / "field.csv"
    code, lines = run(["jacobi", "--triple", "sphere", "--n", 1, "--domain", "0,3", "--J0", "0,1", "--out", out])
    assert code == 0
    t, J, dJ = read_field_csv(out)
    assert np.abs(J[:, 0] - np.sin(t)).max() <= 1e-8


def test_jacobi_from_json(tmp_path):
    spec = tmp_path / "mixed.json"
    spec.write_text(json.dumps({"n": 2, "R": "mixed", "domain": [0, 10 * math.pi],
                                "basis": [[0, 0, 1, 0], [0, 1, 0, 0]]}))
    code, lines = run(["jacobi", "--triple", spec])
    assert code == 0
    assert "lagrangian=True" in lines[0] and "Wilking dims (1, 1)" in lines[0]


def test_scenario_list():
    code, lines = run(["scenario-list"])
    assert code == 0 and len(lines) == 5 and lines[0].startswith("cone_r2")


def test_check_subset():
    code, lines = run(["check", "--suite", "paper", "--only", "1,13"])
    assert code == 0
    assert lines[0].startswith("PASS  1") and lines[1].startswith("PASS 13")
    assert lines[-1].startswith("check paper: 2/2")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "finsler", "scenario-list"], capture_output=True, text=True)
    assert res.returncode == 0 and "torus" in res.stdout
