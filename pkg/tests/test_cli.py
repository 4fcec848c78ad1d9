import csv
import json
import math

import numpy as np
import pytest

from fracdg.cases import get_case
from fracdg.cli import main
from fracdg.mesh import PolygonalMesh
from fracdg.study import CSV_COLUMNS, StudyConfig, build_mesh, run_study, solve_case


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def ex1_rect_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ex1")
    code = main(["run", "--case", "ex1-iso", "--mesh", "rect", "--k", "1,2,3", "--levels", "4", "--out", str(out)])
    return code, out


def test_run_writes_twelve_rows(ex1_rect_run):
    code, out = ex1_rect_run
    assert code == 0
    rows = read_rows(out / "ex1-iso_rect.csv")
    assert len(rows) == 12
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert [int(r["k"]) for r in rows] == [1] * 4 + [2] * 4 + [3] * 4
    assert rows[0]["rate_p"] == "" and rows[1]["rate_p"] != ""
    for r in rows:
        if r["level"] == "3":
            assert float(r["rate_p"]) > int(r["k"]) + 0.8
    assert (out / "ex1-iso_rect_k2_convergence.dat").read_text().startswith("# ndof")
    field = (out / "ex1-iso_rect_k3_field.dat").read_text().splitlines()
    assert field[0] == "# x y p" and len(field) == 1 + 41 * 41
    diag = (out / "ex1-iso_rect_k3_field_diagonal.dat").read_text().splitlines()
    assert diag[0] == "# s p_side1 p_side2"
    assert not (out / "ex1-iso_rect_failures.txt").exists()


def test_csv_is_deterministic(tmp_path):
    args = ["run", "--case", "ex1-aniso", "--mesh", "cvt", "--k", "1,2", "--levels", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    a = (tmp_path / "a" / "ex1-aniso_cvt.csv").read_bytes()
    b = (tmp_path / "b" / "ex1-aniso_cvt.csv").read_bytes()
    assert a == b


def test_failing_series_reported(tmp_path, capsys):
    # n0 = 3 puts no grid line on the fracture x = 1/2
    code = main(["run", "--case", "ex1-iso", "--mesh", "rect", "--k", "1", "--levels", "1", "--n0", "3", "--out", str(tmp_path)])
    assert code == 1
    text = (tmp_path / "ex1-iso_rect_failures.txt").read_text()
    assert text.startswith("k=1: AlignmentError")
    assert "failed" in capsys.readouterr().err


def test_bad_configuration(tmp_path):
    assert main(["run", "--mesh", "rect", "--out", str(tmp_path)]) == 2
    assert main(["run", "--case", "nope", "--mesh", "rect", "--out", str(tmp_path)]) == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"case": "ex1-iso", "mesh": "rect", "colour": "red"}))
    assert main(["run", "--config", str(cfg)]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--case", "ex1-iso", "--mesh", "hexagon"])


@pytest.mark.parametrize("fmt", ["toml", "json"])
def test_config_files(tmp_path, fmt):
    out = tmp_path / "out"
    if fmt == "toml":
        path = tmp_path / "study.toml"
        path.write_text(f'case = "ex3"\nmesh = "tri"\nk = [1]\nlevels = 2\nout = "{out}"\n')
    else:
        path = tmp_path / "study.json"
        path.write_text(json.dumps({"case": "ex3", "mesh": "tri", "k": "1", "levels": 2, "out": str(out)}))
    assert main(["run", "--config", str(path)]) == 0
    assert len(read_rows(out / "ex3_tri.csv")) == 2
    # flags override the file
    assert main(["run", "--config", str(path), "--levels", "1"]) == 0
    assert len(read_rows(out / "ex3_tri.csv")) == 1


def test_threads_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FRACDG_THREADS", "2")
    cfg = StudyConfig(case="ex1-iso", mesh="tri", k=[1, 2], levels=2, out=str(tmp_path / "env"))
    path, failures = run_study(cfg)
    assert not failures
    serial, _ = run_study(StudyConfig(case="ex1-iso", mesh="tri", k=[1, 2], levels=2, out=str(tmp_path / "ser")), threads=1)
    assert path.read_bytes() == serial.read_bytes()


@pytest.mark.parametrize("gen", ["rect", "tri", "cvt", "perturbed", "mapped-rect", "mapped-cvt"])
def test_mesh_command(tmp_path, capsys, gen):
    out = tmp_path / "m.json"
    assert main(["mesh", "--gen", gen, "--n", "4", "--lloyd-iters", "5", "--out", str(out)]) == 0
    mesh = PolygonalMesh.load(out)
    assert mesh.n_cells >= 16 and len(mesh.fracture) > 0
    assert "cells" in capsys.readouterr().out


def test_mesh_without_fracture(tmp_path):
    out = tmp_path / "m.json"
    assert main(["mesh", "--gen", "cvt", "--seeds", "20", "--no-fracture", "--out", str(out)]) == 0
    mesh = PolygonalMesh.load(out)
    assert mesh.n_cells == 20 and len(mesh.fracture) == 0


def test_check_command(capsys):
    assert main(["check"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6 and all(line.startswith("PASS") for line in lines)


def test_config_keys_round_trip():
    cfg = StudyConfig.from_mapping({"case": "ex1-iso", "mesh": "perturbed", "k": "1,3", "d-ratio": 0.01})
    assert cfg.k == [1, 3] and cfg.d_ratio == 0.01
    with pytest.raises(ValueError):
        StudyConfig(case="ex1-iso", mesh="rect", levels=0)


def test_perturbed_close_to_rect():
    case = get_case("ex1-iso")
    for n in (4, 8):
        _, _, _, r = solve_case(case, build_mesh("rect", n, case), 2)
        cfg = StudyConfig(case="ex1-iso", mesh="perturbed", d_ratio=0.001)
        _, _, _, p = solve_case(case, build_mesh("perturbed", n, case, cfg), 2)
        for a, b in ((p.err_u, r.err_u), (p.err_p, r.err_p), (p.err_pG, r.err_pG)):
            assert a / b < 1.2 and b / a < 1.2


def test_fivespot_mirror_symmetry():
    case = get_case("fivespot-permeable")
    sol, _, _, _ = solve_case(case, build_mesh("rect", 16, case), 2)
    rng = np.random.default_rng(0)
    P = rng.random((60, 2))
    P = P[np.abs(P.sum(1) - 1.0) > 1e-2]
    sub = np.where(P.sum(1) < 1.0, 1, 2)
    for s in (1, 2):
        Q = P[sub == s]
        a = sol.p.sample(Q, prefer_subdomain=s)
        b = sol.p.sample(Q[:, ::-1], prefer_subdomain=s)
        np.testing.assert_allclose(a, b, atol=1e-8)
    assert math.isfinite(sol.p.sample(np.array([[0.5, 0.5]]))[0])
