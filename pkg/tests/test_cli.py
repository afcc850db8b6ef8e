import math
from pathlib import Path

import numpy as np
import pytest

from hotplate import calibration as C
from hotplate import cli
from hotplate.compensation import read_report_csv
from hotplate.fields import read_csv

SCN = Path(__file__).resolve().parents[1] / "scenarios"


def write(tmp_path, text, name="s.scn"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(*argv):
    return cli.main([str(a) for a in argv])


def summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or "=" not in line:
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out


def test_analytic_table(tmp_path, capsys):
    s = write(tmp_path, "geometry.preset = R1R2\ndrive.volts = 1\nanalytic.format = csv\n")
    assert run("--scenario", s, "--out", tmp_path / "a", "analytic") == 0
    rows = (tmp_path / "a" / "analytic.csv").read_text().splitlines()
    assert rows[0].startswith("# hotplate")
    assert rows[1].split(",")[:3] == ["heater", "L_um", "w_um"]
    assert [r.split(",")[0] for r in rows[2:]] == ["R1", "R2"]
    first = (tmp_path / "a" / "analytic.csv").read_bytes()
    run("--scenario", s, "--out", tmp_path / "a", "--quiet", "analytic")
    assert (tmp_path / "a" / "analytic.csv").read_bytes() == first


def test_analytic_zero_volts(tmp_path):
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 0\nanalytic.format = csv\n")
    run("--scenario", s, "--out", tmp_path, "--quiet", "analytic")
    rows = (tmp_path / "analytic.csv").read_text().splitlines()[2:]
    idx = cli.analytic1d.REPORT_COLUMNS.index("rise_K")
    assert all(float(r.split(",")[idx]) == 0 for r in rows)


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    assert run("--scenario", SCN / "r2_poly_1v.scn", "--out", out, "--quiet", "solve") == 0
    return out


def test_solve_outputs(solved):
    names = {p.name for p in solved.iterdir()}
    for stem in ("potential", "current_density", "heat_density", "temperature"):
        assert f"{stem}.csv" in names and f"{stem}.vtk" in names
    assert "temperature_z0.svg" in names and "summary.txt" in names and "voxels.csv" in names
    s = summary(solved / "summary.txt")
    for key in ("lumped_resistance_ohm", "max_J_mA_per_um2", "center_J_mA_per_um2", "max_T_K",
                "center_T_K", "thermal_energy_residual", "electrical_energy_residual"):
        assert key in s
    assert float(s["lumped_resistance_ohm"]) == pytest.approx(7585, rel=0.05)
    assert s["mode"] == "single"


def test_solve_csvs_round_trip(solved):
    for stem in ("potential", "temperature", "heat_density"):
        coords, vals, header = read_csv(solved / f"{stem}.csv")
        assert coords.shape[0] == vals.shape[0] > 0 and np.all(np.isfinite(vals))
    _, jv, header = read_csv(solved / "current_density.csv")
    assert jv.shape[1] == 3


def test_every_output_has_provenance(solved):
    s = summary(solved / "summary.txt")
    tag = (solved / "summary.txt").read_text().splitlines()[0]
    assert tag.startswith("# hotplate ") and "scenario=" in tag
    for p in solved.iterdir():
        head = p.read_text().splitlines()[:3]
        assert any(tag[2:] in line for line in head), p.name


def test_solve_rerun_identical(solved, tmp_path):
    run("--scenario", SCN / "r2_poly_1v.scn", "--out", tmp_path, "--quiet", "solve")
    for p in solved.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes(), p.name


def test_parallel_summary(tmp_path):
    base = "geometry.preset = R1R2\nstack.preset = composite\ndrive.volts = 10\n"
    run("--scenario", write(tmp_path, base + "drive.mode = single\n", "a.scn"), "--out", tmp_path / "a", "--quiet", "solve")
    run("--scenario", write(tmp_path, base + "drive.mode = parallel\n", "b.scn"), "--out", tmp_path / "b", "--quiet", "solve")
    a, b = summary(tmp_path / "a" / "summary.txt"), summary(tmp_path / "b" / "summary.txt")
    assert b["mode"] == "parallel" and b["driven"] == "R1, R2"
    assert float(b["total_power_W"]) / float(a["total_power_W"]) == pytest.approx(2.0, rel=0.02)


def test_solver_failure_cleans_up(tmp_path, capsys):
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\nsolver.maxiter = 2\n")
    assert run("--scenario", s, "--out", tmp_path / "o", "solve") == cli.EXIT_SOLVER
    assert not any((tmp_path / "o").glob("*")) if (tmp_path / "o").exists() else True
    assert "solver error" in capsys.readouterr().err


def test_write_failure_cleans_up(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise cli.SolverError("disk full")
    monkeypatch.setattr(cli, "write_vtk", boom)
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\n")
    assert run("--scenario", s, "--out", tmp_path / "o", "--quiet", "solve") == cli.EXIT_SOLVER
    assert list((tmp_path / "o").glob("*")) == []


def test_config_errors(tmp_path, capsys):
    assert run("--scenario", write(tmp_path, ""), "solve") == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "geometry.preset" in err and "drive.volts" in err
    assert run("--scenario", write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\nthikness_um = 1\n"),
               "analytic") == cli.EXIT_CONFIG
    assert "thikness_um" in capsys.readouterr().err
    assert run("--scenario", tmp_path / "missing.scn", "solve") == cli.EXIT_CONFIG
    assert run("solve") == cli.EXIT_CONFIG


def test_calibrate_builtin(tmp_path):
    assert run("--scenario", SCN / "calibrate.scn", "--out", tmp_path, "--quiet", "calibrate") == 0
    for key in ("single", "thermistor", "double"):
        model = C.loads((tmp_path / f"{key}.model").read_text())
        assert np.allclose(model.coefficients, C.BUILTIN[key].coefficients, rtol=1e-6)
        x, y = C.read_samples(tmp_path / f"{key}_samples.csv")
        assert x.size == 12
    assert "synthetic" in (tmp_path / "calibration_report.txt").read_text()
    assert "not measured" in (tmp_path / "single_samples.csv").read_text().splitlines()[0]
    therm = C.loads((tmp_path / "thermistor.model").read_text())
    assert therm.coefficients[1] == pytest.approx(167.68, rel=1e-9)
    assert therm.coefficients[0] == pytest.approx(-766.04, rel=1e-9)


def test_calibrate_degree_error(tmp_path):
    data = tmp_path / "two.csv"
    data.write_text("input,output\n1,30\n2,31\n")
    s = write(tmp_path, f"geometry.preset = R2\ndrive.volts = 1\ncalibration.source = files\n"
                        f"calibration.single_csv = {data.name}\n")
    assert run("--scenario", s, "--out", tmp_path / "o", "--quiet", "calibrate") == cli.EXIT_CONFIG


def test_oven_defaults(tmp_path):
    assert run("--scenario", SCN / "oven.scn", "--out", tmp_path, "--quiet", "oven") == 0
    s = summary(tmp_path / "oven_summary.txt")
    assert float(s["uncompensated_effective_tcf_ppm_per_C"]) == -97.2
    assert float(s["compensated_effective_tcf_ppm_per_C"]) == pytest.approx(-23.19, abs=0.01)
    assert "by construction" in s["note"]
    Ta, Td, f = read_report_csv(tmp_path / "compensated.csv")
    assert np.all(np.diff(Ta) > 0)


def test_oven_closed_loop(tmp_path):
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\noven.mode = closed_loop\n")
    run("--scenario", s, "--out", tmp_path, "--quiet", "oven")
    out = summary(tmp_path / "oven_summary.txt")
    assert float(out["compensated_effective_tcf_ppm_per_C"]) == 0.0
    assert out["reduction_factor"] == "inf"
    assert "required_V_at_lowest_ambient" in out


def test_oven_two_point(tmp_path):
    from hotplate.compensation import tcf
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\noven.mode = fixed_voltage\nsweep.steps = 2\n")
    run("--scenario", s, "--out", tmp_path, "--quiet", "oven")
    Ta, _, f = read_report_csv(tmp_path / "compensated.csv")
    out = summary(tmp_path / "oven_summary.txt")
    assert float(out["compensated_effective_tcf_ppm_per_C"]) == pytest.approx(
        tcf(1e9, f[0], Ta[0], f[1], Ta[1]), abs=1e-8)


def test_materials(capsys):
    assert run("materials") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("name,k_W_per_mK")
    assert {l.split(",")[0] for l in lines[1:]} >= {"PolySi", "SiO2", "Al"}


def test_flags_after_subcommand(tmp_path):
    s = write(tmp_path, "geometry.preset = R2\ndrive.volts = 1\n")
    assert run("analytic", "--scenario", s, "--out", tmp_path / "x", "--quiet") == 0
    assert (tmp_path / "x" / "analytic.txt").exists()
