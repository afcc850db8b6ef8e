"""Acceptance suite: one PASS/FAIL line per criterion, printed in the terminal summary.

Tolerances are pinned here; a criterion that the physics does not meet is left failing.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from hotplate import analytic1d as A
from hotplate import calibration as C
from hotplate import cli
from hotplate import compensation as K
from hotplate import electro as E
from hotplate import geometry as G
from hotplate import thermal as TH
from hotplate.materials import UM, builtin_table, resolve_sheet_res

from conftest import ACCEPTANCE_LINES, bar_device, bar_mask, x_of_cells

SCN = Path(__file__).resolve().parents[1] / "scenarios"
SOLVE_SCENARIOS = ("r2_poly_1v", "composite_single", "composite_parallel")
COMMANDS = {"r2_poly_1v": "solve", "composite_single": "solve", "composite_parallel": "solve",
            "heaters_1d": "analytic", "calibrate": "calibrate", "oven": "oven", "oven_fixed_voltage": "oven"}


def report(tag, title, checks):
    """checks: list of (ok, detail). Records one line and fails the test if any check failed."""
    ok = all(c for c, _ in checks)
    detail = "; ".join(d for _, d in checks)
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {tag} {title}: {detail}")
    print(ACCEPTANCE_LINES[-1])
    assert ok, detail


def within(x, ref, rel):
    return abs(x - ref) <= rel * abs(ref)


def summary(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.startswith("#") and "=" in line:
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out


def test_c1_analytic_heater_table():
    rs = resolve_sheet_res("table1_effective")
    t0 = time.perf_counter()
    checks = []
    for name, R_ref, rise_ref in (("R1", 5.05e3, 708.82), ("R2", 4.99e3, 699.33)):
        h = A.Heater1D(G.HEATER_LENGTHS[name], 12 * UM, 0.3 * UM, k=20.0, sheet_res=rs)
        R = A.resistance(h)
        rise = A.midpoint_rise(h, 1.0)
        checks.append((within(R, R_ref, 0.02), f"{name} R={R / 1e3:.3f} kOhm (ref {R_ref / 1e3:.2f})"))
        checks.append((within(rise, rise_ref, 0.02), f"{name} rise={rise:.2f} K (ref {rise_ref})"))
    dt = time.perf_counter() - t0
    checks.append((dt < 0.1, f"{dt * 1e3:.2f} ms"))
    report("C1", "1-D heater table reproduction", checks)


def test_c2_electrical_oracle():
    L, w = 400 * UM, 12 * UM
    exact = 22.8 * L / w
    errs = {}
    for h in (w / 3, w / 6):
        sol = E.solve_potential(bar_device(h, L, w), {"bar.a": 1.0, "bar.b": 0.0}, tol=1e-12)
        errs[h] = abs(E.lumped_resistance(sol) - exact) / exact
    e1, e2 = errs[w / 3], errs[w / 6]
    # an error already at round-off cannot shrink further; count that as converged
    converged = e2 <= e1 / 2 or max(e1, e2) < 1e-9
    report("C2", "electrical solver oracle", [
        (e2 <= 0.02, f"bar R error {e2:.2e} at h=w/6"),
        (converged, f"errors {e1:.2e} -> {e2:.2e} under refinement"),
    ])


@pytest.fixture(scope="module")
def shipped_runs(tmp_path_factory):
    runs = {}
    for name in SOLVE_SCENARIOS:
        out = tmp_path_factory.mktemp(name)
        assert cli.main(["--scenario", str(SCN / f"{name}.scn"), "--out", str(out), "--quiet", "solve"]) == 0
        runs[name] = summary(out / "summary.txt")
    return runs


def test_c3_thermal_oracle(shipped_runs):
    L, w, q = 400 * UM, 12 * UM, 1e12
    dev = bar_device(w / 6, L, w)
    m = bar_mask(dev)
    sol = TH.solve_temperature(dev, np.where(m, q, 0.0))
    x = x_of_cells(dev, m)
    exact = q * x * (L - x) / (2 * 20.0)
    err = np.sqrt(((sol.temperature.values[m] - 300 - exact) ** 2).sum() / (exact ** 2).sum())
    checks = [(err <= 0.01, f"bar L2 error {err:.2e}")]
    for name, s in shipped_runs.items():
        checks.append((s["max_principle_ok"] == "True", f"{name} min T {float(s['min_T_K']):.6g} K"))
        res = float(s["thermal_energy_residual"])
        checks.append((res <= 5e-3, f"{name} energy residual {res:.1e}"))
    report("C3", "thermal solver oracle", checks)


def test_c4_r2_poly_regression(table):
    t0 = time.perf_counter()
    dev = G.voxelize(G.preset_layouts("R2"), G.STACKS["poly_only"], 4 * UM, table)
    _, th = TH.run_coupled(dev, E.drive(dev, 1.0))
    dt = time.perf_counter() - t0
    report("C4", "R2 poly-only 1 V peak regression", [
        (within(th.max_T, 740.0, 0.10), f"max T {th.max_T:.1f} K (band 666-814 K)"),
        (dt <= 120 and dev.n_cells <= 2_000_000, f"{dt:.1f} s, {dev.n_cells} cells"),
    ])


@pytest.fixture(scope="module")
def composite(table):
    dev = G.voxelize(G.preset_layouts("R1R2"), G.STACKS["composite"], 4 * UM, table)
    runs = {}
    for V in (10.0, 25.0):
        for mode in ("single", "parallel"):
            runs[V, mode] = TH.run_coupled(dev, E.drive(dev, V, mode))
    return dev, runs


def test_c5a_parallel_doubles_power(composite):
    _, runs = composite
    checks = []
    for V in (10.0, 25.0):
        ratio = runs[V, "parallel"][0].total_power / runs[V, "single"][0].total_power
        checks.append((within(ratio, 2.0, 0.02), f"{V:g} V power ratio {ratio:.4f}"))
    report("C5a", "parallel drive doubles Joule power", checks)


def test_c5b_parallel_25v_peak(composite):
    _, runs = composite
    T = runs[25.0, "parallel"][1].max_T
    report("C5b", "25 V parallel composite peak temperature", [
        (within(T, 1200.0, 0.25), f"max T {T:.1f} K (band 900-1500 K)")])


def test_c5c_current_density_band(composite):
    dev, runs = composite
    centre = TH.device_center(dev)
    at, mx = (v * 1e-9 for v in E.current_density_stats(runs[10.0, "single"][0], centre))
    at25, mx25 = (v * 1e-9 for v in E.current_density_stats(runs[25.0, "single"][0], centre))
    report("C5c", "current-density statistics (10 V drive)", [
        (0.05 <= at <= 0.7, f"centre {at:.3f} mA/um^2"),
        (0.05 <= mx <= 0.7, f"max {mx:.3f} mA/um^2"),
        (True, f"for reference 25 V gives centre {at25:.3f}, max {mx25:.3f}"),
    ])


def test_c6_calibration():
    checks = []
    for key, deg in (("single", 3), ("thermistor", 1), ("double", 2)):
        ref = C.BUILTIN[key]
        x, y = C.synthetic_samples(ref, 10)
        fit = C.fit_polynomial(x, y, deg)
        rel = max(abs(a - b) / abs(b) for a, b in zip(fit.coefficients, ref.coefficients))
        checks.append((rel <= 1e-6, f"{key} max coefficient rel err {rel:.1e}"))
    t3, t5 = C.evaluate(C.T_SINGLE, 25.0), C.evaluate(C.T_DOUBLE, 23.0)
    checks.append((abs(t3 - 44.19) <= 0.01, f"T(25 V)={t3:.4f} C"))
    checks.append((abs(t5 - 57.37) <= 0.01, f"T2(23 V)={t5:.4f} C"))
    report("C6", "calibration curves", checks)


def test_c7_compensation():
    res = K.ResonatorModel()
    un = K.run_sweep(res, None, (32.0, 42.0), 11)
    kap = K.run_sweep(res, K.OvenModel(mode="kappa", kappa=23.19 / 97.2), (30.0, 40.0), 11)
    ideal = K.run_sweep(res, K.OvenModel(mode="closed_loop"), (30.0, 40.0), 11)
    checks = [
        (abs(un.effective_tcf + 97.2) <= 1e-9, f"uncompensated {un.effective_tcf:.9f}"),
        (abs(kap.effective_tcf + 23.19) <= 0.01, f"kappa {kap.effective_tcf:.4f} (by construction)"),
        (abs(ideal.effective_tcf) <= 1e-6, f"closed loop {ideal.effective_tcf:.1e}"),
    ]
    base = K.OvenModel(mode="fixed_voltage")
    base = K.OvenModel(**{**base.__dict__, "R_th": K.calibrated_R_th(base)})
    for alpha in (5e-4, 1e-3, 2e-3):
        oven = K.OvenModel(**{**base.__dict__, "alpha": alpha})
        sweep = K.run_sweep(res, oven, (30.0, 40.0), 11)
        # implicit-derivative oracle averaged over the sweep
        slope = np.mean([K.temperature_slope(oven, t) for t in sweep.T_amb])
        oracle = res.tcf * slope
        checks.append((within(sweep.effective_tcf, oracle, 0.01),
                       f"alpha={alpha:g}: {sweep.effective_tcf:.4f} vs oracle {oracle:.4f}"))
    report("C7", "compensation model", checks)


def test_c8_determinism(tmp_path):
    checks = []
    for name, cmd in COMMANDS.items():
        outs = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
            d = tmp_path / f"{name}_{tag}"
            assert cli.main(["--scenario", str(SCN / f"{name}.scn"), "--out", str(d),
                             "--threads", str(threads), "--quiet", cmd]) == 0
            outs.append(d)
        a, b, c = outs
        same = all((b / p.name).read_bytes() == p.read_bytes() for p in a.iterdir())
        checks.append((same, f"{name} serial rerun {'identical' if same else 'DIFFERS'}"))
        worst = 0.0
        summ = next((p for p in a.iterdir() if p.name.endswith("summary.txt")), None)
        if summ is not None:
            sa, sc = summary(summ), summary(c / summ.name)
            for k, v in sa.items():
                try:
                    x, y = float(v), float(sc[k])
                except ValueError:
                    continue
                if x != y:
                    worst = max(worst, abs(x - y) / max(abs(x), 1e-300))
            checks.append((worst <= 1e-8, f"{name} threaded max rel diff {worst:.1e}"))
    missing = set(p.stem for p in SCN.glob("*.scn")) - set(COMMANDS)
    checks.append((not missing, f"scenarios covered: {len(COMMANDS)}"))
    report("C8", "determinism", checks)
