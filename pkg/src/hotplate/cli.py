"""Command-line front end.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 solver / numerical error.
"""

from __future__ import annotations

import argparse
import math
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from . import analytic1d, calibration as cal, compensation as comp
from .electro import current_density_stats, drive
from .errors import CalibrationError, ConfigError, GeometryError, HotplateError, SolverError
from .fields import svg_heatmap, write_csv, write_vtk
from .geometry import PRESET_WIDTH, HEATER_LENGTHS, total_path_length, voxel_rows, voxelize
from .materials import UM, builtin_table
from .scenario import Scenario, echo, parse_scenario
from .thermal import CoupledOptions, device_center, probe, run_coupled

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class Output:
    """Tracks files written by one command so a failure can remove them."""

    def __init__(self, root: Path, provenance: str, quiet: bool):
        self.root = root
        self.provenance = provenance
        self.quiet = quiet
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / name
        self.written.append(p)
        return p

    def text(self, name: str, body: str, header: bool = True):
        p = self.path(name)
        p.write_text((f"# {self.provenance}\n" if header else "") + body)
        return p

    def say(self, msg: str = ""):
        if not self.quiet:
            print(msg)

    def cleanup(self):
        for p in self.written:
            p.unlink(missing_ok=True)


@contextmanager
def _staged(out: Output):
    try:
        yield out
    except BaseException:
        out.cleanup()
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _tidy(x: float) -> float:
    # strip least-squares round-off far below any physical resolution
    return round(x, 9) + 0.0


def summary_text(items: dict) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items.items())


def cmd_analytic(sc: Scenario, out: Output) -> int:
    poly = sc.materials.lookup("PolySi")
    heaters = {}
    for name in sc["analytic.heaters"]:
        if name not in HEATER_LENGTHS:
            raise ConfigError(f"analytic.heaters: unknown heater {name!r}")
        heaters[name] = analytic1d.Heater1D(HEATER_LENGTHS[name], PRESET_WIDTH, poly.thickness, k=poly.k,
                                            sheet_res=poly.sheet_res, T_amb=sc["thermal.T_amb_K"])
    rows = analytic1d.report_rows(heaters, sc["drive.volts"])
    fmt = sc["analytic.format"]
    body = analytic1d.format_report(rows, fmt)
    out.text("analytic.csv" if fmt == "csv" else "analytic.txt", body)
    out.say(body.rstrip("\n"))
    return EXIT_OK


def _slices(sc: Scenario, device) -> list[int]:
    ks = []
    for s in sc["output.slices"]:
        if s == "heater":
            ks.append(device.heater_layer)
        else:
            k = int(s)
            if not 0 <= k < device.shape[2]:
                raise ConfigError(f"output.slices: z index {k} outside 0..{device.shape[2] - 1}")
            ks.append(k)
    return sorted(set(ks))


def solve_summary(sc: Scenario, threads: int):
    layouts = sc.layouts()
    device = voxelize(layouts, sc.stack(), sc["grid.h_um"], sc.materials, sc.voxel_options())
    volts = sc["drive.volts"]
    pv = drive(device, volts, sc["drive.mode"], sc["drive.resistor"])
    opts = CoupledOptions(robin=sc.robin(), tol=sc["solver.tol"], maxiter=sc["solver.maxiter"],
                          threads=threads)
    el, th = run_coupled(device, pv, opts)
    center = device_center(device)
    j_center, j_max = current_density_stats(el, center)
    fixed_T = min(bc.value for bc in device.thermal_bcs.values() if bc.kind == "fixed")
    elec_res = (abs(el.total_power - el.electrode_power) / el.electrode_power
                if el.electrode_power > 0 else 0.0)
    summary = {
        "mode": sc["drive.mode"],
        "driven": ", ".join(sorted({e.rsplit(".", 1)[0] for e in pv})),
        "drive_volts": float(volts),
        "grid_shape": "x".join(str(n) for n in device.shape),
        "grid_h_um": device.h / UM,
        "path_length_um": tuple(total_path_length(l) / UM for l in layouts),
        "lumped_resistance_ohm": el.lumped_resistance,
        "total_power_W": el.total_power,
        "electrode_power_W": el.electrode_power,
        "electrical_energy_residual": elec_res,
        "max_J_mA_per_um2": j_max * 1e-9,
        "center_J_mA_per_um2": j_center * 1e-9,
        "max_T_K": th.max_T,
        "max_T_location_um": tuple(c / UM for c in th.max_location),
        "center_T_K": probe(th, center),
        "min_T_K": th.temperature.min(),
        "max_principle_ok": bool(th.temperature.min() >= fixed_T - 1e-9 * fixed_T),
        "thermal_energy_residual": th.energy_residual,
        "electrical_iterations": el.iterations,
        "thermal_iterations": th.iterations,
    }
    return device, el, th, summary


def cmd_solve(sc: Scenario, out: Output, threads: int) -> int:
    device, el, th, summary = solve_summary(sc, threads)
    prov = out.provenance
    with _staged(out):
        with open(out.path("voxels.csv"), "w") as fh:
            fh.write(f"# {prov}\nx_um,y_um,z_um,material\n")
            for x, y, z, m in voxel_rows(device):
                fh.write(f"{x!r},{y!r},{z!r},{m}\n")
        for f, stem in ((el.potential, "potential"), (el.current_density, "current_density"),
                        (el.heat_density, "heat_density"), (th.temperature, "temperature")):
            write_csv(f, out.path(f"{stem}.csv"), prov)
            write_vtk(f, out.path(f"{stem}.vtk"), prov)
        for k in _slices(sc, device):
            svg = svg_heatmap(th.temperature, k, title=f"temperature ({device.layer_names[k]})",
                              provenance=prov)
            out.text(f"temperature_z{k}.svg", svg, header=False)
        out.text("summary.txt", summary_text(summary))
    out.say(summary_text(summary).rstrip("\n"))
    return EXIT_OK


def _surface_rows(volts):
    T = cal.evaluate(cal.T_SINGLE, volts, warn=False)
    R = (T - cal.THERMISTOR_INTERCEPT) / cal.THERMISTOR_SLOPE
    return T, R


def cmd_calibrate(sc: Scenario, out: Output) -> int:
    jobs = (("single", 3, "V"), ("thermistor", 1, "kohm"), ("double", 2, "V"))
    lines = []
    with _staged(out):
        for key, degree, unit in jobs:
            path = sc[f"calibration.{key}_csv"]
            if sc["calibration.source"] == "files":
                if path is None:
                    continue
                x, y = cal.read_samples(path)
                origin = f"samples from {path}"
            else:
                x, y = cal.synthetic_samples(cal.BUILTIN[key], sc["calibration.samples"],
                                             sc["calibration.noise_C"], sc["calibration.seed"])
                origin = (f"synthetic samples of built-in {key} (noise_sd={sc['calibration.noise_C']!r} C, "
                          f"seed={sc['calibration.seed']}); not measured data")
                cal.write_samples(out.path(f"{key}_samples.csv"), x, y, f"{out.provenance}; {origin}")
            model = cal.fit_polynomial(x, y, degree, unit, name=cal.BUILTIN[key].name)
            out.text(f"{key}.model", cal.dumps(model))
            coefs = ", ".join(f"{c:.6g}" for c in reversed(model.coefficients))
            lines.append(f"{key}: degree {degree}, coefficients (highest first) {coefs}; "
                         f"rms residual {model.residuals.rms:.3g} C; {origin}")
        V = np.linspace(0.0, 25.0, 26)
        T, R = _surface_rows(V)
        out.text("surface_v_r_t.csv", "V_volt,R2_kohm,T_C\n" + "".join(
            f"{a!r},{b!r},{c!r}\n" for a, b, c in zip(V.tolist(), R.tolist(), T.tolist())))
        T2 = cal.evaluate(cal.T_DOUBLE, V, warn=False)
        out.text("curves_single_double.csv", "V_volt,T_single_C,T_double_C\n" + "".join(
            f"{a!r},{b!r},{c!r}\n" for a, b, c in zip(V.tolist(), T.tolist(), T2.tolist())))
        out.text("calibration_report.txt", "\n".join(lines) + "\n")
    out.say("\n".join(lines))
    return EXIT_OK


def cmd_oven(sc: Scenario, out: Output, threads: int) -> int:
    res, oven = sc.resonator(), sc.oven()
    un, co = comp.compare(res, oven, sc["sweep.uncomp_C"], sc["sweep.comp_C"], sc["sweep.steps"], threads)
    note = {
        "kappa": (f"compensated value follows from kappa={oven.kappa!r} by construction "
                  "(effective TCF = kappa * TCF); it is not an independent prediction"),
        "closed_loop": "ideal closed-loop oven: the device holds the setpoint, bounding achievable compensation",
        "fixed_voltage": (f"fixed {oven.V_applied:g} V drive with heater TCR {oven.alpha:g}/C "
                          f"and R_th {oven.R_th:.6g} K/W"),
    }[oven.mode]
    summary = {
        "oven_mode": oven.mode,
        "f0_Hz": res.f0,
        "model_tcf_ppm_per_C": res.tcf,
        "uncompensated_effective_tcf_ppm_per_C": _tidy(un.effective_tcf),
        "compensated_effective_tcf_ppm_per_C": _tidy(co.effective_tcf),
        "effective_tcf_ppm_per_C": _tidy(co.effective_tcf),
        "reduction_factor": _tidy(co.reduction_factor) if math.isfinite(co.reduction_factor) else "inf",
        "setpoint_C": oven.setpoint,
    }
    if oven.mode == "closed_loop":
        lo = min(sc["sweep.comp_C"])
        summary["required_V_at_lowest_ambient"] = comp.required_voltage(oven, lo)
    summary["note"] = note
    with _staged(out):
        comp.write_report_csv(un, out.path("uncompensated.csv"), out.provenance)
        comp.write_report_csv(co, out.path("compensated.csv"), out.provenance)
        out.text("oven_summary.txt", summary_text(summary))
    out.say(summary_text(summary).rstrip("\n"))
    return EXIT_OK


def cmd_materials(sc: Scenario | None, out: Output) -> int:
    table = sc.materials if sc is not None else builtin_table()
    lines = ["name,k_W_per_mK,c_J_per_kgK,rho_kg_per_m3,sigma_S_per_m,sheet_res_ohm_per_sq,thickness_um"]
    for name in table.names():
        m = table.lookup(name)
        lines.append(",".join([m.name, _fmt(m.k), _fmt(m.c), _fmt(m.rho),
                               "" if m.sigma is None else _fmt(m.sigma),
                               "" if m.sheet_res is None else _fmt(m.sheet_res),
                               "" if m.thickness is None else _fmt(m.thickness / UM)]))
    body = "\n".join(lines) + "\n"
    print(body.rstrip("\n"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=argparse.SUPPRESS, help="scenario file")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="solver threads (overrides run.threads; 1 = reference mode)")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="hotplate", parents=[common],
                                description="Micro-hotplate electro-thermal toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analytic", parents=[common], help="1-D heater table")
    sub.add_parser("solve", parents=[common], help="finite-volume electro-thermal solve")
    sub.add_parser("calibrate", parents=[common], help="fit calibration polynomials")
    sub.add_parser("oven", parents=[common], help="oven compensation sweeps")
    sub.add_parser("materials", parents=[common], help="print the material table")
    return p


def _dispatch(args, sc, out, threads) -> int:
    if args.command == "analytic":
        return cmd_analytic(sc, out)
    if args.command == "solve":
        return cmd_solve(sc, out, threads)
    if args.command == "calibrate":
        return cmd_calibrate(sc, out)
    if args.command == "oven":
        return cmd_oven(sc, out, threads)
    return cmd_materials(sc, out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    scenario_path = getattr(args, "scenario", None)
    quiet = getattr(args, "quiet", False)
    out = None
    try:
        if scenario_path is None:
            if args.command != "materials":
                raise ConfigError(f"'{args.command}' needs --scenario")
            sc = None
        else:
            sc = parse_scenario(scenario_path)
        threads = getattr(args, "threads", None) or (sc["run.threads"] if sc else 1)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        out_dir = Path(getattr(args, "out", None) or (sc["output.dir"] if sc else "out"))
        out = Output(out_dir, sc.provenance if sc else f"hotplate {__version__}", quiet)
        with warnings.catch_warnings():
            if quiet:
                warnings.simplefilter("ignore")
            rc = _dispatch(args, sc, out, threads)
        if sc is not None and args.command != "materials":
            out.text("scenario_resolved.txt", echo(sc), header=False)
        return rc
    except (ConfigError, GeometryError, CalibrationError, ValueError) as exc:
        code, kind, msg = EXIT_CONFIG, "configuration error", str(exc)
    except SolverError as exc:
        code, kind, msg = EXIT_SOLVER, "solver error", str(exc)
    except HotplateError as exc:
        code, kind, msg = EXIT_ERROR, "error", str(exc)
    if out is not None:
        out.cleanup()
    print(f"hotplate: {kind}: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
