"""Scenario files.

One ``section.key = value`` per line; ``#`` starts a comment. Values are
numbers, ``true``/``false``, bare or quoted strings, or comma-separated
lists. Lengths are given in micrometres (``*_um`` keys) and converted to SI
on load. Unknown keys are errors.

Minimal example::

    geometry.preset = R2
    drive.volts = 1
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .compensation import KAPPA_MATCH, OvenModel, ResonatorModel, calibrated_R_th
from .errors import ConfigError
from .fv import Robin
from .geometry import (STACKS, LayerStack, SerpentineSpec, VoxelOptions, build_dual_serpentine,
                       build_serpentine, preset_layouts)
from .materials import MATERIAL_KEYS, UM, MaterialTable, builtin_table, material_from_record, resolve_sheet_res

REQUIRED = ("geometry.preset", "drive.volts")


def _num(v):
    return float(v)


def _int(v):
    if isinstance(v, float) and v.is_integer():
        return int(v)
    if isinstance(v, int) and not isinstance(v, bool):
        return v
    raise ValueError("expected an integer")


def _str(v):
    if isinstance(v, list):
        raise ValueError("expected a single value")
    return str(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError("expected true or false")


def _list(v):
    return v if isinstance(v, list) else [v]


def _num_or_str(v):
    return v


# key -> (parser, default)
SCHEMA: dict[str, tuple[Any, Any]] = {
    "geometry.preset": (_str, None),
    "geometry.leg_length_um": (_num, None),
    "geometry.leg_count": (_int, None),
    "geometry.trace_width_um": (_num, 12.0),
    "geometry.pitch_um": (_num, None),
    "geometry.thickness_um": (_num, 0.3),
    "geometry.pad_size_um": (_num, 40.0),
    "geometry.stub_um": (_num, 24.0),
    "geometry.dual": (_bool, False),
    "geometry.second_stub_um": (_num, None),
    "stack.preset": (_str, "poly_only"),
    "stack.layers": (_list, None),
    "stack.plate": (_str, "full"),
    "stack.gap_fill": (_str, "none"),
    "stack.substrate": (_bool, False),
    "materials.sheet_res": (_num_or_str, 22.8),
    "drive.volts": (_num, None),
    "drive.mode": (_str, "single"),
    "drive.resistor": (_str, None),
    "grid.h_um": (_num, 4.0),
    "grid.z_refine": (_int, 1),
    "thermal.T_amb_K": (_num, 300.0),
    "thermal.h_top_W_per_m2K": (_num, 0.0),
    "thermal.h_bottom_W_per_m2K": (_num, 0.0),
    "thermal.h_sides_W_per_m2K": (_num, 0.0),
    "solver.tol": (_num, 1e-9),
    "solver.maxiter": (_int, None),
    "analytic.heaters": (_list, ["R1", "R2"]),
    "analytic.format": (_str, "text"),
    "calibration.source": (_str, "builtin"),
    "calibration.single_csv": (_str, None),
    "calibration.thermistor_csv": (_str, None),
    "calibration.double_csv": (_str, None),
    "calibration.samples": (_int, 10),
    "calibration.noise_C": (_num, 0.0),
    "calibration.seed": (_int, 0),
    "resonator.f0_Hz": (_num, 1e9),
    "resonator.T0_C": (_num, 30.0),
    "resonator.tcf_ppm_per_C": (_num, -97.2),
    "oven.mode": (_str, "kappa"),
    "oven.setpoint_C": (_num, 56.0),
    "oven.kappa": (_num, KAPPA_MATCH),
    "oven.R_th_K_per_W": (_num, None),
    "oven.R0_ohm": (_num, 2510.0),
    "oven.alpha_per_C": (_num, 1.0e-3),
    "oven.V_applied": (_num, 23.0),
    "oven.V_max": (_num, 30.0),
    "oven.T_amb_ref_C": (_num, 30.0),
    "sweep.uncomp_C": (_list, [32.0, 42.0]),
    "sweep.comp_C": (_list, [30.0, 40.0]),
    "sweep.steps": (_int, 11),
    "output.dir": (_str, "out"),
    "output.slices": (_list, ["heater"]),
    "run.threads": (_int, 1),
}

_MATERIAL_KEY = re.compile(r"^materials\.([A-Za-z0-9_]+)\.([A-Za-z0-9_]+)$")


def _parse_scalar(text: str):
    t = text.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        return t[1:-1]
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_text(text: str, source: str = "<scenario>") -> dict[str, Any]:
    """Raw key/value pairs, values typed but not yet validated."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not re.fullmatch(r"[A-Za-z0-9_.]+", key):
            raise ConfigError(f"{source}:{lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        if value == "":
            raise ConfigError(f"{source}:{lineno}: key {key!r} has no value")
        if "," in value:
            out[key] = [_parse_scalar(v) for v in value.split(",") if v.strip()]
        else:
            out[key] = _parse_scalar(value)
        out.setdefault("__lines__", {})[key] = lineno
    return out


@dataclass(frozen=True)
class Scenario:
    values: dict[str, Any]
    materials: MaterialTable
    source: str
    digest: str
    explicit: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def provenance(self) -> str:
        return f"hotplate {__version__} scenario={self.digest}"

    # derived objects -------------------------------------------------
    def layouts(self):
        v = self.values
        preset = v["geometry.preset"]
        if preset != "custom":
            return preset_layouts(preset)
        spec = SerpentineSpec(
            leg_length=v["geometry.leg_length_um"], leg_count=v["geometry.leg_count"],
            trace_width=v["geometry.trace_width_um"], pitch=v["geometry.pitch_um"],
            trace_thickness=v["geometry.thickness_um"], pad_size=v["geometry.pad_size_um"],
            stub_length=v["geometry.stub_um"])
        if v["geometry.dual"]:
            return list(build_dual_serpentine(spec, second_stub=v["geometry.second_stub_um"]))
        return [build_serpentine(spec, "R1")]

    def stack(self) -> LayerStack:
        layers = self.values["stack.layers"]
        if layers is not None:
            return layers
        return STACKS[self.values["stack.preset"]]

    def voxel_options(self) -> VoxelOptions:
        v = self.values
        fill = v["stack.gap_fill"]
        return VoxelOptions(z_refine=v["grid.z_refine"], plate=v["stack.plate"],
                            gap_fill=None if fill == "none" else fill,
                            substrate=v["stack.substrate"], T_amb=v["thermal.T_amb_K"])

    def robin(self) -> Robin | None:
        v = self.values
        r = Robin(v["thermal.h_top_W_per_m2K"], v["thermal.h_bottom_W_per_m2K"],
                  v["thermal.h_sides_W_per_m2K"], T_ref=v["thermal.T_amb_K"])
        return r if r.active else None

    def resonator(self) -> ResonatorModel:
        v = self.values
        return ResonatorModel(v["resonator.f0_Hz"], v["resonator.T0_C"], v["resonator.tcf_ppm_per_C"])

    def oven(self) -> OvenModel:
        v = self.values
        base = OvenModel(mode=v["oven.mode"], R0=v["oven.R0_ohm"], alpha=v["oven.alpha_per_C"],
                         V_applied=v["oven.V_applied"], setpoint=v["oven.setpoint_C"],
                         V_max=v["oven.V_max"], kappa=v["oven.kappa"], T_amb_ref=v["oven.T_amb_ref_C"])
        R_th = v["oven.R_th_K_per_W"]
        if R_th is None:
            R_th = calibrated_R_th(base)
        return OvenModel(**{**base.__dict__, "R_th": R_th})


def _validate(raw: dict[str, Any], source: str, base_dir: Path) -> tuple[dict[str, Any], MaterialTable]:
    lines = raw.pop("__lines__", {})
    where = lambda k: f"{source}:{lines[k]}" if k in lines else source  # noqa: E731

    material_overrides: dict[str, dict[str, Any]] = {}
    values: dict[str, Any] = {}
    for key, val in raw.items():
        m = _MATERIAL_KEY.match(key)
        if m:
            name, prop = m.groups()
            if prop not in MATERIAL_KEYS:
                raise ConfigError(f"{where(key)}: unknown key {key!r} "
                                  f"(material keys: {', '.join(MATERIAL_KEYS)})")
            material_overrides.setdefault(name, {})[prop] = val
            continue
        if key not in SCHEMA:
            raise ConfigError(f"{where(key)}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where(key)}: bad value for {key!r}: {exc}") from None

    missing = [k for k in REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"{source}: missing required key(s): {', '.join(missing)} "
                          f"(required: {', '.join(REQUIRED)})")

    for key, (_, default) in SCHEMA.items():
        values.setdefault(key, default)

    # units and cross-field checks
    for key in list(values):
        if key.endswith("_um") and values[key] is not None:
            if values[key] <= 0 and key != "geometry.stub_um":
                raise ConfigError(f"{where(key)}: {key} must be positive")
            values[key] = values[key] * UM
    for key in ("grid.z_refine", "run.threads", "calibration.samples"):
        if values[key] < 1:
            raise ConfigError(f"{where(key)}: {key} must be >= 1")
    if values["sweep.steps"] < 2:
        raise ConfigError(f"{where('sweep.steps')}: sweep.steps must be >= 2")
    if values["grid.h_um"] <= 0:
        raise ConfigError("grid.h_um must be positive")

    preset = values["geometry.preset"]
    if preset not in ("R1", "R2", "R1R2", "custom"):
        raise ConfigError(f"{where('geometry.preset')}: unknown preset {preset!r} (R1, R2, R1R2, custom)")
    if preset == "custom":
        need = [k for k in ("geometry.leg_length_um", "geometry.leg_count", "geometry.pitch_um")
                if values[k] is None]
        if need:
            raise ConfigError(f"{source}: custom geometry needs {', '.join(need)}")
    if values["stack.preset"] not in STACKS:
        raise ConfigError(f"{where('stack.preset')}: unknown stack {values['stack.preset']!r}")
    if values["stack.plate"] not in ("full", "meander"):
        raise ConfigError(f"{where('stack.plate')}: plate must be 'full' or 'meander'")
    if values["drive.mode"] not in ("single", "parallel"):
        raise ConfigError(f"{where('drive.mode')}: mode must be 'single' or 'parallel'")
    if values["analytic.format"] not in ("text", "csv"):
        raise ConfigError(f"{where('analytic.format')}: format must be 'text' or 'csv'")
    if values["calibration.source"] not in ("builtin", "files"):
        raise ConfigError(f"{where('calibration.source')}: source must be 'builtin' or 'files'")
    for key in ("sweep.uncomp_C", "sweep.comp_C"):
        rng = values[key]
        if len(rng) != 2 or not all(isinstance(x, (int, float)) for x in rng) or rng[0] == rng[1]:
            raise ConfigError(f"{where(key)}: {key} must be two distinct temperatures")
        values[key] = (float(rng[0]), float(rng[1]))
    for key in ("calibration.single_csv", "calibration.thermistor_csv", "calibration.double_csv"):
        if values[key] is not None:
            p = Path(values[key])
            values[key] = str(p if p.is_absolute() else base_dir / p)
    if values["calibration.source"] == "files" and not any(
            values[k] for k in ("calibration.single_csv", "calibration.thermistor_csv", "calibration.double_csv")):
        raise ConfigError(f"{source}: calibration.source = files needs at least one *_csv key")

    if values["stack.layers"] is not None:
        layers = []
        for item in values["stack.layers"]:
            name, sep, t = str(item).partition(":")
            try:
                layers.append((name.strip(), float(t) * UM))
            except ValueError:
                raise ConfigError(f"{where('stack.layers')}: layer {item!r} is not 'Material:thickness_um'") from None
            if not sep:
                raise ConfigError(f"{where('stack.layers')}: layer {item!r} is not 'Material:thickness_um'")
        values["stack.layers"] = LayerStack(tuple(layers))

    try:
        table = builtin_table(resolve_sheet_res(values["materials.sheet_res"]))
    except ConfigError as exc:
        raise ConfigError(f"{where('materials.sheet_res')}: {exc}") from None
    for name, rec in material_overrides.items():
        rec = dict(rec)
        rec.setdefault("name", name)
        if str(rec["name"]) != name:
            raise ConfigError(f"{source}: materials.{name}.name must equal {name!r}")
        base = table.lookup(name) if name in table else None
        table = table.with_material(material_from_record(rec, base))
    if values["stack.layers"] is not None:
        values["stack.layers"].validate(table)
    return values, table


def load_text(text: str, source: str = "<scenario>", base_dir: Path | None = None) -> Scenario:
    raw = parse_text(text, source)
    explicit = frozenset(k for k in raw if k != "__lines__")
    values, table = _validate(raw, source, base_dir or Path.cwd())
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    return Scenario(values, table, source, digest, explicit)


def parse_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return load_text(text, str(p), p.parent)


def echo(s: Scenario) -> str:
    """Resolved scenario, defaults included, in the same key = value format (SI units)."""
    lines = [f"# {s.provenance}", "# resolved values (SI units)"]
    for key in sorted(s.values):
        v = s.values[key]
        if isinstance(v, LayerStack):
            v = ", ".join(f"{m}:{t!r}" for m, t in v.layers)
        elif isinstance(v, (list, tuple)):
            v = ", ".join(str(x) for x in v)
        mark = "" if key in s.explicit else "  # default"
        lines.append(f"{key} = {v}{mark}")
    return "\n".join(lines) + "\n"
