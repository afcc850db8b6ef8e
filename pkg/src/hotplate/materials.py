"""Material properties for the CMOS heater stack.

All quantities are SI. Thicknesses given in micrometres by callers are
converted before they reach a :class:`Material`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping

from .errors import ConfigError, UnknownMaterialError

UM = 1e-6

# Foundry sheet resistance of the poly layer.
POLY_SHEET_RES = 22.8
# Sheet resistance implied by the nominal heater resistances (R*w/L of both heaters).
EFFECTIVE_SHEET_RES = 14.9
POLY_THICKNESS = 0.3 * UM

SHEET_RES_PRESETS = {
    "foundry": POLY_SHEET_RES,
    "table1_effective": EFFECTIVE_SHEET_RES,
}


@dataclass(frozen=True)
class Material:
    name: str
    k: float  # W/(m K)
    c: float  # J/(kg K)
    rho: float  # kg/m^3
    sigma: float | None = None  # S/m, conductors only
    sheet_res: float | None = None  # ohm/sq at `thickness`
    thickness: float | None = None  # m, reference thickness for sheet_res

    def __post_init__(self):
        for attr in ("k", "c", "rho"):
            if not getattr(self, attr) > 0:
                raise ValueError(f"{self.name}: {attr} must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"{self.name}: sigma must be positive")

    @property
    def is_conductor(self) -> bool:
        return self.sigma is not None

    def sheet_resistance(self, t: float) -> float:
        """Sheet resistance (ohm/sq) of a film of this material of thickness `t`."""
        if self.sigma is None:
            raise ValueError(f"{self.name} is not an electrical conductor")
        return 1.0 / (self.sigma * t)

    def with_sheet_res(self, sheet_res: float, thickness: float | None = None) -> Material:
        t = thickness if thickness is not None else self.thickness
        if t is None:
            raise ValueError("a thickness is needed to convert sheet resistance")
        return replace(self, sheet_res=sheet_res, thickness=t, sigma=1.0 / (sheet_res * t))


def conductor(name: str, k: float, c: float, rho: float, sheet_res: float, thickness: float) -> Material:
    """Build a conductor from its sheet resistance at a reference thickness."""
    if sheet_res <= 0 or thickness <= 0:
        raise ValueError("sheet resistance and thickness must be positive")
    return Material(name, k, c, rho, sigma=1.0 / (sheet_res * thickness),
                    sheet_res=sheet_res, thickness=thickness)


@dataclass(frozen=True)
class MaterialTable:
    entries: Mapping[str, Material] = field(default_factory=dict)

    def __post_init__(self):
        for key, mat in self.entries.items():
            if key != mat.name:
                raise ValueError(f"table key {key!r} does not match material name {mat.name!r}")
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def lookup(self, name: str) -> Material:
        try:
            return self.entries[name]
        except KeyError:
            raise UnknownMaterialError(
                f"unknown material {name!r} (known: {', '.join(sorted(self.entries))})"
            ) from None

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def names(self) -> list[str]:
        return list(self.entries)

    def with_material(self, mat: Material) -> MaterialTable:
        entries = dict(self.entries)
        entries[mat.name] = mat
        return MaterialTable(entries)


def lookup(table: MaterialTable, name: str) -> Material:
    return table.lookup(name)


def builtin_table(sheet_res: float = POLY_SHEET_RES) -> MaterialTable:
    """The three-layer heater stack: polysilicon heater, oxide, aluminium plate.

    Thermal conductivities are all in W/(m K). The source values mix pW/(um K)
    with bare numbers; every row is read as W/(m K).
    Aluminium is treated as an electrical insulator because only the poly
    heaters are driven.
    """
    return MaterialTable({
        "PolySi": conductor("PolySi", k=20.0, c=678.0, rho=2330.0,
                            sheet_res=sheet_res, thickness=POLY_THICKNESS),
        "SiO2": Material("SiO2", k=1.2, c=730.0, rho=2270.0),
        "Al": Material("Al", k=190.0, c=963.0, rho=2699.0),
        # optional substrate; not part of any default stack
        "Si": Material("Si", k=148.0, c=705.0, rho=2329.0),
    })


def effective_sheet_resistance(R_measured: float, L: float, w: float) -> float:
    """Sheet resistance implied by a measured resistance of an L x w trace."""
    if R_measured <= 0 or L <= 0 or w <= 0:
        raise ValueError("R, L and w must all be positive")
    return R_measured * w / L


def resolve_sheet_res(value) -> float:
    """Accept a number or a preset name ("foundry", "table1_effective")."""
    if isinstance(value, str):
        try:
            return SHEET_RES_PRESETS[value]
        except KeyError:
            raise ConfigError(f"unknown sheet resistance preset {value!r}") from None
    value = float(value)
    if value <= 0:
        raise ConfigError("sheet resistance must be positive")
    return value


MATERIAL_KEYS = ("name", "k_W_per_mK", "c_J_per_kgK", "rho_kg_per_m3",
                 "sheet_res_ohm_per_sq", "thickness_um")


def material_from_record(rec: Mapping[str, object], base: Material | None = None) -> Material:
    """Build a material from a config record using the external key names.

    Missing keys fall back to `base` when overriding a built-in entry.
    """
    unknown = set(rec) - set(MATERIAL_KEYS)
    if unknown:
        raise ConfigError(f"unknown material key(s): {', '.join(sorted(unknown))}")

    def get(key, default):
        return float(rec[key]) if key in rec else default

    name = str(rec.get("name", base.name if base else ""))
    if not name:
        raise ConfigError("material record needs a name")
    k = get("k_W_per_mK", base.k if base else None)
    c = get("c_J_per_kgK", base.c if base else None)
    rho = get("rho_kg_per_m3", base.rho if base else None)
    if k is None or c is None or rho is None:
        raise ConfigError(f"material {name!r} needs k_W_per_mK, c_J_per_kgK and rho_kg_per_m3")
    sheet_res = get("sheet_res_ohm_per_sq", base.sheet_res if base else None)
    thickness = rec.get("thickness_um")
    t = float(thickness) * UM if thickness is not None else (base.thickness if base else None)
    try:
        if sheet_res is not None:
            if t is None:
                raise ConfigError(f"material {name!r}: sheet resistance needs thickness_um")
            return conductor(name, k, c, rho, sheet_res, t)
        return Material(name, k, c, rho)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
