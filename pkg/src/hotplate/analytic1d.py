"""Closed-form 1-D heater model.

The heater is a uniform bar of length L between two ideal heat sinks at
T_amb. The default profile uses P/(4 L w t k), i.e. only half the heater
power feeds each half of the bar; ``full_power=True`` gives the textbook
P/(2 L w t k) that a 3-D conduction solve reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .materials import UM


@dataclass(frozen=True)
class Heater1D:
    L: float
    w: float
    t: float
    k: float = 20.0
    sheet_res: float = 22.8
    T_amb: float = 300.0

    def __post_init__(self):
        for name in ("L", "w", "t", "k", "sheet_res", "T_amb"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def resistance(h: Heater1D) -> float:
    return h.sheet_res * h.L / h.w


def joule_power(V: float, R: float) -> float:
    if R <= 0:
        raise ValueError("resistance must be positive")
    return V * V / R


def _prefactor(h: Heater1D, P: float, full_power: bool) -> float:
    return P / ((2.0 if full_power else 4.0) * h.L * h.w * h.t * h.k)


def temperature_rise(h: Heater1D, P: float, x, full_power: bool = False):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > h.L / 2 * (1 + 1e-12)):
        raise ValueError("|x| must not exceed L/2")
    rise = _prefactor(h, P, full_power) * ((h.L / 2) ** 2 - x * x)
    return float(rise) if rise.ndim == 0 else rise


def temperature_profile(h: Heater1D, P: float, x, full_power: bool = False):
    """T(x) in K for a heater dissipating P watts; x = 0 is the midpoint."""
    return h.T_amb + temperature_rise(h, P, x, full_power)


def midpoint_rise(h: Heater1D, V: float, R: float | None = None, full_power: bool = False) -> float:
    R = resistance(h) if R is None else R
    return temperature_rise(h, joule_power(V, R), 0.0, full_power)


def midpoint_temperature(h: Heater1D, V: float, R: float | None = None,
                         full_power: bool = False) -> float:
    """Absolute midpoint temperature. `R` overrides the sheet-resistance estimate."""
    return h.T_amb + midpoint_rise(h, V, R, full_power)


@dataclass(frozen=True)
class ReportRow:
    name: str
    L: float
    w: float
    t: float
    R: float
    V: float
    rise: float
    T_abs: float
    rise_full: float
    T_abs_full: float


def report_rows(heaters: dict[str, Heater1D], V: float) -> list[ReportRow]:
    rows = []
    for name, h in heaters.items():
        R = resistance(h)
        r4 = midpoint_rise(h, V)
        r2 = midpoint_rise(h, V, full_power=True)
        rows.append(ReportRow(name, h.L, h.w, h.t, R, V, r4, h.T_amb + r4, r2, h.T_amb + r2))
    return rows


REPORT_COLUMNS = ("heater", "L_um", "w_um", "t_um", "R_kohm", "V", "rise_K",
                  "T_K", "rise_full_K", "T_full_K")


def format_report(rows: list[ReportRow], fmt: str = "text") -> str:
    data = [(r.name, f"{r.L / UM:.1f}", f"{r.w / UM:.2f}", f"{r.t / UM:.3f}", f"{r.R / 1e3:.4f}",
             f"{r.V:g}", f"{r.rise:.2f}", f"{r.T_abs:.2f}", f"{r.rise_full:.2f}",
             f"{r.T_abs_full:.2f}") for r in rows]
    if fmt == "csv":
        return "\n".join(",".join(row) for row in [REPORT_COLUMNS, *data]) + "\n"
    widths = [max(len(c), *(len(d[i]) for d in data)) for i, c in enumerate(REPORT_COLUMNS)]
    lines = ["  ".join(c.rjust(wd) for c, wd in zip(REPORT_COLUMNS, widths))]
    lines += ["  ".join(v.rjust(wd) for v, wd in zip(d, widths)) for d in data]
    return "\n".join(lines) + "\n"
