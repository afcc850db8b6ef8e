"""Micro-oven temperature compensation of a resonator with linear TCF.

Three oven modes:

``fixed_voltage``
    Constant drive; the device settles where T = T_amb + R_th V^2 / R(T),
    with R(T) = R0 (1 + alpha (T - T0_h)). A positive TCR makes the heater
    partly self-regulating.
``closed_loop``
    Ideal controller holding the setpoint while the required voltage stays
    below ``V_max``.
``kappa``
    Empirical coupling: T_dev = setpoint + kappa (T_amb - T_amb_ref).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ConvergenceError

REF_UNCOMP_TCF = -97.2
REF_COMP_TCF = -23.19
# coupling that reproduces the compensated TCF by construction
KAPPA_MATCH = REF_COMP_TCF / REF_UNCOMP_TCF


class SetpointWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResonatorModel:
    f0: float = 1e9  # Hz at T0
    T0: float = 30.0  # degC
    tcf: float = REF_UNCOMP_TCF  # ppm/degC

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError("f0 must be positive")


@dataclass(frozen=True)
class OvenModel:
    mode: str = "kappa"  # fixed_voltage | closed_loop | kappa
    R_th: float = 125.0  # K/W
    R0: float = 2510.0  # ohm at T0_h
    alpha: float = 1.0e-3  # 1/degC
    T0_h: float = 30.0
    V_applied: float = 23.0
    setpoint: float = 56.0
    V_max: float = 30.0
    kappa: float | None = KAPPA_MATCH
    T_amb_ref: float = 30.0

    def __post_init__(self):
        if self.mode not in ("fixed_voltage", "closed_loop", "kappa"):
            raise ConfigError(f"unknown oven mode {self.mode!r}")
        if not (self.R_th > 0 and self.R0 > 0):
            raise ConfigError("R_th and R0 must be positive")
        if self.kappa is not None and not 0 <= self.kappa <= 1:
            raise ConfigError("kappa must lie in [0, 1]")
        if self.mode == "kappa" and self.kappa is None:
            raise ConfigError("kappa mode needs a kappa value")

    def resistance(self, T: float) -> float:
        return self.R0 * (1.0 + self.alpha * (T - self.T0_h))


def calibrated_R_th(oven: OvenModel, T_amb: float | None = None) -> float:
    """R_th that puts the fixed-voltage device at the setpoint for ambient T_amb."""
    T_amb = oven.T_amb_ref if T_amb is None else T_amb
    rise = oven.setpoint - T_amb
    if rise <= 0:
        raise ConfigError("setpoint must be above the reference ambient")
    return rise * oven.resistance(oven.setpoint) / oven.V_applied ** 2


def tcf(f_ref: float, f_low: float, T_low: float, f_high: float, T_high: float) -> float:
    """Two-point TCF in ppm/degC: (delta f / f_ref) / delta T."""
    if T_high == T_low:
        raise ValueError("the two temperatures must differ")
    if not f_ref > 0:
        raise ValueError("f_ref must be positive")
    return (f_high - f_low) / f_ref / (T_high - T_low) * 1e6


def resonator_frequency(m: ResonatorModel, T):
    return m.f0 * (1.0 + m.tcf * 1e-6 * (np.asarray(T, dtype=float) - m.T0))


def _fixed_point(oven: OvenModel, T_amb: float, V: float, tol: float = 1e-6,
                 max_iter: int = 10_000) -> float:
    T = T_amb + oven.R_th * V * V / oven.R0
    for _ in range(max_iter):
        R = oven.resistance(T)
        if R <= 0:
            raise ConvergenceError("heater resistance became non-positive")
        g = T_amb + oven.R_th * V * V / R
        slope = oven.R_th * V * V * oven.alpha * oven.R0 / (R * R)  # |dg/dT|
        lam = 1.0 / (1.0 + slope)
        T_new = (1.0 - lam) * T + lam * g
        if abs(T_new - T) <= tol * 1e-3:
            return T_new
        T = T_new
    raise ConvergenceError(f"oven fixed point did not converge at T_amb={T_amb:g}")


def fixed_point_residual(oven: OvenModel, T_amb: float, T_dev: float, V: float | None = None) -> float:
    V = oven.V_applied if V is None else V
    return T_dev - T_amb - oven.R_th * V * V / oven.resistance(T_dev)


def required_voltage(oven: OvenModel, T_amb: float) -> float:
    """Drive that holds the setpoint at ambient T_amb (0 when already above it)."""
    rise = oven.setpoint - T_amb
    if rise <= 0:
        return 0.0
    return math.sqrt(rise * oven.resistance(oven.setpoint) / oven.R_th)


def device_temperature(oven: OvenModel, T_amb: float) -> float:
    if oven.mode == "kappa":
        return oven.setpoint + oven.kappa * (T_amb - oven.T_amb_ref)
    if oven.mode == "fixed_voltage":
        return _fixed_point(oven, T_amb, oven.V_applied)
    # closed loop
    if T_amb >= oven.setpoint:
        warnings.warn(f"setpoint {oven.setpoint:g} C unreachable at ambient {T_amb:g} C "
                      "(heater cannot cool)", SetpointWarning, stacklevel=2)
        return float(T_amb)
    if required_voltage(oven, T_amb) > oven.V_max:
        warnings.warn(f"setpoint {oven.setpoint:g} C needs more than V_max={oven.V_max:g} V "
                      f"at ambient {T_amb:g} C", SetpointWarning, stacklevel=2)
        return min(oven.setpoint, _fixed_point(oven, T_amb, oven.V_max))
    return float(oven.setpoint)


def temperature_slope(oven: OvenModel, T_amb: float) -> float:
    """dT_dev/dT_amb of the fixed-voltage oven by implicit differentiation."""
    T = device_temperature(replace(oven, mode="fixed_voltage"), T_amb)
    R = oven.resistance(T)
    V = oven.V_applied
    return 1.0 / (1.0 + oven.R_th * V * V * oven.alpha * oven.R0 / (R * R))


@dataclass(frozen=True)
class CompensationReport:
    T_amb: np.ndarray  # degC, ascending
    T_dev: np.ndarray  # degC
    f: np.ndarray  # Hz
    f_ref: float
    effective_tcf: float  # ppm/degC
    label: str = ""
    reduction_factor: float | None = None

    def rows(self):
        return list(zip(self.T_amb.tolist(), self.T_dev.tolist(), self.f.tolist()))


def effective_tcf(T_amb, f, f_ref: float) -> float:
    """Least-squares slope of the fractional frequency shift (ppm) against T_amb."""
    x = np.asarray(T_amb, dtype=float)
    y = (np.asarray(f, dtype=float) - f_ref) / f_ref * 1e6
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def run_sweep(resonator: ResonatorModel, oven: OvenModel | None, T_amb_range, steps: int,
              threads: int = 1, label: str = "") -> CompensationReport:
    """Ambient sweep; without an oven the device follows ambient.

    The fractional shift is referenced to the resonator's frequency at its
    reference temperature, so an un-ovened linear resonator returns its TCF
    exactly regardless of the sweep range.
    """
    if steps < 2:
        raise ValueError("a sweep needs at least two points")
    lo, hi = sorted(T_amb_range)
    if hi == lo:
        raise ValueError("sweep range is empty")
    T_amb = np.linspace(lo, hi, steps)
    if oven is None:
        T_dev = T_amb.copy()
    elif threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            T_dev = np.array(list(pool.map(lambda t: device_temperature(oven, t), T_amb)))
    else:
        T_dev = np.array([device_temperature(oven, t) for t in T_amb])
    f = resonator_frequency(resonator, T_dev)
    return CompensationReport(T_amb, T_dev, f, resonator.f0,
                              effective_tcf(T_amb, f, resonator.f0), label=label)


def compare(resonator: ResonatorModel, oven: OvenModel, uncomp_range=(32.0, 42.0),
            comp_range=(30.0, 40.0), steps: int = 11, threads: int = 1
            ) -> tuple[CompensationReport, CompensationReport]:
    """Uncompensated and compensated sweeps plus the TCF reduction factor."""
    un = run_sweep(resonator, None, uncomp_range, steps, threads, label="uncompensated")
    co = run_sweep(resonator, oven, comp_range, steps, threads, label="compensated")
    rf = abs(un.effective_tcf) / abs(co.effective_tcf) if co.effective_tcf != 0 else math.inf
    return replace(un, reduction_factor=rf), replace(co, reduction_factor=rf)


REPORT_HEADER = ("T_amb_C", "T_dev_C", "f_Hz")


def write_report_csv(report: CompensationReport, path, provenance: str | None = None):
    with open(path, "w") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write(",".join(REPORT_HEADER) + "\n")
        for a, b, c in report.rows():
            fh.write(f"{a!r},{b!r},{c!r}\n")


def read_report_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if tuple(lines[0].split(",")) != REPORT_HEADER:
        raise ValueError(f"{path}: unexpected header")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return data[:, 0], data[:, 1], data[:, 2]
