"""Polynomial calibration curves: fitting, evaluation and inversion.

Coefficients are stored lowest order first (c0 + c1 x + ...). Three
reference relationships ship as ready-made models: device temperature vs
single-heater voltage (cubic), vs thermistor resistance in kOhm (linear), and
vs voltage with both heaters in parallel (quadratic).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

from .errors import CalibrationError, ExtrapolationWarning


@dataclass(frozen=True)
class Residuals:
    n: int
    rms: float
    max_abs: float
    ssr: float


@dataclass(frozen=True)
class CalibrationModel:
    coefficients: tuple[float, ...]  # c0..cn
    input_unit: str  # "V" or "kohm"
    valid_interval: tuple[float, float]
    output_unit: str = "degC"
    name: str = ""
    residuals: Residuals | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.coefficients:
            raise CalibrationError("a model needs at least one coefficient")
        lo, hi = self.valid_interval
        if not hi > lo:
            raise CalibrationError("valid interval is degenerate")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def __call__(self, x):
        return evaluate(self, x)


def _horner(coeffs, x):
    acc = np.zeros_like(x) + coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc * x + c
    return acc


def evaluate(model: CalibrationModel, x, warn: bool = True):
    xa = np.asarray(x, dtype=float)
    lo, hi = model.valid_interval
    if warn and np.any((xa < lo) | (xa > hi)):
        warnings.warn(f"{model.name or 'model'}: input outside calibrated range [{lo:g}, {hi:g}] "
                      f"{model.input_unit}", ExtrapolationWarning, stacklevel=2)
    y = _horner(model.coefficients, xa)
    return float(y) if y.ndim == 0 else y


T_SINGLE = CalibrationModel((26.594, 0.4614, -0.0278, 0.0015), "V", (0.0, 25.0), name="T(V) single heater")
T_DOUBLE = CalibrationModel((28.455, -0.3046, 0.0679), "V", (0.0, 25.0), name="T2(V2) both heaters")
THERMISTOR_SLOPE, THERMISTOR_INTERCEPT = 167.68, -766.04
# resistance span that maps onto the single-heater temperature span
_R_LO = (T_SINGLE.coefficients[0] - THERMISTOR_INTERCEPT) / THERMISTOR_SLOPE
_R_HI = (evaluate(T_SINGLE, 25.0) - THERMISTOR_INTERCEPT) / THERMISTOR_SLOPE
T_THERMISTOR = CalibrationModel((THERMISTOR_INTERCEPT, THERMISTOR_SLOPE), "kohm", (_R_LO, _R_HI), name="T(R) thermistor")

BUILTIN = {"single": T_SINGLE, "thermistor": T_THERMISTOR, "double": T_DOUBLE}


def temperature_from_resistance(R_kohm: float) -> float:
    """Thermistor reading: R in kOhm to degrees C."""
    if R_kohm <= 0:
        raise CalibrationError("resistance must be positive")
    return evaluate(T_THERMISTOR, R_kohm)


def fit_polynomial(x, y, degree: int, input_unit: str = "V", name: str = "",
                   valid_interval: tuple[float, float] | None = None) -> CalibrationModel:
    """Least-squares polynomial fit.

    Inputs are mapped onto [-1, 1] before the fit (SVD-based least squares)
    and the coefficients converted back to raw units.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise CalibrationError("x and y must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise CalibrationError("samples must be finite")
    if degree < 0:
        raise CalibrationError("degree must be >= 0")
    if degree >= x.size:
        raise CalibrationError(f"degree {degree} needs at least {degree + 1} samples, got {x.size}")
    if np.unique(x).size < degree + 1:
        raise CalibrationError(f"rank deficient: only {np.unique(x).size} distinct inputs for degree {degree}")
    if degree == 0 or np.ptp(x) == 0:
        coef = np.array([y.mean()])
    else:
        coef = Polynomial.fit(x, y, degree).convert().coef
    coef = np.pad(coef, (0, degree + 1 - coef.size))
    resid = y - _horner(tuple(coef), x)
    ssr = float(resid @ resid)
    rep = Residuals(int(x.size), float(np.sqrt(ssr / x.size)), float(np.max(np.abs(resid))), ssr)
    if valid_interval is None:
        lo, hi = float(x.min()), float(x.max())
        valid_interval = (lo, hi) if hi > lo else (lo - 0.5, lo + 0.5)
    return CalibrationModel(tuple(float(c) for c in coef), input_unit, valid_interval,
                            name=name, residuals=rep)


def sum_squared_residuals(model: CalibrationModel, x, y) -> float:
    r = np.asarray(y, float) - _horner(model.coefficients, np.asarray(x, float))
    return float(r @ r)


def _monotone_pieces(model: CalibrationModel):
    lo, hi = model.valid_interval
    crit = model.polynomial().deriv().roots() if model.degree >= 2 else np.array([])
    crit = sorted(float(r.real) for r in np.atleast_1d(crit)
                  if abs(r.imag) < 1e-12 and lo < r.real < hi)
    edges = [lo, *crit, hi]
    return list(zip(edges[:-1], edges[1:]))


def invert_for_voltage(model: CalibrationModel, T_target: float, tol: float = 0.01,
                       max_iter: int = 200) -> float:
    """Input (usually volts) at which the model reaches `T_target`.

    Bisection on the increasing stretch of the calibrated interval that
    brackets the target; stops at |T - T_target| <= tol.
    """
    candidates = []
    for a, b in _monotone_pieces(model):
        ta, tb = evaluate(model, a, warn=False), evaluate(model, b, warn=False)
        if min(ta, tb) - tol <= T_target <= max(ta, tb) + tol:
            candidates.append((a, b, ta, tb))
    if not candidates:
        raise CalibrationError(f"target {T_target:g} {model.output_unit} is outside the model's range")
    if len(candidates) > 1 or candidates[0][3] < candidates[0][2]:
        raise CalibrationError("model is not monotone nondecreasing around the target")
    a, b, ta, tb = candidates[0]
    if T_target <= ta:
        return a
    if T_target >= tb:
        return b
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tm = evaluate(model, m, warn=False)
        if abs(tm - T_target) <= tol:
            return m
        if tm < T_target:
            a = m
        else:
            b = m
    raise CalibrationError("bisection did not converge")


def synthetic_samples(model: CalibrationModel, n: int = 10, noise_sd: float = 0.0,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced samples of `model` over its interval, optionally with
    Gaussian noise (degC). These are generated, not measured, data."""
    lo, hi = model.valid_interval
    x = np.linspace(lo, hi, n)
    y = evaluate(model, x, warn=False)
    if noise_sd > 0:
        y = y + np.random.default_rng(seed).normal(0.0, noise_sd, size=n)
    return x, y


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(ln for ln in fh if not ln.startswith("#")) if r]
    if not rows or [c.strip() for c in rows[0][:2]] != ["input", "output"]:
        raise CalibrationError(f"{path}: expected header 'input,output'")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise CalibrationError(f"{path}: bad sample row ({exc})") from None
    return data[:, 0], data[:, 1]


def write_samples(path, x, y, provenance: str | None = None):
    with open(path, "w") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write("input,output\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def dumps(model: CalibrationModel) -> str:
    lines = [
        f"name = {model.name}",
        f"degree = {model.degree}",
        "coefficients = " + ", ".join(repr(float(c)) for c in model.coefficients),
        f"input_unit = {model.input_unit}",
        f"output_unit = {model.output_unit}",
        f"valid_lo = {float(model.valid_interval[0])!r}",
        f"valid_hi = {float(model.valid_interval[1])!r}",
    ]
    if model.residuals is not None:
        r = model.residuals
        lines += [f"n_samples = {r.n}", f"rms_residual = {r.rms!r}", f"max_abs_residual = {r.max_abs!r}"]
    return "\n".join(lines) + "\n"


def loads(text: str) -> CalibrationModel:
    kv = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        kv[key.strip()] = value.strip()
    try:
        coefs = tuple(float(c) for c in kv["coefficients"].split(","))
        if int(kv["degree"]) != len(coefs) - 1:
            raise CalibrationError("degree does not match coefficient count")
        res = None
        if "rms_residual" in kv:
            res = Residuals(int(kv["n_samples"]), float(kv["rms_residual"]),
                            float(kv["max_abs_residual"]), float(kv["rms_residual"]) ** 2 * int(kv["n_samples"]))
        return CalibrationModel(coefs, kv["input_unit"], (float(kv["valid_lo"]), float(kv["valid_hi"])),
                                output_unit=kv.get("output_unit", "degC"), name=kv.get("name", ""),
                                residuals=res)
    except KeyError as exc:
        raise CalibrationError(f"model file is missing {exc}") from None
