"""Steady-state conduction in the heater layer: potential, current density,
lumped resistance and the Joule source for the thermal solve."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import ndimage

from . import fv
from .errors import ConfigError, SolverError
from .fields import Grid, ScalarField, VectorField


@dataclass(frozen=True)
class PotentialSolution:
    potential: ScalarField  # V, nan outside driven conductors
    current_density: VectorField  # A/m^2
    pad_currents: Mapping[str, float]  # A flowing from each electrode into the device
    pad_voltages: Mapping[str, float]
    heat_density: ScalarField  # W/m^3
    lumped_resistance: float  # ohm, nan when undefined
    iterations: int
    residual: float
    cell_power: np.ndarray = field(repr=False)  # W per cell, flat

    @property
    def total_power(self) -> float:
        return float(self.cell_power.sum())

    @property
    def electrode_power(self) -> float:
        """Sum of V*I over the driven electrodes."""
        return float(sum(self.pad_voltages[e] * i for e, i in self.pad_currents.items()))


def _levels(pad_voltages: Mapping[str, float]) -> list[float]:
    return sorted(set(float(v) for v in pad_voltages.values()))


def solve_potential(device, pad_voltages: Mapping[str, float], tol: float = 1e-9,
                    maxiter: int | None = None, threads: int = 1) -> PotentialSolution:
    """Solve div(sigma grad V) = 0 with the listed electrodes held at fixed potential.

    Conductor regions without a driven electrode float: their potential is
    left undefined (nan) and they carry no current.
    """
    unknown = set(pad_voltages) - set(device.electrodes)
    if unknown:
        raise ConfigError(f"unknown electrode(s): {', '.join(sorted(unknown))} "
                          f"(have {', '.join(device.electrodes)})")
    if len(pad_voltages) < 2:
        raise ConfigError("at least two electrodes must be driven")

    shape = device.shape
    sigma = device.property_array("sigma").ravel().copy()
    fixed = np.zeros(sigma.size, dtype=bool)
    fixed_values = np.zeros(sigma.size)
    for name, v in pad_voltages.items():
        cells = device.electrodes[name]
        fixed[cells] = True
        fixed_values[cells] = float(v)

    labels, n = ndimage.label(sigma.reshape(shape) > 0)
    labels = labels.ravel()
    driven = set(np.unique(labels[fixed]).tolist())
    floating = (labels > 0) & ~np.isin(labels, list(driven))
    sigma[floating] = 0.0

    faces = fv.grid_faces(device)
    sys_ = fv.assemble(device, sigma, fixed, fixed_values, faces=faces)
    # start from the mean drive level: exact when all electrodes share one potential
    x0 = float(np.mean(_levels(pad_voltages)))
    res = fv.pcg(sys_.A, sys_.b, tol=tol, maxiter=maxiter, threads=threads, x0=x0)

    V = np.full(sigma.size, np.nan)
    V[fixed] = fixed_values[fixed]
    V[sys_.unknowns] = res.x

    g = sys_.g
    m = g > 0
    c, nb, gm, area, axis = faces.c[m], faces.n[m], g[m], faces.area[m], faces.axis[m]
    current = gm * (V[c] - V[nb])  # along +axis
    # cell-centred J: mean of the two face flux densities per axis
    J = np.zeros((sigma.size, 3))
    np.add.at(J, (c, axis), 0.5 * current / area)
    np.add.at(J, (nb, axis), 0.5 * current / area)

    # face dissipation split between the free cells that own it
    diss = gm * (V[c] - V[nb]) ** 2
    fc, fn = fixed[c], fixed[nb]
    wc = np.where(fc, 0.0, np.where(fn, 1.0, 0.5))
    power = np.zeros(sigma.size)
    np.add.at(power, c, wc * diss)
    np.add.at(power, nb, (1.0 - wc) * diss)
    vol = device.cell_volumes().ravel()
    Q = power / vol

    pad_currents = {}
    for name in pad_voltages:
        cells = device.electrodes[name]
        inside = np.zeros(sigma.size, dtype=bool)
        inside[cells] = True
        out_c = inside[c] & ~inside[nb]
        out_n = inside[nb] & ~inside[c]
        pad_currents[name] = float(current[out_c].sum() - current[out_n].sum())

    levels = _levels(pad_voltages)
    R = np.nan
    if len(levels) == 2:
        I = sum(i for e, i in pad_currents.items() if float(pad_voltages[e]) == levels[1])
        if I != 0:
            R = (levels[1] - levels[0]) / I

    cond = sigma > 0
    grid = Grid.of(device)
    Jv = np.where(cond[:, None], J, np.nan).reshape(shape + (3,))
    return PotentialSolution(
        potential=ScalarField(grid, V.reshape(shape), "potential", "V"),
        current_density=VectorField(grid, Jv, "J", "A/m^2"),
        pad_currents=pad_currents,
        pad_voltages={k: float(v) for k, v in pad_voltages.items()},
        heat_density=ScalarField(grid, Q.reshape(shape), "heat_density", "W/m^3"),
        lumped_resistance=float(R),
        iterations=res.iterations,
        residual=res.residual,
        cell_power=power,
    )


def lumped_resistance(sol: PotentialSolution) -> float:
    """Applied voltage over the net current of the high-side electrodes."""
    levels = _levels(sol.pad_voltages)
    if len(levels) != 2:
        raise SolverError("lumped resistance needs exactly two distinct drive levels")
    if not np.isfinite(sol.lumped_resistance):
        raise SolverError("no current flows between the electrodes")
    return sol.lumped_resistance


def current_density_stats(sol: PotentialSolution, probe) -> tuple[float, float]:
    """|J| at the conductor cell nearest to `probe`, and the maximum |J|.

    The probe snaps to conductor cells because current density is only
    defined inside the conductor.
    """
    mag = sol.current_density.magnitude().values
    grid = sol.current_density.grid
    grid.locate(probe)  # raises when outside
    defined = np.isfinite(mag)
    if not defined.any():
        raise SolverError("no conductor cells carry current")
    xs, ys, zs = grid.centers()
    ii, jj, kk = np.nonzero(defined)
    d2 = (xs[ii] - probe[0]) ** 2 + (ys[jj] - probe[1]) ** 2 + (zs[kk] - probe[2]) ** 2
    best = int(np.argmin(d2))
    return float(mag[ii[best], jj[best], kk[best]]), float(np.nanmax(mag))


def drive(device, volts: float, mode: str = "single", resistor: str | None = None) -> dict[str, float]:
    """Electrode voltages for driving one resistor or all of them in parallel.

    The ".a" pad of each driven resistor is held at `volts`, the ".b" pad at 0.
    """
    if mode == "parallel":
        targets = list(device.layout_names)
    elif mode == "single":
        targets = [resistor or device.layout_names[-1]]
        if targets[0] not in device.layout_names:
            raise ConfigError(f"no resistor named {targets[0]!r}")
    else:
        raise ConfigError(f"unknown drive mode {mode!r}")
    out = {}
    for t in targets:
        out[f"{t}.a"] = float(volts)
        out[f"{t}.b"] = 0.0
    return out
