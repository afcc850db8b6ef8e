"""Steady-state heat conduction on the voxelized stack."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from . import fv
from .electro import PotentialSolution, solve_potential
from .errors import SingularSystemError
from .fields import Grid, ScalarField


@dataclass(frozen=True)
class ThermalSolution:
    temperature: ScalarField  # K, nan in void
    max_T: float
    max_location: tuple[float, float, float]
    boundary_flux: Mapping[str, float]  # W leaving through each BC set
    total_heat: float  # W generated
    iterations: int
    residual: float

    @property
    def energy_residual(self) -> float:
        """Relative mismatch between boundary outflow and generated heat."""
        out = sum(self.boundary_flux.values())
        if self.total_heat == 0:
            return abs(out)
        return abs(out - self.total_heat) / self.total_heat


def solve_temperature(device, heat, robin: fv.Robin | None = None, tol: float = 1e-9,
                      maxiter: int | None = None, threads: int = 1) -> ThermalSolution:
    """Solve div(k grad T) = -Q with fixed-temperature BC sets and adiabatic
    exterior faces (or convective ones when `robin` is given).

    `heat` is a W/m^3 ScalarField or array on the device grid.
    """
    q = np.asarray(heat.values if isinstance(heat, ScalarField) else heat, dtype=float)
    if q.shape != device.shape:
        raise ValueError("heat field does not match the device grid")
    q = np.nan_to_num(q.ravel())

    k = device.property_array("k").ravel()
    fixed = np.zeros(k.size, dtype=bool)
    fixed_values = np.zeros(k.size)
    fixed_sets = {name: bc for name, bc in device.thermal_bcs.items() if bc.kind == "fixed"}
    for bc in fixed_sets.values():
        fixed[bc.cells] = True
        fixed_values[bc.cells] = bc.value
    use_robin = robin is not None and robin.active
    if not fixed.any() and not use_robin:
        raise SingularSystemError("no fixed-temperature boundary condition")

    if not use_robin:
        labels, n = ndimage.label(device.solid_mask)
        labels = labels.ravel()
        anchored = set(np.unique(labels[fixed]).tolist())
        if len(anchored - {0}) < n:
            raise SingularSystemError("a solid region touches no fixed-temperature boundary")

    vol = device.cell_volumes().ravel()
    faces = fv.grid_faces(device)
    robin_diag = fv.robin_terms(device, k, fixed, robin) if use_robin else None
    sys_ = fv.assemble(device, k, fixed, fixed_values, source=q * vol,
                       robin_diag=robin_diag, robin_ref=robin.T_ref if use_robin else 0.0,
                       faces=faces)
    x0 = float(fixed_values[fixed].min()) if fixed.any() else robin.T_ref
    res = fv.pcg(sys_.A, sys_.b, tol=tol, maxiter=maxiter, threads=threads, x0=x0)

    T = np.full(k.size, np.nan)
    T[fixed] = fixed_values[fixed]
    T[sys_.unknowns] = res.x

    g = sys_.g
    m = g > 0
    c, nb, gm = faces.c[m], faces.n[m], g[m]
    flux = {}
    for name, bc in fixed_sets.items():
        inside = np.zeros(k.size, dtype=bool)
        inside[bc.cells] = True
        into_c = inside[c] & ~inside[nb]
        into_n = inside[nb] & ~inside[c]
        w = float((gm[into_c] * (T[nb][into_c] - T[c][into_c])).sum()
                  + (gm[into_n] * (T[c][into_n] - T[nb][into_n])).sum())
        flux[name] = w + float((q * vol)[inside].sum())
    if use_robin:
        free = np.isfinite(T) & ~fixed
        flux["convection"] = float((robin_diag[free] * (T[free] - robin.T_ref)).sum())

    Tg = T.reshape(device.shape)
    field_ = ScalarField(Grid.of(device), Tg, "temperature", "K")
    return ThermalSolution(
        temperature=field_,
        max_T=field_.max(),
        max_location=field_.argmax_point(),
        boundary_flux=flux,
        total_heat=float((q * vol).sum()),
        iterations=res.iterations,
        residual=res.residual,
    )


def probe(sol: ThermalSolution | ScalarField, point) -> float:
    """Trilinear interpolation of cell-centred values at `point`.

    Undefined (void) neighbours are dropped and the remaining weights
    renormalised; if no defined neighbour carries weight the nearest defined
    cell is used.
    """
    f = sol.temperature if isinstance(sol, ThermalSolution) else sol
    grid = f.grid
    grid.locate(point)  # raises when outside
    xs, ys, zs = grid.centers()
    idx, wts = [], []
    for centers, p in zip((xs, ys, zs), point):
        if centers.size == 1:
            idx.append((0, 0))
            wts.append((1.0, 0.0))
            continue
        i = int(np.clip(np.searchsorted(centers, p) - 1, 0, centers.size - 2))
        t = float(np.clip((p - centers[i]) / (centers[i + 1] - centers[i]), 0.0, 1.0))
        idx.append((i, i + 1))
        wts.append((1.0 - t, t))
    num = den = 0.0
    for a in range(2):
        for b in range(2):
            for c in range(2):
                w = wts[0][a] * wts[1][b] * wts[2][c]
                v = f.values[idx[0][a], idx[1][b], idx[2][c]]
                if w > 0 and np.isfinite(v):
                    num += w * v
                    den += w
    if den > 1e-12:
        return float(num / den)
    ii, jj, kk = np.nonzero(np.isfinite(f.values))
    d2 = (xs[ii] - point[0]) ** 2 + (ys[jj] - point[1]) ** 2 + (zs[kk] - point[2]) ** 2
    b = int(np.argmin(d2))
    return float(f.values[ii[b], jj[b], kk[b]])


def device_center(device) -> tuple[float, float, float]:
    """Footprint centroid at the mid-plane of the heater layer."""
    cx, cy = device.footprint_center
    return (cx, cy, device.heater_mid_z())


@dataclass(frozen=True)
class CoupledOptions:
    robin: fv.Robin | None = None
    tol: float = 1e-9
    maxiter: int | None = None
    threads: int = 1


def run_coupled(device, pad_voltages, options: CoupledOptions | None = None
                ) -> tuple[PotentialSolution, ThermalSolution]:
    """Electrical solve, then the thermal solve driven by its Joule heat."""
    o = options or CoupledOptions()
    el = solve_potential(device, pad_voltages, tol=o.tol, maxiter=o.maxiter, threads=o.threads)
    th = solve_temperature(device, el.heat_density, robin=o.robin, tol=o.tol,
                           maxiter=o.maxiter, threads=o.threads)
    return el, th
