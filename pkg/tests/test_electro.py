import numpy as np
import pytest

from hotplate import electro as E, fv
from hotplate import geometry as G
from hotplate.errors import ConfigError, SolverError
from hotplate.materials import UM
from hotplate.thermal import device_center

from conftest import bar_device, bar_mask, x_of_cells

L, W, T = 400 * UM, 12 * UM, 0.3 * UM
RS = 22.8


@pytest.fixture(scope="module")
def bar():
    dev = bar_device(2 * UM)
    return dev, E.solve_potential(dev, {"bar.a": 1.0, "bar.b": 0.0})


def test_bar_linear_potential(bar):
    dev, sol = bar
    m = bar_mask(dev)
    x = x_of_cells(dev, m)
    expect = 1.0 - x / L
    assert np.max(np.abs(sol.potential.values[m] - expect)) < 1e-6


def test_bar_uniform_current_density(bar):
    dev, sol = bar
    R = RS * L / W
    j0 = 1.0 / (R * W * T)
    mag = sol.current_density.magnitude().values[bar_mask(dev)]
    assert np.allclose(mag, j0, rtol=5e-3)
    at, mx = E.current_density_stats(sol, device_center(dev))
    assert at == pytest.approx(j0, rel=5e-3) and mx == pytest.approx(j0, rel=5e-3)


def test_bar_resistance(bar):
    _, sol = bar
    assert E.lumped_resistance(sol) == pytest.approx(RS * L / W, rel=0.02)


def test_pad_currents_sum_to_zero(bar):
    _, sol = bar
    I = sol.pad_currents
    # CG stops at a 1e-9 relative residual; the imbalance follows that scale
    assert abs(I["bar.a"] + I["bar.b"]) <= 1e-6 * abs(I["bar.a"])


def test_energy_consistency(bar):
    _, sol = bar
    assert sol.total_power == pytest.approx(sol.electrode_power, rel=5e-3)
    assert np.nanmin(sol.heat_density.values) >= 0


def test_zero_difference():
    dev = bar_device(4 * UM)
    sol = E.solve_potential(dev, {"bar.a": 0.7, "bar.b": 0.7})
    assert np.nanmax(np.abs(sol.current_density.values)) == 0
    assert np.nanmax(sol.heat_density.values) == 0
    with pytest.raises(SolverError):
        E.lumped_resistance(sol)


def test_needs_two_electrodes():
    dev = bar_device(4 * UM)
    with pytest.raises(ConfigError):
        E.solve_potential(dev, {"bar.a": 1.0})
    with pytest.raises(ConfigError):
        E.solve_potential(dev, {"bar.a": 1.0, "nope.b": 0.0})


def test_probe_outside_grid(bar):
    _, sol = bar
    with pytest.raises(ValueError):
        E.current_density_stats(sol, (1.0, 1.0, 1.0))


def test_parallel_bars_halve_resistance(table):
    a = G.straight_bar(L, W, name="a", y=0.0)
    b = G.straight_bar(L, W, name="b", y=40 * UM)
    dev = G.voxelize([a, b], G.STACKS["poly_only"], 2 * UM, table)
    one = E.solve_potential(dev, {"a.a": 1.0, "a.b": 0.0})
    both = E.solve_potential(dev, {"a.a": 1.0, "a.b": 0.0, "b.a": 1.0, "b.b": 0.0})
    assert E.lumped_resistance(both) == pytest.approx(E.lumped_resistance(one) / 2, rel=0.01)
    # the undriven bar floats
    assert np.isnan(one.potential.values[dev.owner == 1]).all()


def test_r2_lumped_resistance(r2_device):
    sol = E.solve_potential(r2_device, E.drive(r2_device, 1.0))
    assert E.lumped_resistance(sol) == pytest.approx(7585, rel=0.05)


def test_r2_current_conservation(r2_device):
    sol = E.solve_potential(r2_device, E.drive(r2_device, 1.0), tol=1e-12)
    dev = r2_device
    V = sol.potential.values.ravel()
    fixed = np.zeros(dev.n_cells, bool)
    for cells in dev.electrodes.values():
        fixed[cells] = True
    sigma = dev.property_array("sigma").ravel()
    faces = fv.grid_faces(dev)
    g = fv.face_conductance(faces, sigma, fixed)
    m = g > 0
    cur = g[m] * (V[faces.c[m]] - V[faces.n[m]])
    net = np.zeros(dev.n_cells)
    np.add.at(net, faces.c[m], cur)
    np.add.at(net, faces.n[m], -cur)
    free = (sigma > 0) & ~fixed
    mag = sol.current_density.magnitude().values.ravel()
    scale = np.nanmean(mag) * dev.h * dev.dz[0]
    assert np.max(np.abs(net[free])) / scale <= 1e-9


def test_linearity(r2_device):
    a = E.solve_potential(r2_device, E.drive(r2_device, 1.0), tol=1e-12)
    b = E.solve_potential(r2_device, E.drive(r2_device, 3.0), tol=1e-12)
    ja, jb = a.current_density.values, b.current_density.values
    fin = np.isfinite(ja)
    assert np.allclose(jb[fin], 3 * ja[fin], rtol=1e-7, atol=1e-9 * np.abs(jb[fin]).max())
    qa, qb = a.heat_density.values, b.heat_density.values
    assert np.allclose(qb, 9 * qa, rtol=1e-7, atol=1e-9 * qb.max())
    ca = E.current_density_stats(a, device_center(r2_device))
    cb = E.current_density_stats(b, device_center(r2_device))
    assert cb[0] == pytest.approx(3 * ca[0], rel=1e-7) and cb[1] == pytest.approx(3 * ca[1], rel=1e-7)


def test_resistance_convergence():
    err = []
    for h in (4 * UM, 2 * UM):
        sol = E.solve_potential(bar_device(h), {"bar.a": 1.0, "bar.b": 0.0}, tol=1e-12)
        err.append(abs(E.lumped_resistance(sol) - RS * L / W) / (RS * L / W))
    # the layered bar is resolved exactly, so both errors sit at round-off
    assert err[1] <= max(err[0] / 1.5, 1e-9)


def test_r1_nominal_current_density(table):
    dev = G.voxelize(G.preset_layouts("R1"), G.STACKS["poly_only"], 4 * UM, table)
    sol = E.solve_potential(dev, E.drive(dev, 10.0, resistor="R1"))
    j_nom = 10.0 / (RS * 4088 / 12) / (W * T) * 1e-9  # mA/um^2
    assert j_nom == pytest.approx(0.36, abs=0.01)
    at, _ = E.current_density_stats(sol, device_center(dev))
    assert at * 1e-9 == pytest.approx(j_nom, rel=0.1)


def test_drive_modes(composite_device):
    d = E.drive(composite_device, 5.0, "parallel")
    assert d == {"R1.a": 5.0, "R1.b": 0.0, "R2.a": 5.0, "R2.b": 0.0}
    assert E.drive(composite_device, 5.0, "single", "R1") == {"R1.a": 5.0, "R1.b": 0.0}
    with pytest.raises(ConfigError):
        E.drive(composite_device, 5.0, "series")
    with pytest.raises(ConfigError):
        E.drive(composite_device, 5.0, "single", "R9")
