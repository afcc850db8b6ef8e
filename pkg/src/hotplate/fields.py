"""Grid-aligned fields and their file formats.

Formats:

* CSV: optional ``#`` provenance line, header ``x_um,y_um,z_um,<name>``, one
  row per cell where the field is defined (vector fields write one column
  per component).
* Rectilinear grid: legacy VTK ASCII ``RECTILINEAR_GRID`` with cell data; the
  title line carries the provenance string. Undefined cells are written as
  ``nan``.
* SVG heatmap of one z-slice.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .materials import UM

# fixed colour ramp for heatmaps, cold to hot
RAMP = ((0.0, (0, 0, 4)), (0.25, (87, 16, 110)), (0.5, (188, 55, 84)),
        (0.75, (249, 142, 9)), (1.0, (252, 255, 164)))
VOID_COLOR = "#d9d9d9"


@dataclass(frozen=True)
class Grid:
    """Rectilinear cell grid: uniform lateral spacing, arbitrary z faces."""
    h: float
    origin: tuple[float, float]
    z_faces: np.ndarray
    shape: tuple[int, int, int]

    @classmethod
    def of(cls, device) -> Grid:
        return cls(device.h, tuple(device.origin), np.asarray(device.z_faces), tuple(device.shape))

    def x_faces(self):
        return self.origin[0] + np.arange(self.shape[0] + 1) * self.h

    def y_faces(self):
        return self.origin[1] + np.arange(self.shape[1] + 1) * self.h

    def centers(self):
        xf, yf, zf = self.x_faces(), self.y_faces(), self.z_faces
        return 0.5 * (xf[1:] + xf[:-1]), 0.5 * (yf[1:] + yf[:-1]), 0.5 * (zf[1:] + zf[:-1])

    def locate(self, point) -> tuple[int, int, int]:
        """Index of the cell containing `point`; ValueError when outside."""
        x, y, z = point
        xf, yf, zf = self.x_faces(), self.y_faces(), self.z_faces
        if not (xf[0] <= x <= xf[-1] and yf[0] <= y <= yf[-1] and zf[0] <= z <= zf[-1]):
            raise ValueError(f"point {point} is outside the grid")
        i = min(int(np.searchsorted(xf, x, side="right")) - 1, self.shape[0] - 1)
        j = min(int(np.searchsorted(yf, y, side="right")) - 1, self.shape[1] - 1)
        k = min(int(np.searchsorted(zf, z, side="right")) - 1, self.shape[2] - 1)
        return i, j, k


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray  # shape == grid.shape, nan where undefined
    name: str
    unit: str

    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def max(self) -> float:
        return float(np.nanmax(self.values))

    def min(self) -> float:
        return float(np.nanmin(self.values))

    def argmax_point(self) -> tuple[float, float, float]:
        i, j, k = np.unravel_index(np.nanargmax(self.values), self.values.shape)
        xs, ys, zs = self.grid.centers()
        return float(xs[i]), float(ys[j]), float(zs[k])


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    values: np.ndarray  # shape grid.shape + (3,)
    name: str
    unit: str

    def magnitude(self) -> ScalarField:
        return ScalarField(self.grid, np.linalg.norm(self.values, axis=-1),
                           f"|{self.name}|", self.unit)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(field, path, provenance: str | None = None):
    xs, ys, zs = field.grid.centers()
    vec = isinstance(field, VectorField)
    vals = field.values
    mask = np.all(np.isfinite(vals), axis=-1) if vec else np.isfinite(vals)
    cols = [f"{field.name}_{a}" for a in "xyz"] if vec else [field.name]
    with open(path, "w", newline="") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        fh.write(f"# unit={field.unit}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_um", "y_um", "z_um", *cols])
        for i, j, k in zip(*np.nonzero(mask)):
            row = vals[i, j, k]
            row = [_fmt(v) for v in row] if vec else [_fmt(row)]
            w.writerow([_fmt(xs[i] / UM), _fmt(ys[j] / UM), _fmt(zs[k] / UM), *row])


def read_csv(path):
    """Read a field CSV back as (coords_um (n, 3), values (n,) or (n, 3), header)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(io.StringIO("".join(lines)))
    header = next(reader)
    rows = np.array([[float(v) for v in r] for r in reader if r], dtype=float).reshape(-1, len(header))
    coords = rows[:, :3]
    values = rows[:, 3] if len(header) == 4 else rows[:, 3:]
    return coords, values, header


def write_vtk(field, path, provenance: str | None = None):
    g = field.grid
    nx, ny, nz = g.shape
    title = (provenance or "hotplate field").replace("\n", " ")[:255]
    vec = isinstance(field, VectorField)
    out = io.StringIO()
    out.write("# vtk DataFile Version 3.0\n")
    out.write(title + "\n")
    out.write("ASCII\nDATASET RECTILINEAR_GRID\n")
    out.write(f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}\n")
    for axis, faces in (("X", g.x_faces()), ("Y", g.y_faces()), ("Z", g.z_faces)):
        out.write(f"{axis}_COORDINATES {len(faces)} double\n")
        out.write(" ".join(_fmt(v) for v in faces) + "\n")
    out.write(f"CELL_DATA {nx * ny * nz}\n")
    name = field.name.replace(" ", "_")
    # VTK orders cells with x fastest
    if vec:
        out.write(f"VECTORS {name} double\n")
        data = field.values.transpose(2, 1, 0, 3).reshape(-1, 3)
        for row in data:
            out.write(" ".join(_fmt(v) for v in row) + "\n")
    else:
        out.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        data = field.values.transpose(2, 1, 0).ravel()
        for v in data:
            out.write(_fmt(v) + "\n")
    with open(path, "w") as fh:
        fh.write(out.getvalue())


def read_vtk(path, unit: str = ""):
    """Inverse of :func:`write_vtk` for the files this package writes."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    it = iter(lines)
    next(it)
    next(it)
    if next(it).strip() != "ASCII" or next(it).strip() != "DATASET RECTILINEAR_GRID":
        raise ValueError("not an ASCII rectilinear grid file")
    dims = [int(v) for v in next(it).split()[1:]]
    coords = []
    for _ in range(3):
        next(it)
        coords.append(np.array([float(v) for v in next(it).split()]))
    ncell = int(next(it).split()[1])
    kind, name = next(it).split()[:2]
    nx, ny, nz = dims[0] - 1, dims[1] - 1, dims[2] - 1
    hs = np.diff(coords[0])
    grid = Grid(float(hs[0]), (float(coords[0][0]), float(coords[1][0])), coords[2], (nx, ny, nz))
    if kind == "SCALARS":
        next(it)
        data = np.array([float(next(it)) for _ in range(ncell)])
        return ScalarField(grid, data.reshape(nz, ny, nx).transpose(2, 1, 0).copy(), name, unit)
    data = np.array([[float(v) for v in next(it).split()] for _ in range(ncell)])
    return VectorField(grid, data.reshape(nz, ny, nx, 3).transpose(2, 1, 0, 3).copy(), name, unit)


def ramp_color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(RAMP[:-1], RAMP[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = [round(a + f * (b - a)) for a, b in zip(c0, c1)]
            return "#%02x%02x%02x" % tuple(rgb)
    return "#%02x%02x%02x" % RAMP[-1][1]


def svg_heatmap(field: ScalarField, k: int, title: str = "", px: float = 4.0,
                provenance: str | None = None) -> str:
    """One z-slice as an SVG heatmap with min/max and units as text elements."""
    sl = field.values[:, :, k]
    nx, ny = sl.shape
    finite = sl[np.isfinite(sl)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 0.0)
    span = hi - lo if hi > lo else 1.0
    width, height = nx * px, ny * px
    foot = 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height + foot:g}" '
             f'viewBox="0 0 {width:g} {height + foot:g}">']
    if provenance:
        parts.append(f"<!-- {provenance.replace('--', '-')} -->")
    for j in range(ny):
        y = (ny - 1 - j) * px  # y up
        for i in range(nx):
            v = sl[i, j]
            color = ramp_color((v - lo) / span) if np.isfinite(v) else VOID_COLOR
            parts.append(f'<rect x="{i * px:g}" y="{y:g}" width="{px:g}" height="{px:g}" fill="{color}"/>')
    z_um = 0.5 * (field.grid.z_faces[k] + field.grid.z_faces[k + 1]) / UM
    label = title or field.name
    parts.append(f'<text x="2" y="{height + 14:g}" font-size="11" font-family="monospace">'
                 f'{label} z={z_um:.3f} um</text>')
    parts.append(f'<text x="2" y="{height + 30:g}" font-size="11" font-family="monospace" '
                 f'class="range">min={lo:.6g} {field.unit} max={hi:.6g} {field.unit}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
