"""Serpentine heater layouts, layer stacks and voxelization.

Layouts are built from axis-aligned centerline segments with square elbows.
A serpentine runs its legs along x and steps in +y between legs; the dual
(bifilar) arrangement runs two traces side by side along the same meander so
that their legs alternate in y and neither trace has to cross the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ConnectivityError, GeometryError, OverlapError, ResolutionError
from .materials import UM, Material, MaterialTable

Rect = tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
Segment = tuple[float, float, float, float]  # x0, y0, x1, y1

_EPS = 1e-12


@dataclass(frozen=True)
class SerpentineSpec:
    leg_length: float
    leg_count: int
    trace_width: float
    pitch: float
    trace_thickness: float = 0.3 * UM
    pad_size: float = 40 * UM
    stub_length: float = 24 * UM

    def __post_init__(self):
        if int(self.leg_count) != self.leg_count or self.leg_count < 1:
            raise GeometryError("leg_count must be an integer >= 1")
        for name in ("leg_length", "trace_width", "pitch", "trace_thickness", "pad_size"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.stub_length < 0:
            raise GeometryError("stub_length must be non-negative")


def serpentine_length(spec: SerpentineSpec) -> float:
    """Closed-form centerline length of a single serpentine."""
    n = spec.leg_count
    return n * spec.leg_length + (n - 1) * spec.pitch + 2 * spec.stub_length


def leg_length_for(total: float, leg_count: int, pitch: float, stub_length: float) -> float:
    """Leg length giving a single serpentine of centerline length `total`."""
    ell = (total - (leg_count - 1) * pitch - 2 * stub_length) / leg_count
    if ell <= 0:
        raise GeometryError("path length too short for the requested leg count and pitch")
    return ell


@dataclass(frozen=True)
class HeaterLayout:
    name: str
    centerline: tuple[Segment, ...]
    width: float
    thickness: float
    pads: tuple[Rect, Rect]

    def trace_rects(self) -> list[Rect]:
        """Footprint rectangles of the centerline segments (square elbows and ends)."""
        hw = self.width / 2
        out = []
        for x0, y0, x1, y1 in self.centerline:
            out.append((min(x0, x1) - hw, min(y0, y1) - hw, max(x0, x1) + hw, max(y0, y1) + hw))
        return out

    def bbox(self) -> Rect:
        rects = self.trace_rects() + list(self.pads)
        return (min(r[0] for r in rects), min(r[1] for r in rects),
                max(r[2] for r in rects), max(r[3] for r in rects))

    def meander_bbox(self) -> Rect:
        """Bounding box of the trace without pads and pad stubs."""
        rects = self.trace_rects()[1:-1] or self.trace_rects()
        return (min(r[0] for r in rects), min(r[1] for r in rects),
                max(r[2] for r in rects), max(r[3] for r in rects))


def total_path_length(layout: HeaterLayout) -> float:
    return float(sum(abs(x1 - x0) + abs(y1 - y0) for x0, y0, x1, y1 in layout.centerline))


def _overlap(a: Rect, b: Rect) -> bool:
    return (min(a[2], b[2]) - max(a[0], b[0]) > _EPS) and (min(a[3], b[3]) - max(a[1], b[1]) > _EPS)


def _meander(spec: SerpentineSpec, offset: float, stubs: tuple[float, float],
             name: str, pad_side: int) -> HeaterLayout:
    # offset > 0 shifts the trace to the left of the direction of travel
    n, ell, p = spec.leg_count, spec.leg_length, spec.pitch
    direction = [1 if k % 2 == 0 else -1 for k in range(n)]
    ys = [k * p + offset * direction[k] for k in range(n)]

    pts = [(-stubs[0], ys[0])]
    for k in range(n - 1):
        x_turn = ell if direction[k] > 0 else 0.0
        xc = x_turn - offset
        pts.append((xc, ys[k]))
        pts.append((xc, ys[k + 1]))
    last = n - 1
    x_end = ell + stubs[1] if direction[last] > 0 else -stubs[1]
    pts.append((x_end, ys[last]))
    segs = tuple((a[0], a[1], b[0], b[1]) for a, b in zip(pts[:-1], pts[1:])
                 if abs(b[0] - a[0]) + abs(b[1] - a[1]) > 0)

    ps, hw = spec.pad_size, spec.trace_width / 2

    def pad_at(x, y, outward_x, side):
        xa, xb = sorted((x, x + outward_x * ps))
        if side == 0:
            ya, yb = y - ps / 2, y + ps / 2
        elif side > 0:
            ya, yb = y - hw, y - hw + ps
        else:
            ya, yb = y + hw - ps, y + hw
        return (xa, ya, xb, yb)

    side_start = pad_side * (1 if direction[0] > 0 else -1)
    side_end = pad_side * (1 if direction[last] > 0 else -1)
    pads = (pad_at(pts[0][0], pts[0][1], -1, side_start),
            pad_at(pts[-1][0], pts[-1][1], direction[last], side_end))
    return HeaterLayout(name, segs, spec.trace_width, spec.trace_thickness, pads)


def _check_self(layouts: Sequence[HeaterLayout]):
    items = []
    for li, lay in enumerate(layouts):
        rects = lay.trace_rects()
        for ri, r in enumerate(rects):
            items.append((li, ri, r))
        items.append((li, -1, lay.pads[0]))
        items.append((li, len(rects), lay.pads[1]))
    for a in range(len(items)):
        la, ra, rect_a = items[a]
        for b in range(a + 1, len(items)):
            lb, rb, rect_b = items[b]
            if la == lb and abs(ra - rb) <= 1:
                continue  # consecutive pieces share an elbow
            if _overlap(rect_a, rect_b):
                who = layouts[la].name if la == lb else f"{layouts[la].name}/{layouts[lb].name}"
                raise OverlapError(f"layout {who}: trace footprint overlaps itself")


def build_serpentine(spec: SerpentineSpec, name: str = "R1") -> HeaterLayout:
    if spec.pitch < spec.trace_width:
        raise OverlapError(f"pitch {spec.pitch:g} m is smaller than trace width {spec.trace_width:g} m")
    layout = _meander(spec, 0.0, (spec.stub_length, spec.stub_length), name, pad_side=0)
    _check_self([layout])
    return layout


def build_dual_serpentine(spec: SerpentineSpec, names: tuple[str, str] = ("R1", "R2"),
                          second_stub: float | None = None) -> tuple[HeaterLayout, HeaterLayout]:
    """Two interleaved serpentines sharing one meander.

    Legs of the two traces sit pitch/2 apart, so the minimum gap is
    pitch/2 - trace_width. `second_stub` lets the second trace use shorter or
    longer pad stubs than the first, which is how unequal path lengths are
    obtained.
    """
    if spec.pitch < 2 * spec.trace_width:
        raise OverlapError("dual serpentine needs pitch >= 2 * trace_width")
    d = spec.pitch / 4
    s2 = spec.stub_length if second_stub is None else second_stub
    a = _meander(spec, +d, (spec.stub_length, spec.stub_length), names[0], pad_side=+1)
    b = _meander(spec, -d, (s2, s2), names[1], pad_side=-1)
    _check_self([a, b])
    return a, b


def min_gap(a: HeaterLayout, b: HeaterLayout) -> float:
    """Smallest edge-to-edge distance between two layouts' trace footprints."""
    best = np.inf
    for ra in a.trace_rects() + list(a.pads):
        for rb in b.trace_rects() + list(b.pads):
            dx = max(rb[0] - ra[2], ra[0] - rb[2], 0.0)
            dy = max(rb[1] - ra[3], ra[1] - rb[3], 0.0)
            best = min(best, float(np.hypot(dx, dy)))
    return best


# Presets. Only L, w and t of the target heaters are known; leg count and pitch are
# free, so 13 legs at 24 um pitch are used with the leg length solved from L.
HEATER_LENGTHS = {"R1": 4088 * UM, "R2": 3993 * UM}
PRESET_LEGS = 13
PRESET_PITCH = 24 * UM
PRESET_WIDTH = 12 * UM
PRESET_STUB = 24 * UM
DUAL_PITCH = 48 * UM
DUAL_STUB_B = 30 * UM


def preset_spec(name: str) -> SerpentineSpec:
    if name not in HEATER_LENGTHS:
        raise ConfigError(f"unknown geometry preset {name!r} (known: R1, R2, R1R2)")
    ell = leg_length_for(HEATER_LENGTHS[name], PRESET_LEGS, PRESET_PITCH, PRESET_STUB)
    return SerpentineSpec(ell, PRESET_LEGS, PRESET_WIDTH, PRESET_PITCH, stub_length=PRESET_STUB)


def dual_preset_spec() -> tuple[SerpentineSpec, float]:
    """Spec and second-trace stub for the interleaved R1/R2 pair.

    Both traces share leg geometry; the path-length difference between R1 and
    R2 goes into the pad stubs.
    """
    # path length of each trace is n*ell + (n-1)*pitch + 2*stub
    s_b = DUAL_STUB_B
    s_a = s_b + (HEATER_LENGTHS["R1"] - HEATER_LENGTHS["R2"]) / 2
    ell = leg_length_for(HEATER_LENGTHS["R1"], PRESET_LEGS, DUAL_PITCH, s_a)
    return SerpentineSpec(ell, PRESET_LEGS, PRESET_WIDTH, DUAL_PITCH, stub_length=s_a), s_b


def preset_layouts(name: str) -> list[HeaterLayout]:
    if name == "R1R2":
        spec, s_b = dual_preset_spec()
        return list(build_dual_serpentine(spec, second_stub=s_b))
    return [build_serpentine(preset_spec(name), name)]


def straight_bar(length: float, width: float, thickness: float = 0.3 * UM,
                 pad_size: float | None = None, name: str = "bar", y: float = 0.0) -> HeaterLayout:
    """A single straight trace with square pads flush at both ends.

    Pads default to the trace width so the bar has a uniform cross-section.
    """
    ps = width if pad_size is None else pad_size
    seg = ((0.0, y, length, y),)
    pads = ((-ps, y - ps / 2, 0.0, y + ps / 2), (length, y - ps / 2, length + ps, y + ps / 2))
    # a bare bar has no elbows; its footprint is exactly length x width
    return _Bar(name, seg, width, thickness, pads)


class _Bar(HeaterLayout):
    def trace_rects(self):
        hw = self.width / 2
        (x0, y0, x1, y1), = self.centerline
        return [(min(x0, x1), y0 - hw, max(x0, x1), y0 + hw)]


@dataclass(frozen=True)
class LayerStack:
    layers: tuple[tuple[str, float], ...]  # (material, thickness m), bottom to top

    def __post_init__(self):
        if not self.layers:
            raise GeometryError("layer stack is empty")
        for mat, t in self.layers:
            if not t > 0:
                raise GeometryError(f"layer {mat}: thickness must be positive")

    def validate(self, table: MaterialTable):
        for mat, _ in self.layers:
            table.lookup(mat)


STACKS = {
    "poly_only": LayerStack((("PolySi", 0.3 * UM),)),
    "composite": LayerStack((("PolySi", 0.3 * UM), ("SiO2", 0.6 * UM), ("Al", 1.5 * UM))),
}


@dataclass(frozen=True)
class ThermalBC:
    kind: str  # "fixed" | "adiabatic"
    value: float  # K
    cells: np.ndarray  # flat indices


@dataclass(frozen=True)
class VoxelOptions:
    z_refine: int = 1
    plate: str = "full"  # Al extent: "full" (whole footprint incl. pads) or "meander"
    gap_fill: str | None = None  # material in the heater layer between traces
    substrate: bool = False  # add a Si layer under the stack with a fixed bottom face
    T_amb: float = 300.0
    margin: float = 0.0


@dataclass(frozen=True)
class DeviceModel:
    """Structured voxel grid with materials, electrodes and thermal BCs.

    Cell (i, j, k) spans x0 + [i, i+1]*h, y0 + [j, j+1]*h, z_faces[k:k+2].
    Flat indices use C order over (nx, ny, nz).
    """
    h: float
    origin: tuple[float, float]
    z_faces: np.ndarray
    material_index: np.ndarray  # (nx, ny, nz), 0 = void
    materials: tuple[Material, ...]  # materials[m - 1] for index m
    electrodes: Mapping[str, np.ndarray]
    thermal_bcs: Mapping[str, ThermalBC]
    owner: np.ndarray  # (nx, ny, nz) layout index of conductor cells, -1 elsewhere
    pad_mask: np.ndarray
    layout_names: tuple[str, ...]
    heater_layer: int  # z index range start of the patterned layer
    heater_layer_stop: int
    footprint_center: tuple[float, float]
    layer_names: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.material_index.shape

    @property
    def n_cells(self) -> int:
        return self.material_index.size

    @property
    def dz(self) -> np.ndarray:
        return np.diff(self.z_faces)

    def centers(self):
        nx, ny, _ = self.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.h
        zs = 0.5 * (self.z_faces[:-1] + self.z_faces[1:])
        return xs, ys, zs

    def cell_volumes(self) -> np.ndarray:
        nx, ny, _ = self.shape
        return np.broadcast_to(self.h * self.h * self.dz[None, None, :], self.shape)

    def property_array(self, attr: str) -> np.ndarray:
        """Per-cell material property (0 for void and for missing properties)."""
        lut = np.zeros(len(self.materials) + 1)
        for m, mat in enumerate(self.materials, start=1):
            v = getattr(mat, attr)
            lut[m] = 0.0 if v is None else v
        return lut[self.material_index]

    @property
    def conductor_mask(self) -> np.ndarray:
        return self.property_array("sigma") > 0

    @property
    def solid_mask(self) -> np.ndarray:
        return self.material_index > 0

    def material_name(self, m: int) -> str:
        return "void" if m == 0 else self.materials[m - 1].name

    def heater_mid_z(self) -> float:
        return 0.5 * (self.z_faces[self.heater_layer] + self.z_faces[self.heater_layer_stop])

    def conductor_volume(self, include_pads: bool = False) -> float:
        mask = self.conductor_mask if include_pads else self.conductor_mask & ~self.pad_mask
        return float(self.cell_volumes()[mask].sum())

    def electrodes_of(self, layout: str) -> list[str]:
        return [e for e in self.electrodes if e.rsplit(".", 1)[0] == layout]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def _cell_mask(rect: Rect, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    # half-open on cell centers so touching rectangles never share a cell
    mx = (xs >= rect[0] - _EPS) & (xs < rect[2] - _EPS)
    my = (ys >= rect[1] - _EPS) & (ys < rect[3] - _EPS)
    return mx[:, None] & my[None, :]


def voxelize(layouts: Sequence[HeaterLayout], stack: LayerStack, h: float,
             table: MaterialTable, options: VoxelOptions | None = None) -> DeviceModel:
    """Rasterize layouts into the patterned layer of `stack`.

    The first conductor layer of the stack carries the traces and pads; every
    other layer fills the whole footprint. With ``plate="meander"`` the Al
    plate is clipped to the meander so the pads stay uncovered.
    """
    opts = options or VoxelOptions()
    if not layouts:
        raise GeometryError("nothing to voxelize")
    w_min = min(lay.width for lay in layouts)
    if h > w_min / 3 * (1 + 1e-9):
        raise ResolutionError(f"grid spacing {h:g} m is coarser than trace_width/3 = {w_min / 3:g} m")
    names = [lay.name for lay in layouts]
    if len(set(names)) != len(names):
        raise GeometryError("layout names must be unique")
    stack.validate(table)

    layers = list(stack.layers)
    if opts.substrate:
        layers.insert(0, ("Si", 2.0 * UM))
    heater_layers = [i for i, (m, _) in enumerate(layers) if table.lookup(m).is_conductor]
    if not heater_layers:
        raise GeometryError("stack has no conductor layer for the heater")
    heater_li = heater_layers[0]

    boxes = [lay.bbox() for lay in layouts]
    xmin = min(b[0] for b in boxes) - opts.margin
    ymin = min(b[1] for b in boxes) - opts.margin
    xmax = max(b[2] for b in boxes) + opts.margin
    ymax = max(b[3] for b in boxes) + opts.margin
    nx = int(np.ceil((xmax - xmin) / h - 1e-9))
    ny = int(np.ceil((ymax - ymin) / h - 1e-9))
    xs = xmin + (np.arange(nx) + 0.5) * h
    ys = ymin + (np.arange(ny) + 0.5) * h

    z_faces = [0.0]
    layer_of_z = []
    for li, (_, t) in enumerate(layers):
        for _ in range(opts.z_refine):
            z_faces.append(z_faces[-1] + t / opts.z_refine)
            layer_of_z.append(li)
    z_faces = np.array(z_faces)
    nz = len(layer_of_z)

    mats: list[Material] = []

    def mat_id(name: str) -> int:
        mat = table.lookup(name)
        for i, m in enumerate(mats):
            if m.name == name:
                return i + 1
        mats.append(mat)
        return len(mats)

    trace2d = np.full((nx, ny), -1, dtype=np.int64)
    pad2d = np.zeros((nx, ny), dtype=bool)
    pads2d: dict[str, np.ndarray] = {}
    for li, lay in enumerate(layouts):
        m = np.zeros((nx, ny), dtype=bool)
        for r in lay.trace_rects():
            m |= _cell_mask(r, xs, ys)
        for pi, r in enumerate(lay.pads):
            pm = _cell_mask(r, xs, ys)
            if not pm.any():
                raise ResolutionError(f"pad {lay.name} {pi} covers no cell")
            pads2d[f"{lay.name}.{'ab'[pi]}"] = pm
            m |= pm
            pad2d |= pm
        if (trace2d[m] >= 0).any():
            raise OverlapError(f"layout {lay.name} shares voxels with another layout")
        trace2d[m] = li

    meander = [lay.meander_bbox() for lay in layouts]
    plate_rect = (min(b[0] for b in meander), min(b[1] for b in meander),
                  max(b[2] for b in meander), max(b[3] for b in meander))
    plate2d = _cell_mask(plate_rect, xs, ys)

    mat_index = np.zeros((nx, ny, nz), dtype=np.int32)
    owner = np.full((nx, ny, nz), -1, dtype=np.int64)
    pad_mask = np.zeros((nx, ny, nz), dtype=bool)
    heater_z = [k for k in range(nz) if layer_of_z[k] == heater_li]
    for k in range(nz):
        li = layer_of_z[k]
        name = layers[li][0]
        if li == heater_li:
            mat_index[:, :, k] = np.where(trace2d >= 0, mat_id(name), 0)
            if opts.gap_fill:
                mat_index[:, :, k][trace2d < 0] = mat_id(opts.gap_fill)
            owner[:, :, k] = trace2d
            pad_mask[:, :, k] = pad2d
        elif name == "Al" and opts.plate == "meander":
            mat_index[:, :, k] = np.where(plate2d, mat_id(name), 0)
        else:
            mat_index[:, :, k] = mat_id(name)

    def flat(mask3):
        return _frozen(np.flatnonzero(mask3.ravel()))

    electrodes = {}
    for key, pm in pads2d.items():
        m3 = np.zeros((nx, ny, nz), dtype=bool)
        m3[:, :, heater_z] = pm[:, :, None]
        electrodes[key] = flat(m3)

    bcs = {}
    pad3 = np.zeros((nx, ny, nz), dtype=bool)
    pad3[:, :, heater_z] = pad2d[:, :, None]
    bcs["pads"] = ThermalBC("fixed", opts.T_amb, flat(pad3))
    if opts.substrate:
        sub = np.zeros((nx, ny, nz), dtype=bool)
        sub[:, :, 0] = True
        bcs["substrate"] = ThermalBC("fixed", opts.T_amb, flat(sub))

    cx = 0.5 * (plate_rect[0] + plate_rect[2])
    cy = 0.5 * (plate_rect[1] + plate_rect[3])
    device = DeviceModel(
        h=h, origin=(xmin, ymin), z_faces=_frozen(z_faces),
        material_index=_frozen(mat_index), materials=tuple(mats),
        electrodes=MappingProxyType(electrodes), thermal_bcs=MappingProxyType(bcs),
        owner=_frozen(owner), pad_mask=_frozen(pad_mask), layout_names=tuple(names),
        heater_layer=heater_z[0], heater_layer_stop=heater_z[-1] + 1,
        footprint_center=(cx, cy), layer_names=tuple(layers[li][0] for li in layer_of_z),
    )
    check_connectivity(device)
    return device


def check_connectivity(device: DeviceModel):
    """Every conductor cell must reach an electrode of its own layout, both
    pads of a layout must be joined, and no two layouts may touch."""
    cond = device.conductor_mask
    labels, n = ndimage.label(cond)
    flat_labels = labels.ravel()
    owner = device.owner.ravel()
    comp_owner: dict[int, set[int]] = {}
    for c, o in zip(flat_labels[cond.ravel()], owner[cond.ravel()]):
        comp_owner.setdefault(int(c), set()).add(int(o))
    for c, owners in comp_owner.items():
        if len(owners) > 1:
            who = ", ".join(device.layout_names[o] if o >= 0 else "fill" for o in sorted(owners))
            raise ConnectivityError(f"conductor regions of {who} touch (shorted layouts)")
    reached = set()
    for name, cells in device.electrodes.items():
        comps = set(flat_labels[cells].tolist())
        reached |= comps
    for c in range(1, n + 1):
        if c not in reached:
            raise ConnectivityError("conductor region not connected to any electrode")
    for li, lname in enumerate(device.layout_names):
        comps = [set(flat_labels[device.electrodes[e]].tolist()) for e in device.electrodes_of(lname)]
        if len(comps) == 2 and comps[0] != comps[1]:
            raise ConnectivityError(f"layout {lname}: pads are not connected (open trace)")


def voxel_rows(device: DeviceModel):
    """(x_um, y_um, z_um, material) for every solid cell."""
    xs, ys, zs = device.centers()
    idx = device.material_index
    for i, j, k in zip(*np.nonzero(idx)):
        yield (xs[i] / UM, ys[j] / UM, zs[k] / UM, device.material_name(int(idx[i, j, k])))
