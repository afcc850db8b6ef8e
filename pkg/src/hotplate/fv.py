"""Cell-centered finite-volume operator on a DeviceModel grid, plus PCG.

Both the electrical and the thermal problem are div(c grad u) = -s with a
per-cell coefficient c. Faces between two active cells get the series
(harmonic-mean) conductance; faces between an active cell and a fixed
(Dirichlet) cell treat the fixed cell as ideal, so the prescribed value sits
on the shared face.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, SingularSystemError

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class Faces:
    """All interior faces of the grid: owner cell, neighbour cell, area and
    the two centre-to-face distances."""
    c: np.ndarray
    n: np.ndarray
    area: np.ndarray
    dc: np.ndarray
    dn: np.ndarray
    axis: np.ndarray  # 0, 1, 2


def grid_faces(device) -> Faces:
    nx, ny, nz = device.shape
    h, dz = device.h, device.dz
    idx = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    dz3 = np.broadcast_to(dz[None, None, :], (nx, ny, nz))
    parts = []
    # x faces
    parts.append((idx[:-1], idx[1:], h * dz3[:-1], np.full(dz3[:-1].shape, h / 2),
                  np.full(dz3[:-1].shape, h / 2), 0))
    parts.append((idx[:, :-1], idx[:, 1:], h * dz3[:, :-1], np.full(dz3[:, :-1].shape, h / 2),
                  np.full(dz3[:, :-1].shape, h / 2), 1))
    parts.append((idx[:, :, :-1], idx[:, :, 1:], np.full(dz3[:, :, :-1].shape, h * h),
                  dz3[:, :, :-1] / 2, dz3[:, :, 1:] / 2, 2))
    c, n, area, dc, dn, ax = [], [], [], [], [], []
    for pc, pn, pa, pdc, pdn, a in parts:
        c.append(pc.ravel())
        n.append(pn.ravel())
        area.append(pa.ravel())
        dc.append(pdc.ravel())
        dn.append(pdn.ravel())
        ax.append(np.full(pc.size, a, dtype=np.int8))
    return Faces(*(np.concatenate(v) for v in (c, n, area, dc, dn, ax)))


def face_conductance(faces: Faces, coeff: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Conductance of every face; zero where either side is inactive or both are fixed."""
    kc, kn = coeff[faces.c], coeff[faces.n]
    fc, fn = fixed[faces.c], fixed[faces.n]
    g = np.zeros(faces.c.size)
    both = (kc > 0) & (kn > 0)
    with np.errstate(divide="ignore"):
        rc = np.where(fc, 0.0, faces.dc / np.where(kc > 0, kc, 1.0))
        rn = np.where(fn, 0.0, faces.dn / np.where(kn > 0, kn, 1.0))
    ok = both & ~(fc & fn)
    g[ok] = faces.area[ok] / (rc[ok] + rn[ok])
    return g


@dataclass(frozen=True)
class Robin:
    """Convective loss to `T_ref` on exposed faces, coefficients in W/(m^2 K)."""
    top: float = 0.0
    bottom: float = 0.0
    sides: float = 0.0
    T_ref: float = 300.0

    @property
    def active(self) -> bool:
        return self.top > 0 or self.bottom > 0 or self.sides > 0


def robin_terms(device, coeff: np.ndarray, fixed: np.ndarray, robin: Robin):
    """Per-cell diagonal conductance to the convective reference temperature."""
    nx, ny, nz = device.shape
    k = coeff.reshape(nx, ny, nz)
    act = (k > 0) & ~fixed.reshape(nx, ny, nz)
    h, dz = device.h, device.dz
    diag = np.zeros((nx, ny, nz))

    def exposed(axis, side):
        pad = [(0, 0)] * 3
        pad[axis] = (1, 0) if side < 0 else (0, 1)
        solid = np.pad(k > 0, pad, constant_values=False)
        sl = [slice(None)] * 3
        sl[axis] = slice(0, -1) if side < 0 else slice(1, None)
        return act & ~solid[tuple(sl)]

    dz3 = np.broadcast_to(dz[None, None, :], (nx, ny, nz))
    kk = np.where(k > 0, k, 1.0)
    for axis, side, coef in ((2, +1, robin.top), (2, -1, robin.bottom),
                             (0, -1, robin.sides), (0, +1, robin.sides),
                             (1, -1, robin.sides), (1, +1, robin.sides)):
        if coef <= 0:
            continue
        m = exposed(axis, side)
        if axis == 2:
            area, half = h * h, dz3 / 2
        else:
            area, half = h * dz3, np.full_like(dz3, h / 2)
        g = area / (1.0 / coef + half / kk)
        diag[m] += g[m]
    return diag.ravel()


@dataclass
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    unknowns: np.ndarray  # flat cell index of each unknown
    g: np.ndarray  # face conductances
    faces: Faces


def assemble(device, coeff: np.ndarray, fixed: np.ndarray, fixed_values: np.ndarray,
             source: np.ndarray | None = None, robin_diag: np.ndarray | None = None,
             robin_ref: float = 0.0, faces: Faces | None = None) -> LinearSystem:
    """Assemble A u = b over active, non-fixed cells.

    `coeff`, `fixed`, `fixed_values`, `source` (power per cell, W or A) are flat
    per-cell arrays.
    """
    faces = faces or grid_faces(device)
    g = face_conductance(faces, coeff, fixed)
    active = (coeff > 0) & ~fixed
    unknowns = np.flatnonzero(active)
    if unknowns.size == 0:
        raise SingularSystemError("no unknowns to solve for")
    pos = np.full(coeff.size, -1, dtype=np.int64)
    pos[unknowns] = np.arange(unknowns.size)

    diag = np.zeros(unknowns.size)
    b = np.zeros(unknowns.size)
    if source is not None:
        b += source[unknowns]
    if robin_diag is not None:
        diag += robin_diag[unknowns]
        b += robin_diag[unknowns] * robin_ref

    m = g > 0
    c, n, gm = faces.c[m], faces.n[m], g[m]
    pc, pn = pos[c], pos[n]
    # free-free couplings
    ff = (pc >= 0) & (pn >= 0)
    np.add.at(diag, pc[pc >= 0], gm[pc >= 0])
    np.add.at(diag, pn[pn >= 0], gm[pn >= 0])
    # free-fixed couplings move to the right-hand side
    cf = (pc >= 0) & (pn < 0)
    np.add.at(b, pc[cf], gm[cf] * fixed_values[n[cf]])
    fc = (pc < 0) & (pn >= 0)
    np.add.at(b, pn[fc], gm[fc] * fixed_values[c[fc]])

    rows = np.concatenate([np.arange(unknowns.size), pc[ff], pn[ff]])
    cols = np.concatenate([np.arange(unknowns.size), pn[ff], pc[ff]])
    vals = np.concatenate([diag, -gm[ff], -gm[ff]])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(unknowns.size, unknowns.size))
    A.sum_duplicates()
    return LinearSystem(A, b, unknowns, g, faces)


class _MatVec:
    def __init__(self, A: sp.csr_matrix, threads: int):
        self.A = A
        self.threads = max(1, int(threads))
        if self.threads > 1:
            bounds = np.linspace(0, A.shape[0], self.threads + 1).astype(int)
            self.blocks = [(a, b, A[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
            self.pool = ThreadPoolExecutor(self.threads)

    def __call__(self, p):
        if self.threads == 1:
            return self.A @ p
        out = np.empty(self.A.shape[0])

        def work(block):
            a, b, sub = block
            out[a:b] = sub @ p

        list(self.pool.map(work, self.blocks))
        return out

    def close(self):
        if self.threads > 1:
            self.pool.shutdown()


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # preconditioned relative residual


def pcg(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-9, maxiter: int | None = None,
        threads: int = 1, x0: np.ndarray | float | None = None) -> CGResult:
    """Conjugate gradients with a Jacobi preconditioner.

    Stops when sqrt(r.M^-1 r) <= tol * sqrt(b.M^-1 b). `threads` splits the
    matrix-vector product into row blocks; every row is evaluated the same way
    in either mode, so serial and threaded runs agree bit for bit.
    """
    n = b.size
    if maxiter is None:
        maxiter = max(10, int(50 * np.sqrt(n)))
    d = A.diagonal()
    if np.any(d <= 0):
        raise SingularSystemError("operator has a non-positive diagonal entry")
    minv = 1.0 / d
    ref = np.sqrt(b @ (minv * b))
    if ref == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    x = np.zeros(n) if x0 is None else np.broadcast_to(np.asarray(x0, dtype=float), (n,)).copy()
    matvec = _MatVec(A, threads)
    try:
        r = b - matvec(x) if x0 is not None else b.copy()
        z = minv * r
        rz = r @ z
        p = z.copy()
        it = 0
        while np.sqrt(max(rz, 0.0)) > tol * ref:
            if it >= maxiter:
                raise ConvergenceError(
                    f"CG did not converge in {maxiter} iterations "
                    f"(relative residual {np.sqrt(rz) / ref:.3e})")
            q = matvec(p)
            pq = p @ q
            if pq <= 0:
                raise SingularSystemError("operator is not positive definite")
            alpha = rz / pq
            x += alpha * p
            r -= alpha * q
            z = minv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
            it += 1
    finally:
        matvec.close()
    return CGResult(x, it, float(np.sqrt(max(rz, 0.0)) / ref))
