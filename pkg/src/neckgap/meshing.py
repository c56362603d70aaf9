"""Boundary-fitted simplicial meshes on chart domains.

Tube domains are meshed with a structured column layout graded toward the
neck: both the column spacing and the vertical subdivision scale with the
local slice half-width, so element aspect ratios stay bounded while the
narrow part of the domain is resolved with a fixed number of layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .errors import MeshTooCoarse, QualityFailure

MIN_ANGLE_DEG = 20.0
MAX_RADIUS_EDGE = 2.0


@dataclass
class Mesh:
    points: np.ndarray           # (nv, d) chart coordinates
    simplices: np.ndarray        # (ne, d+1) vertex indices, positively oriented
    boundary: np.ndarray         # (nv,) bool, Dirichlet vertices
    h: float                     # target edge length at the narrowest slice
    column_x: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def num_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def num_simplices(self) -> int:
        return self.simplices.shape[0]

    def volumes(self) -> np.ndarray:
        """Signed simplex volumes (positive for valid orientation)."""
        p = self.points[self.simplices]
        edges = p[:, 1:, :] - p[:, :1, :]
        fact = 1.0
        for k in range(2, self.dim + 1):
            fact *= k
        return np.linalg.det(edges) / fact

    def min_angle(self) -> float:
        """Smallest interior angle in degrees (2D meshes)."""
        if self.dim != 2:
            raise ValueError("min_angle is a 2D quality measure")
        p = self.points[self.simplices]
        angles = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            cosang = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))

    def radius_edge(self) -> float:
        """Largest circumradius / shortest-edge ratio (3D meshes)."""
        if self.dim != 3:
            raise ValueError("radius_edge is a 3D quality measure")
        p = self.points[self.simplices]
        a, b, c, d = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
        # circumcenter from |x-a|^2 = |x-v|^2 for v in {b,c,d}
        A = np.stack([b - a, c - a, d - a], axis=1)
        rhs = 0.5 * np.stack([
            np.einsum("ij,ij->i", b - a, b - a),
            np.einsum("ij,ij->i", c - a, c - a),
            np.einsum("ij,ij->i", d - a, d - a),
        ], axis=1)
        center = a + np.linalg.solve(A, rhs[..., None])[..., 0]
        R = np.linalg.norm(center - a, axis=1)
        pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
        emin = np.min([np.linalg.norm(p[:, i] - p[:, j], axis=1)
                       for i, j in pairs], axis=0)
        return float(np.max(R / emin))

    def check_quality(self) -> None:
        vols = self.volumes()
        if vols.min() <= 0:
            raise QualityFailure(f"inverted simplex, min volume {vols.min():.3e}")
        if self.dim == 2:
            ang = self.min_angle()
            if ang < MIN_ANGLE_DEG:
                raise QualityFailure(f"min angle {ang:.2f} deg < {MIN_ANGLE_DEG}")
        else:
            re = self.radius_edge()
            if re > MAX_RADIUS_EDGE:
                raise QualityFailure(f"radius-edge {re:.2f} > {MAX_RADIUS_EDGE}")


def _grid_triangles(n_cols: int, n_rows: int) -> np.ndarray:
    """Triangulate an (n_cols x n_rows) vertex lattice, index i*n_rows + j."""
    tris = []
    for i in range(n_cols - 1):
        for j in range(n_rows - 1):
            v00 = i * n_rows + j
            v01 = v00 + 1
            v10 = v00 + n_rows
            v11 = v10 + 1
            # alternate the diagonal for an unbiased pattern
            if (i + j) % 2 == 0:
                tris.append([v00, v10, v11])
                tris.append([v00, v11, v01])
            else:
                tris.append([v00, v10, v01])
                tris.append([v10, v11, v01])
    return np.array(tris, dtype=np.int64)


def _orient(points: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    p = points[simplices]
    edges = p[:, 1:, :] - p[:, :1, :]
    flip = np.linalg.det(edges) < 0
    out = simplices.copy()
    out[flip, -2], out[flip, -1] = simplices[flip, -1], simplices[flip, -2]
    return out


def rectangle_mesh(a: float, b: float, h: float) -> Mesh:
    """Uniform triangulation of [0,a] x [0,b]."""
    nx = max(2, int(round(a / h)))
    ny = max(2, int(round(b / h)))
    xs = np.linspace(0, a, nx + 1)
    ys = np.linspace(0, b, ny + 1)
    pts = np.array([[x, y] for x in xs for y in ys])
    tris = _orient(pts, _grid_triangles(nx + 1, ny + 1))
    bd = ((np.isclose(pts[:, 0], 0)) | (np.isclose(pts[:, 0], a))
          | (np.isclose(pts[:, 1], 0)) | (np.isclose(pts[:, 1], b)))
    mesh = Mesh(pts, tris, bd, h)
    mesh.check_quality()
    return mesh


def disk_mesh(h: float, radius: float = 1.0) -> Mesh:
    """Unit-disk triangulation from concentric hexagonal rings."""
    n_r = max(3, int(round(radius / h)))
    pts = [(0.0, 0.0)]
    ring_of = [0]
    for k in range(1, n_r + 1):
        r_k = radius * k / n_r
        m_k = 6 * k
        th = 2 * np.pi * np.arange(m_k) / m_k + (np.pi / m_k) * (k % 2)
        pts.extend(zip(r_k * np.cos(th), r_k * np.sin(th)))
        ring_of.extend([k] * m_k)
    pts = np.array(pts)
    tris = Delaunay(pts).simplices.astype(np.int64)
    # drop slivers hugging the boundary chords
    keep = []
    ring_of = np.array(ring_of)
    for t in tris:
        if np.all(ring_of[t] == n_r):
            continue
        keep.append(t)
    tris = _orient(pts, np.array(keep, dtype=np.int64))
    bd = ring_of == n_r
    mesh = Mesh(pts, tris, bd, h)
    mesh.check_quality()
    return mesh


def _graded_columns(x_lo: float, x_hi: float, width_fn, n_layers: int) -> np.ndarray:
    """Column abscissae with spacing ~ local width / n_layers."""
    xs = [x_lo]
    while xs[-1] < x_hi:
        dx = max(width_fn(xs[-1]) / n_layers, 1e-9)
        xs.append(xs[-1] + dx)
    xs = np.array(xs)
    # rescale the marching output so the last column lands exactly on x_hi
    return x_lo + (xs - x_lo) * (x_hi - x_lo) / (xs[-1] - x_lo)


def tube_mesh_2d(domain, h: float) -> Mesh:
    """Graded structured mesh of a 2D slab domain.

    Every column carries the same number of vertical layers; spacing in
    both directions follows the local slice width, so the mesh refines
    automatically through the neck.
    """
    xs_probe = np.linspace(domain.x_lo, domain.x_hi, 1001)
    widths = domain.y_plus(xs_probe) - domain.y_minus(xs_probe)
    w_min = float(widths.min())
    if h >= w_min / 2 / 4:
        raise MeshTooCoarse(
            f"h={h:.4g} must be below a quarter of the minimal half-width "
            f"{w_min / 2:.4g}")
    n_layers = max(8, int(np.ceil(w_min / h)))

    def width_fn(x):
        return float(domain.y_plus(x) - domain.y_minus(x))

    col_x = _graded_columns(domain.x_lo, domain.x_hi, width_fn, n_layers)
    n_rows = n_layers + 1
    pts = np.empty((len(col_x) * n_rows, 2))
    for i, x in enumerate(col_x):
        lo, hi = float(domain.y_minus(x)), float(domain.y_plus(x))
        pts[i * n_rows:(i + 1) * n_rows, 0] = x
        pts[i * n_rows:(i + 1) * n_rows, 1] = np.linspace(lo, hi, n_rows)
    tris = _orient(pts, _grid_triangles(len(col_x), n_rows))
    bd = np.zeros(len(pts), dtype=bool)
    bd[:n_rows] = True
    bd[-n_rows:] = True
    bd[::n_rows] = True
    bd[n_rows - 1::n_rows] = True
    mesh = Mesh(pts, tris, bd, h, column_x=col_x)
    mesh.check_quality()
    return mesh


def box_mesh(a: float, b: float, c: float, h: float) -> Mesh:
    """Uniform tetrahedral mesh of [0,a] x [0,b] x [0,c]."""
    ns = [max(2, int(round(s / h))) for s in (a, b, c)]
    axes = [np.linspace(0, s, n + 1) for s, n in zip((a, b, c), ns)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    idx = np.arange(len(pts)).reshape(ns[0] + 1, ns[1] + 1, ns[2] + 1)
    tets = []
    for i in range(ns[0]):
        for j in range(ns[1]):
            for k in range(ns[2]):
                corner = np.array([
                    idx[i, j, k], idx[i + 1, j, k],
                    idx[i, j + 1, k], idx[i + 1, j + 1, k],
                    idx[i, j, k + 1], idx[i + 1, j, k + 1],
                    idx[i, j + 1, k + 1], idx[i + 1, j + 1, k + 1],
                ])
                tets.extend(corner[_CUBE_TETS])
    tets = _orient(pts, np.array(tets, dtype=np.int64))
    bd = np.zeros(len(pts), dtype=bool)
    for axis, s in enumerate((a, b, c)):
        bd |= np.isclose(pts[:, axis], 0) | np.isclose(pts[:, axis], s)
    mesh = Mesh(pts, tets, bd, h)
    mesh.check_quality()
    return mesh


_CUBE_TETS = np.array([
    [0, 1, 3, 7],
    [0, 1, 7, 5],
    [0, 5, 7, 4],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
], dtype=np.int64)


def tube_mesh_3d(domain, h: float, n_layers: int | None = None) -> Mesh:
    """Graded structured tetrahedral mesh of a 3D hull domain.

    The cross-section at x is parametrized by (u, v) in [-1,1]^2 with
    z = v*Z(x) and y = u*H(x, z); hexahedral cells are split into six
    tetrahedra with a vertex-shared diagonal (conforming across faces).
    """
    L = domain.L
    xs_probe = np.linspace(-L, L, 201)
    H0 = np.atleast_1d(domain.height(xs_probe, np.zeros_like(xs_probe)))
    h_min = float(H0.min())
    if h >= 2 * h_min / 4:
        raise MeshTooCoarse(
            f"h={h:.4g} must be below a quarter of the minimal width "
            f"{2 * h_min:.4g}")
    if n_layers is None:
        n_layers = max(6, int(np.ceil(2 * h_min / h)))
    n_u = n_layers
    Z0 = float(np.atleast_1d(domain.z_extent(0.0))[0])
    n_v = max(6, int(np.ceil(n_layers * Z0 / h_min)))
    # keep 3D meshes tractable: cap the spanwise resolution
    n_v = min(n_v, 4 * n_layers)

    def width_fn(x):
        return 2 * float(np.atleast_1d(domain.height(x, 0.0))[0])

    col_x = _graded_columns(-L, L, width_fn, n_layers)
    n_cols = len(col_x)
    us = np.linspace(-1.0, 1.0, n_u + 1)
    vs = np.linspace(-1.0, 1.0, n_v + 1)
    pts = np.empty((n_cols * (n_u + 1) * (n_v + 1), 3))
    idx = np.arange(len(pts)).reshape(n_cols, n_u + 1, n_v + 1)
    for i, x in enumerate(col_x):
        Z = float(np.atleast_1d(domain.z_extent(x))[0])
        z_row = vs * Z
        Hrow = np.atleast_1d(domain.height(np.full_like(z_row, x), z_row))
        block = pts[idx[i].ravel()]
        ys = np.outer(us, Hrow)                       # (n_u+1, n_v+1)
        block[:, 0] = x
        block[:, 1] = ys.ravel()
        block[:, 2] = np.tile(z_row, n_u + 1)
        pts[idx[i].ravel()] = block
    tets = []
    for i in range(n_cols - 1):
        for j in range(n_u):
            for k in range(n_v):
                corner = np.array([
                    idx[i, j, k], idx[i + 1, j, k],
                    idx[i, j + 1, k], idx[i + 1, j + 1, k],
                    idx[i, j, k + 1], idx[i + 1, j, k + 1],
                    idx[i, j + 1, k + 1], idx[i + 1, j + 1, k + 1],
                ])
                tets.extend(corner[_CUBE_TETS])
    tets = _orient(pts, np.array(tets, dtype=np.int64))
    bd = np.zeros(len(pts), dtype=bool)
    bd[idx[0].ravel()] = True
    bd[idx[-1].ravel()] = True
    bd[idx[:, 0, :].ravel()] = True
    bd[idx[:, -1, :].ravel()] = True
    bd[idx[:, :, 0].ravel()] = True
    bd[idx[:, :, -1].ravel()] = True
    mesh = Mesh(pts, tets, bd, h, column_x=col_x)
    mesh.check_quality()
    return mesh
