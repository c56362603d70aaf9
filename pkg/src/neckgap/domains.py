"""Convex neck domains: 2D sliding slabs and 3D geodesic hulls.

2D domains are bounded by two geodesics launched horizontally from
(0, +r) and (0, -r) and by the vertical slice geodesics at x = t - L and
x = t.  Vertical lines are geodesics for every catalog Fermi metric
(g_yy = 1 and the Christoffel symbols Gamma^k_yy vanish), so the slab
slides along x without rebuilding the side curves.

3D domains are geodesic convex hulls of the eight vertices
(-L, +-alpha r, +-rho r), (L, +-r, +-rho r), approximated by iterated
geodesic-midpoint closure of the vertex cloud with a Hausdorff stopping
rule, and described by the facet inequalities of the coordinate hull of
the closure cloud.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp
from scipy.spatial import ConvexHull

from .errors import (
    BoundaryLeftTube,
    ClosureDiverged,
    ContainmentViolated,
    ConvexityViolated,
    EmptyBulk,
    GateFailed,
    NoAdmissibleRho,
    NoConvergence,
    SliceOutsideDomain,
    ValidationError,
)
from .geodesy import shoot_geodesic, connect
from .jacobi import Barrier, LengthGate, barriers
from .metrics import CurvatureBounds, Metric


# ---------------------------------------------------------------------------
# Fast two-point geodesics (collocation; used in bulk by hulls and audits)
# ---------------------------------------------------------------------------


@dataclass
class GeodesicChord:
    """Geodesic from p to q parameterized over [0, 1]."""

    metric: Metric
    p: np.ndarray
    q: np.ndarray
    distance: float
    _sol: object = field(repr=False)

    def point(self, s):
        return self._sol(np.asarray(s, dtype=float))[: self.metric.dim].T


def connect_fast(metric: Metric, p, q, tol: float = 1e-9) -> GeodesicChord:
    """Collocation solve of the geodesic BVP with a straight-line seed.

    Much cheaper than Newton shooting when many near-straight chords are
    needed (hull closure, convexity audits); falls back to shooting if
    the collocation does not converge.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = metric.dim

    def fun(x, y):
        pts = y[:n].T
        v = y[n:].T
        gam = metric.christoffel_many(pts)
        acc = -np.einsum("mkij,mi,mj->mk", gam, v, v)
        return np.vstack([y[n:], acc.T])

    def bc(ya, yb):
        return np.concatenate([ya[:n] - p, yb[:n] - q])

    xs = np.linspace(0.0, 1.0, 12)
    y0 = np.zeros((2 * n, xs.size))
    for i in range(n):
        y0[i] = p[i] + (q[i] - p[i]) * xs
        y0[n + i] = q[i] - p[i]
    sol = solve_bvp(fun, bc, xs, y0, tol=tol, max_nodes=4000)
    if not sol.success:
        res = connect(metric, p, q)
        dist = res.distance
        path = res.path

        class _Shim:
            def __call__(self, s):
                return np.concatenate(
                    [np.atleast_2d(path.point(s)).T, np.atleast_2d(path.velocity(s)).T]
                )

        return GeodesicChord(metric, p, q, dist, _Shim())
    v0 = sol.sol(0.0)[n:]
    dist = metric.norm(p, v0)
    return GeodesicChord(metric, p, q, float(dist), sol.sol)


# ---------------------------------------------------------------------------
# 2D slab domains
# ---------------------------------------------------------------------------


def _boundary_graph(metric: Metric, y0: float, x_lo: float, x_hi: float,
                    n_grid: int = 4001) -> tuple[np.ndarray, np.ndarray]:
    """Boundary geodesic through (0, y0) tangent to the x direction,
    sampled as a graph y(x) on a uniform grid covering [x_lo, x_hi]."""
    g11 = metric.g([0.0, y0])[0, 0]
    v0 = np.array([1.0 / math.sqrt(g11), 0.0])
    xs_all, ys_all = [], []
    for sgn, x_end in ((1.0, x_hi), (-1.0, x_lo)):
        if sgn * x_end <= 0:
            continue
        # arclength is bounded by sqrt(g11_max) * |x span| + slack
        s_max = 4.0 * (abs(x_end) + 1.0)
        try:
            path = _shoot_until_x(metric, [0.0, y0], sgn * v0, x_end, s_max)
        except NoConvergence:
            raise BoundaryLeftTube(
                f"boundary geodesic from (0, {y0}) did not reach x = {x_end}"
            )
        ss = np.linspace(0.0, path.length, 6000)
        pts = path.point(ss)
        xs_all.append(pts[:, 0])
        ys_all.append(pts[:, 1])
    xs = np.concatenate(xs_all)
    ys = np.concatenate(ys_all)
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]
    grid = np.linspace(x_lo, x_hi, n_grid)
    return grid, np.interp(grid, xs, ys)


def _shoot_until_x(metric: Metric, p, v, x_target: float, s_max: float):
    """Shoot a geodesic until its x coordinate reaches x_target."""
    from .geodesy import _chart_events, _geodesic_rhs  # shared integrator setup

    def hit(_s, state, x_target=x_target):
        return state[0] - x_target

    hit.terminal = True
    events = [hit] + _chart_events(metric)
    sol = solve_ivp(_geodesic_rhs(metric), (0.0, s_max),
                    np.concatenate([np.asarray(p, float), np.asarray(v, float)]),
                    method="DOP853", rtol=1e-11, atol=1e-12,
                    dense_output=True, events=events)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise NoConvergence(residual=float("nan"))
    from .geodesy import GeodesicPath

    return GeodesicPath(metric=metric, p0=np.asarray(p, float),
                        v0=np.asarray(v, float), length=float(sol.t[-1]),
                        _sol=sol.sol)


@dataclass
class ConvexDomain2D:
    metric: Metric
    r: float
    L: float
    t: float
    x_grid: np.ndarray
    y_plus_grid: np.ndarray
    y_minus_grid: np.ndarray
    corners: dict

    @property
    def x_lo(self) -> float:
        return self.t - self.L

    @property
    def x_hi(self) -> float:
        return self.t

    def y_plus(self, x):
        return np.interp(x, self.x_grid, self.y_plus_grid)

    def y_minus(self, x):
        return np.interp(x, self.x_grid, self.y_minus_grid)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside_x = (x >= self.x_lo - tol) & (x <= self.x_hi + tol)
        inside_y = (y <= self.y_plus(x) + tol) & (y >= self.y_minus(x) - tol)
        return inside_x & inside_y

    def boundary_points(self, n: int, rng=None) -> np.ndarray:
        """n points around the boundary, deterministic if rng is None."""
        u = (np.linspace(0, 1, n, endpoint=False) if rng is None
             else np.sort(rng.uniform(0, 1, n)))
        pts = []
        for s in u:
            which, frac = int(s * 4), (s * 4) % 1.0
            if which == 0:      # top curve, left to right
                x = self.x_lo + frac * self.L
                pts.append([x, float(self.y_plus(x))])
            elif which == 1:    # right wall, top to bottom
                y1, y0 = float(self.y_plus(self.x_hi)), float(self.y_minus(self.x_hi))
                pts.append([self.x_hi, y1 + frac * (y0 - y1)])
            elif which == 2:    # bottom curve, right to left
                x = self.x_hi - frac * self.L
                pts.append([x, float(self.y_minus(x))])
            else:               # left wall, bottom to top
                y0, y1 = float(self.y_minus(self.x_lo)), float(self.y_plus(self.x_lo))
                pts.append([self.x_lo, y0 + frac * (y1 - y0)])
        return np.array(pts)


def build_domain_2d(metric: Metric, r: float, L: float, t: float) -> ConvexDomain2D:
    """Slab bounded by the horizontal geodesics through (0, +-r) and the
    vertical slices x = t - L, x = t."""
    if not (0 < t < L):
        raise ValidationError(f"need 0 < t < L, got t={t}, L={L}")
    if r <= 0:
        raise ValidationError(f"need r > 0, got {r}")
    y_cap = metric.chart_box[1][1]
    grid, y_plus = _boundary_graph(metric, r, t - L, t)
    _, y_minus = _boundary_graph(metric, -r, t - L, t)
    if np.abs(y_plus).max() > 0.95 * y_cap or np.abs(y_minus).max() > 0.95 * y_cap:
        raise BoundaryLeftTube(
            f"boundary geodesics reach |y| = "
            f"{max(np.abs(y_plus).max(), np.abs(y_minus).max()):.4g}, "
            f"near the chart cap {y_cap}"
        )
    if not (np.all(y_plus > 0) and np.all(y_minus < 0)):
        raise BoundaryLeftTube("boundary geodesics cross the axis inside the slab")
    corners = {
        "P": np.array([t, float(np.interp(t, grid, y_plus))]),
        "Q": np.array([t, float(np.interp(t, grid, y_minus))]),
        "R": np.array([t - L, float(np.interp(t - L, grid, y_minus))]),
        "S": np.array([t - L, float(np.interp(t - L, grid, y_plus))]),
    }
    return ConvexDomain2D(metric=metric, r=r, L=L, t=t, x_grid=grid,
                          y_plus_grid=y_plus, y_minus_grid=y_minus,
                          corners=corners)


@dataclass(frozen=True)
class SliceProfile:
    xs: np.ndarray
    ell_plus: np.ndarray
    ell_minus: np.ndarray

    @property
    def ell(self) -> np.ndarray:
        return np.maximum(self.ell_plus, self.ell_minus)


def slice_profile(domain: ConvexDomain2D, xs) -> SliceProfile:
    """Vertical geodesic distances from (x, 0) to the two side curves.

    The slice curves are unit-speed geodesics (g_yy = 1), so the distance
    along a slice is the coordinate height itself.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.min() < domain.x_lo - 1e-12 or xs.max() > domain.x_hi + 1e-12:
        raise SliceOutsideDomain(
            f"grid [{xs.min()}, {xs.max()}] leaves [{domain.x_lo}, {domain.x_hi}]"
        )
    return SliceProfile(xs=xs, ell_plus=domain.y_plus(xs),
                        ell_minus=-domain.y_minus(xs))


@dataclass(frozen=True)
class Wectangle:
    x_lo: float
    x_hi: float
    half_height: float
    mirrored: bool


def contained_wectangle(domain: ConvexDomain2D, delta: float) -> Wectangle:
    """The comparison rectangle in the flaring half of the slab.

    For t >= L/2 it is {x in [L/4, L/2], |y| <= (1-2 delta) r cosh(L/4)};
    for t < L/2 the mirrored copy on [-L/2, -L/4].  Containment in the
    slab is verified by sampling the rectangle boundary.
    """
    r, L = domain.r, domain.L
    w = (1 - 2 * delta) * r * math.cosh(L / 4)
    mirrored = domain.t < L / 2
    if mirrored:
        x_lo, x_hi = -L / 2, -L / 4
    else:
        x_lo, x_hi = L / 4, L / 2
    xs = np.linspace(x_lo, x_hi, 200)
    top = np.column_stack([xs, np.full_like(xs, w)])
    bot = np.column_stack([xs, np.full_like(xs, -w)])
    walls = np.array([[x_lo, -w], [x_lo, w], [x_hi, -w], [x_hi, w]])
    pts = np.vstack([top, bot, walls])
    ok = domain.contains(pts, tol=1e-12)
    if not np.all(ok):
        bad = pts[~ok][0]
        raise ContainmentViolated(
            f"rectangle point {bad} outside the slab (half-height {w:.5g})"
        )
    return Wectangle(x_lo=x_lo, x_hi=x_hi, half_height=w, mirrored=mirrored)


# ---------------------------------------------------------------------------
# rho selection for the 3D hull
# ---------------------------------------------------------------------------


def choose_rho(bounds: CurvatureBounds, L0: float, rho_max: float = 1e4) -> float:
    """Smallest rho on a geometric grid making the slice-eigenvalue proxy

        f(x) = pi^2 / cosh^2(sqrt(|K2|) x) + 4 pi^2 / (rho^2 cos^2(sqrt(K) x))

    concave on [-L0, L0] (second differences <= 0 on a 1000-point grid),
    subject to the hard floor rho > 2K/|K2|.
    """
    if bounds.k2 >= 0:
        raise ValidationError("need a negative curvature direction (K2 < 0)")
    K = bounds.K
    K2 = abs(bounds.k2)
    floor = max(2.0 * K / K2, 2.0)
    xs = np.linspace(-L0, L0, 1000)
    sech2 = math.pi**2 / np.cosh(math.sqrt(K2) * xs) ** 2
    sec2 = 1.0 / np.cos(math.sqrt(K) * xs) ** 2
    rho = floor * 1.0000001
    while rho <= rho_max:
        f = sech2 + 4 * math.pi**2 * sec2 / rho**2
        d2 = f[2:] - 2 * f[1:-1] + f[:-2]
        if np.all(d2 <= 1e-15):
            return float(rho)
        rho *= 1.05
    raise NoAdmissibleRho(f"no admissible rho below {rho_max}")


# ---------------------------------------------------------------------------
# 3D geodesic hull
# ---------------------------------------------------------------------------


@dataclass
class ConvexDomain3D:
    """Geodesic hull of the eight slab vertices.

    The coordinate convex hull of the closure cloud is only an *outer*
    description: the top and bottom faces of the geodesic hull sag
    toward the axis (coordinate-concave), so the height function H(x,z)
    is tabulated from the generating family of top-edge geodesics and
    membership intersects the outer hull with |y| <= H(x, z).
    """

    metric: Metric
    r: float
    rho: float
    alpha: float
    L: float
    vertices: np.ndarray          # the eight defining vertices
    cloud: np.ndarray             # closure point cloud
    hull: ConvexHull = field(repr=False)
    _x_grid: np.ndarray = field(repr=False, default=None)
    _z_table: np.ndarray = field(repr=False, default=None)   # (n_zeta, n_x)
    _y_table: np.ndarray = field(repr=False, default=None)   # (n_zeta, n_x)

    def _build_height_table(self, n_zeta: int = 17, n_x: int = 201):
        """Top face from geodesics joining matching top-edge points."""
        L, r, rho, alpha = self.L, self.r, self.rho, self.alpha
        self._x_grid = np.linspace(-L, L, n_x)
        zetas = np.linspace(0.0, 1.0, n_zeta)
        ys, zs = [], []
        ss = np.linspace(0.0, 1.0, 4 * n_x)
        for zeta in zetas:
            chord = connect_fast(self.metric,
                                 [-L, alpha * r, zeta * rho * r],
                                 [L, r, zeta * rho * r])
            pts = chord.point(ss)
            order = np.argsort(pts[:, 0])
            ys.append(np.interp(self._x_grid, pts[order, 0], pts[order, 1]))
            zs.append(np.interp(self._x_grid, pts[order, 0], pts[order, 2]))
        self._y_table = np.array(ys)
        self._z_table = np.array(zs)

    def height(self, x, z):
        """H(x, z) = sup { y : (x, y, z) in the hull } on the top face."""
        if self._x_grid is None:
            self._build_height_table()
        x = np.atleast_1d(np.asarray(x, dtype=float))
        z = np.abs(np.atleast_1d(np.asarray(z, dtype=float)))
        x, z = np.broadcast_arrays(x, z)
        zcols = np.vstack([np.interp(x, self._x_grid, row) for row in self._z_table])
        ycols = np.vstack([np.interp(x, self._x_grid, row) for row in self._y_table])
        H = np.empty(x.shape)
        for i in range(x.size):
            H[i] = np.interp(min(z[i], zcols[-1, i]), zcols[:, i], ycols[:, i])
        return H if H.size > 1 else float(H[0])

    def z_extent(self, x):
        """Z(x) = sup { z : (x, 0, z) in hull } from the outer hull facets."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        A = self.hull.equations[:, :3]
        b = -self.hull.equations[:, 3]
        up = A[:, 2] > 1e-12
        cap = (b[up][None, :] - np.outer(x, A[up, 0])) / A[up, 2][None, :]
        Z = cap.min(axis=1)
        return Z if Z.size > 1 else float(Z[0])

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        A = self.hull.equations[:, :3]
        b = -self.hull.equations[:, 3]
        outer = np.all(pts @ A.T <= b + tol, axis=1)
        H = np.atleast_1d(self.height(pts[:, 0], pts[:, 2]))
        under_top = np.abs(pts[:, 1]) <= H + tol
        return outer & under_top

    def boundary_points(self, n: int, rng=None) -> np.ndarray:
        """Sample the true boundary: sagged top/bottom, ends, and z sides."""
        rng = rng or np.random.default_rng(0)
        L, r, rho, alpha = self.L, self.r, self.rho, self.alpha
        pts = []
        for _ in range(n):
            face = rng.integers(0, 4)
            if face == 0:        # top or bottom
                x = rng.uniform(-L, L)
                zcol = np.array([np.interp(x, self._x_grid, row)
                                 for row in self._z_table]) if self._x_grid is not None \
                    else None
                if zcol is None:
                    self._build_height_table()
                    zcol = np.array([np.interp(x, self._x_grid, row)
                                     for row in self._z_table])
                z = rng.uniform(-zcol[-1], zcol[-1])
                y = float(self.height(x, z)) * rng.choice([-1.0, 1.0])
                pts.append([x, y, z])
            elif face == 1:      # end faces
                x = rng.choice([-L, L])
                half = alpha * r if x < 0 else r
                pts.append([x, rng.uniform(-half, half),
                            rng.uniform(-rho * r, rho * r)])
            else:                # z sides from the outer hull
                x = rng.uniform(-L, L)
                z = float(np.atleast_1d(self.z_extent(x))[0]) * rng.choice([-1.0, 1.0])
                pts.append([x, 0.0, z])
        return np.array(pts)

    def corner_points(self) -> np.ndarray:
        return self.vertices


def _mirror(pts: np.ndarray) -> np.ndarray:
    """Close the cloud under the (y -> -y) and (z -> -z) symmetries."""
    out = [pts]
    for sy in (1, -1):
        for sz in (1, -1):
            if (sy, sz) != (1, 1):
                out.append(pts * np.array([1.0, sy, sz]))
    return np.unique(np.round(np.vstack(out), 12), axis=0)


def build_domain_3d(metric: Metric, r: float, rho: float, alpha: float,
                    L: float, gate: LengthGate, max_rounds: int = 12,
                    pair_cap: int = 400, seed: int = 20240614) -> ConvexDomain3D:
    """Geodesic convex hull of the eight slab vertices by midpoint closure.

    Each round connects pairs of current hull vertices by geodesics and
    adds the midpoints (closed under the y/z mirror symmetries); the loop
    stops when the Hausdorff increment over the previous hull drops below
    r * 1e-3.
    """
    if not gate.passed:
        raise GateFailed(f"length gate rejected L={gate.L}")
    if not (10 / 11 <= alpha <= 11 / 10):
        raise ValidationError(f"alpha must lie in [10/11, 11/10], got {alpha}")
    verts = np.array([
        [-L, sy * alpha * r, sz * rho * r]
        for sy in (1, -1) for sz in (1, -1)
    ] + [
        [L, sy * r, sz * rho * r]
        for sy in (1, -1) for sz in (1, -1)
    ])
    rng = np.random.default_rng(seed)
    cloud = verts.copy()
    hull = ConvexHull(cloud)
    tol = r * 1e-3
    for _ in range(max_rounds):
        hv = cloud[hull.vertices]
        pairs = list(combinations(range(len(hv)), 2))
        if len(pairs) > pair_cap:
            take = rng.choice(len(pairs), pair_cap, replace=False)
            pairs = [pairs[i] for i in take]
        mids = []
        for i, j in pairs:
            p, q = hv[i], hv[j]
            # symmetry quotient: canonical representative only
            if p[1] + q[1] < -1e-15 or (abs(p[1] + q[1]) < 1e-15
                                        and p[2] + q[2] < -1e-15):
                continue
            chord = connect_fast(metric, p, q, tol=1e-9)
            mids.append(chord.point(0.5))
        mids = _mirror(np.array(mids))
        A = hull.equations[:, :3]
        b = -hull.equations[:, 3]
        excess = (mids @ A.T - b).max(axis=1)
        increment = float(excess.max())
        cloud = np.vstack([cloud, mids[excess > 0]]) if np.any(excess > 0) else cloud
        hull = ConvexHull(cloud)
        if increment < tol:
            dom = ConvexDomain3D(metric=metric, r=r, rho=rho, alpha=alpha, L=L,
                                 vertices=verts, cloud=cloud, hull=hull)
            if not np.all(dom.contains(
                    np.column_stack([np.linspace(-L, L, 50),
                                     np.zeros(50), np.zeros(50)]), tol=1e-9)):
                raise ClosureDiverged("hull does not contain the base segment")
            return dom
    raise ClosureDiverged(
        f"midpoint closure did not settle below {tol:.3g} in {max_rounds} rounds"
    )


@dataclass(frozen=True)
class NeckProfile:
    neck_bound: float            # B = min of the upper barrier
    neck_interval: tuple[float, float]
    bulk_components: list        # list of (lo, hi) x-intervals
    bulk_measure: float
    ratio: float                 # neck-height cap / bulk-height floor, < 1 in regime
    upper: Barrier
    lower: Barrier


def height_and_neck(domain: ConvexDomain3D, kappa20: float,
                    n_grid: int = 1001) -> tuple[np.ndarray, NeckProfile]:
    """Height table H(x, 0) plus the barrier-driven neck/bulk profile.

    The upper/lower barriers run through the (normalized) endpoint
    heights; B is the minimum of the upper barrier; the neck is where
    the upper barrier is within max((1-B)/4, (alpha-B)/4) of B and the
    bulk is where the lower barrier exceeds max((1+B)/2, (alpha+B)/2).
    """
    L, r, alpha = domain.L, domain.r, domain.alpha
    xs = np.linspace(-L, L, n_grid)
    H = np.asarray(domain.height(xs, np.zeros(n_grid)))
    h_left = float(H[0]) / r
    h_right = float(H[-1]) / r
    if kappa20 < 0:
        lower, upper = barriers(kappa20, -L, L, h_left, h_right)
    else:
        # flat diagnostic: both barriers degenerate to the chord
        lower = Barrier("lower", 1e-30, -L, L, h_left, h_right)
        upper = Barrier("upper", 1e-30, -L, L, h_left, h_right)
    ju = upper(xs)
    jl = lower(xs)
    B = float(ju.min())
    top = max(1.0, alpha)
    neck_mask = ju < B + max((1 - B) / 4, (alpha - B) / 4)
    bulk_mask = jl > max((1 + B) / 2, (alpha + B) / 2)
    if not np.any(bulk_mask):
        raise EmptyBulk("no x-slice exceeds the bulk height floor")
    dx = xs[1] - xs[0]
    bulk_measure = float(bulk_mask.sum() * dx)
    neck_xs = xs[neck_mask] if np.any(neck_mask) else xs[[int(np.argmin(ju))]]
    neck_interval = (float(neck_xs.min()), float(neck_xs.max()))
    comps = []
    in_comp = False
    for i, m in enumerate(bulk_mask):
        if m and not in_comp:
            lo = xs[i]
            in_comp = True
        elif not m and in_comp:
            comps.append((float(lo), float(xs[i - 1])))
            in_comp = False
    if in_comp:
        comps.append((float(lo), float(xs[-1])))
    ratio = (B + (top - B) / 4) / ((top + B) / 2)
    profile = NeckProfile(neck_bound=B, neck_interval=neck_interval,
                          bulk_components=comps, bulk_measure=bulk_measure,
                          ratio=float(ratio), upper=upper, lower=lower)
    return H, profile


# ---------------------------------------------------------------------------
# Convexity / diameter audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexityReport:
    passed: bool
    diameter: float
    trials: int
    seed: int
    worst_violation: float


def convexity_audit(domain, trials: int = 60, seed: int = 20240615,
                    n_path_samples: int = 25) -> ConvexityReport:
    """Connect sampled boundary pairs by geodesics and check containment.

    Tolerance r * 1e-3 in chart coordinates; the reported diameter D is
    the maximum sampled pairwise geodesic distance.
    """
    rng = np.random.default_rng(seed)
    r = getattr(domain, "r", 1.0)
    tol = r * 1e-3
    pts = domain.boundary_points(max(2 * trials, 16), rng)
    # corner pairs bound the diameter from below; random pairs probe convexity
    if isinstance(domain, ConvexDomain3D):
        corners = domain.corner_points()
    elif hasattr(domain, "corners"):
        corners = np.array(list(domain.corners.values()))
    else:
        corners = pts[:4]
    pairs = list(combinations(range(len(corners)), 2))
    pairs = [(corners[i], corners[j]) for i, j in pairs]
    idx = rng.integers(0, len(pts), size=(trials, 2))
    pairs += [(pts[i], pts[j]) for i, j in idx]
    D = 0.0
    worst = 0.0
    ss = np.linspace(0.0, 1.0, n_path_samples)[1:-1]
    for p, q in pairs:
        if np.linalg.norm(p - q) < 1e-9:
            continue
        chord = connect_fast(domain.metric, p, q)
        D = max(D, chord.distance)
        interior = chord.point(ss)
        inside = domain.contains(interior, tol=tol)
        if not np.all(inside):
            bad = interior[~inside][0]
            dist_out = _containment_gap(domain, interior[~inside])
            worst = max(worst, dist_out)
            if dist_out > tol:
                raise ConvexityViolated(
                    f"geodesic between {p} and {q} exits the domain at {bad}",
                    witness=(tuple(p), tuple(q), tuple(bad)),
                )
    return ConvexityReport(passed=True, diameter=float(D), trials=len(pairs),
                           seed=seed, worst_violation=float(worst))


def _containment_gap(domain, pts) -> float:
    pts = np.atleast_2d(pts)
    if isinstance(domain, ConvexDomain3D):
        A = domain.hull.equations[:, :3]
        b = -domain.hull.equations[:, 3]
        return float((pts @ A.T - b).max())
    x, y = pts[:, 0], pts[:, 1]
    gaps = np.stack([
        domain.x_lo - x,
        x - domain.x_hi,
        y - domain.y_plus(x),
        domain.y_minus(x) - y,
    ])
    return float(gaps.max())
