"""Metric catalog with exact differential-geometric oracles.

Every catalog family is a closed-form metric in a chart whose axis
``y = 0`` (and ``z = 0`` in 3D) is a unit-speed geodesic with a parallel
coordinate frame, so the chart coordinates are already Fermi coordinates
along the axis.  The metric, Christoffel symbols, and the full lowered
Riemann tensor are derived symbolically once per metric instance and
evaluated numerically afterwards.

Sign conventions: ``R[i,j,k,l] = g(R(d_i, d_j) d_k, d_l)`` with
``R(X,Y)Z = ∇_X ∇_Y Z − ∇_Y ∇_X Z − ∇_[X,Y] Z``; the sectional curvature
of the plane spanned by (u, v) is ``R(u,v,v,u) / (|u|²|v|² − <u,v>²)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sp

from .errors import DegeneratePlane, PointOutsideChart, TubeExceedsChart

FAMILIES = (
    "euclidean",
    "hyperbolic",
    "hyperbolic-half-plane",
    "pinched",
    "mixed3d",
    "sphere-diag",
)

_SYMS = sp.symbols("x y z", real=True)


@dataclass(frozen=True)
class MetricTensor:
    """Metric, inverse, and volume density at a chart point."""

    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: float


@dataclass
class CurvatureData:
    riemann: np.ndarray
    sectional: Callable[[np.ndarray, np.ndarray], float]
    grad_norms: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CurvatureBounds:
    """Sampled curvature bounds on a tube {|x| <= L, ||y|| <= r}.

    K1/K2 are sectional min/max over the tube (10% widened), K the max
    absolute sectional.  k2/K2_dir are the raw min/max of the middle
    eigenvalue kappa_2(x) of the normal curvature form along the axis,
    K3 the max |kappa_3(x)|.  ``pinching_ok`` reports the gate
    9*kappa_2(0)/8 < k2 <= K2_dir < 7*kappa_2(0)/8.
    """

    K1: float
    K2: float
    K: float
    k2: float
    K2_dir: float
    K3: float
    kappa2_origin: float
    pinching_ok: bool


def _pinched_k_expr(params, x):
    base = params.get("base", 1.0)
    amp = params.get("amp", 0.0)
    freq = params.get("freq", 1.0)
    phase = params.get("phase", 0.0)
    return base + amp * (1 + sp.sin(freq * x + phase)) / 2


def _family_matrix(family: str, params: dict) -> sp.Matrix:
    x, y, z = _SYMS
    if family == "euclidean":
        return sp.eye(int(params.get("dimension", 2)))
    if family == "hyperbolic":
        return sp.diag(sp.cosh(y) ** 2, 1)
    if family == "hyperbolic-half-plane":
        return sp.diag(1 / y**2, 1 / y**2)
    if family == "pinched":
        k = _pinched_k_expr(params, x)
        return sp.diag(sp.cosh(k * y) ** 2, 1)
    if family == "mixed3d":
        a = params.get("a", 1.0)
        b = params.get("b", 0.5)
        warp = sp.cosh(a * y) * sp.cos(b * z)
        return sp.diag(warp**2, 1, 1)
    if family == "sphere-diag":
        return sp.diag(1, sp.sin(x) ** 2)
    raise ValueError(f"unknown metric family {family!r}")


def _chart_box(family: str, params: dict):
    """Per-coordinate (lo, hi) chart bounds."""
    big = 1e6
    y_max = params.get("y_max", 1.0)
    if family == "euclidean":
        n = int(params.get("dimension", 2))
        return [(-big, big)] * n
    if family == "hyperbolic":
        return [(-big, big), (-params.get("y_max", 2.0), params.get("y_max", 2.0))]
    if family == "hyperbolic-half-plane":
        return [(-big, big), (1e-8, big)]
    if family == "pinched":
        return [(-big, big), (-y_max, y_max)]
    if family == "mixed3d":
        b = params.get("b", 0.5)
        z_max = params.get("z_max", min(1.0, 0.9 * math.pi / (2 * b)))
        return [(-big, big), (-y_max, y_max), (-z_max, z_max)]
    if family == "sphere-diag":
        return [(0.05, math.pi - 0.05), (-big, big)]
    raise ValueError(family)


def _lambdify_components(exprs, nsyms):
    """Lambdify a flat list of sympy expressions for scalar point input.

    One batched scalar-math function serves hot pointwise paths (ODE
    right-hand sides); the per-component numpy functions serve the
    vectorized many-point evaluators.
    """
    syms = _SYMS[:nsyms]
    batch = sp.lambdify(syms, list(exprs), "math")
    fns = [sp.lambdify(syms, e, "numpy") for e in exprs]

    def call(coords):
        return np.asarray(batch(*coords), dtype=float)

    return call, fns


class Metric:
    """A catalog metric with symbolic-exact numeric oracles."""

    def __init__(self, family: str, **params):
        if family not in FAMILIES:
            raise ValueError(f"unknown metric family {family!r}")
        self.family = family
        self.params = dict(params)
        g = _family_matrix(family, self.params)
        self.dim = g.shape[0]
        self.chart_box = _chart_box(family, self.params)
        n = self.dim
        syms = _SYMS[:n]

        ginv = g.inv()
        det = g.det()
        # Christoffel: Gamma[k][i][j]
        gamma = [
            [
                [
                    sp.simplify(
                        sum(
                            ginv[k, m]
                            * (sp.diff(g[m, i], syms[j]) + sp.diff(g[m, j], syms[i]) - sp.diff(g[i, j], syms[m]))
                            for m in range(n)
                        )
                        / 2
                    )
                    for j in range(n)
                ]
                for i in range(n)
            ]
            for k in range(n)
        ]
        # R^a_{b c d}: R(d_c, d_d) d_b = R^a_{bcd} d_a
        rup = [[[[sp.S.Zero] * n for _ in range(n)] for _ in range(n)] for _ in range(n)]
        for a in range(n):
            for b in range(n):
                for c in range(n):
                    for d in range(n):
                        expr = sp.diff(gamma[a][d][b], syms[c]) - sp.diff(gamma[a][c][b], syms[d])
                        for e in range(n):
                            expr += gamma[a][c][e] * gamma[e][d][b] - gamma[a][d][e] * gamma[e][c][b]
                        rup[a][b][c][d] = expr
        # lowered R[i,j,k,l] = g(R(d_i,d_j)d_k, d_l) = g_{a l} R^a_{k i j}
        rlow = [
            [
                [
                    [sp.simplify(sum(g[a, l] * rup[a][k][i][j] for a in range(n))) for l in range(n)]
                    for k in range(n)
                ]
                for j in range(n)
            ]
            for i in range(n)
        ]

        self._g_exprs = [g[i, j] for i in range(n) for j in range(n)]
        self._ginv_exprs = [ginv[i, j] for i in range(n) for j in range(n)]
        self._det_expr = det
        self._gamma_exprs = [gamma[k][i][j] for k in range(n) for i in range(n) for j in range(n)]
        self._riem_exprs = [
            rlow[i][j][k][l]
            for i in range(n)
            for j in range(n)
            for k in range(n)
            for l in range(n)
        ]

        self._g_fn, self._g_comp_fns = _lambdify_components(self._g_exprs, n)
        self._ginv_fn, self._ginv_comp_fns = _lambdify_components(self._ginv_exprs, n)
        self._det_fn = sp.lambdify(syms, det, "numpy")
        self._gamma_fn, self._gamma_comp_fns = _lambdify_components(self._gamma_exprs, n)
        self._riem_fn, self._riem_comp_fns = _lambdify_components(self._riem_exprs, n)
        self._grad_riem = None  # built lazily

    # -- identity / hashing -------------------------------------------------
    def key(self):
        return (self.family, tuple(sorted(self.params.items())))

    def __repr__(self):
        return f"Metric({self.family}, {self.params})"

    # -- chart --------------------------------------------------------------
    def contains(self, p, slack: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,) or not np.all(np.isfinite(p)):
            return False
        return all(lo - slack <= c <= hi + slack for c, (lo, hi) in zip(p, self.chart_box))

    def require_inside(self, p):
        if not self.contains(p):
            raise PointOutsideChart(f"{p} outside chart of {self}")

    # -- pointwise oracles ----------------------------------------------------
    def g(self, p) -> np.ndarray:
        return self._g_fn(p).reshape(self.dim, self.dim)

    def g_inv(self, p) -> np.ndarray:
        return self._ginv_fn(p).reshape(self.dim, self.dim)

    def sqrt_det(self, p) -> float:
        return float(np.sqrt(self._det_fn(*p)))

    def christoffel(self, p) -> np.ndarray:
        n = self.dim
        return self._gamma_fn(p).reshape(n, n, n)

    def riemann(self, p) -> np.ndarray:
        n = self.dim
        return self._riem_fn(p).reshape(n, n, n, n)

    def norm(self, p, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ self.g(p) @ v))

    def inner(self, p, u, v) -> float:
        return float(np.asarray(u) @ self.g(p) @ np.asarray(v))

    # -- vectorized evaluation (FEM assembly) --------------------------------
    def g_inv_many(self, pts: np.ndarray) -> np.ndarray:
        """Inverse metric at an (m, n) array of points -> (m, n, n)."""
        pts = np.asarray(pts, dtype=float)
        m, n = pts.shape
        cols = [pts[:, j] for j in range(n)]
        out = np.empty((m, n * n))
        for c, fn in enumerate(self._ginv_comp_fns):
            out[:, c] = np.broadcast_to(fn(*cols), (m,))
        return out.reshape(m, n, n)

    def sqrt_det_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        cols = [pts[:, j] for j in range(pts.shape[1])]
        return np.sqrt(np.broadcast_to(self._det_fn(*cols), (pts.shape[0],)).astype(float))

    def g_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        m, n = pts.shape
        cols = [pts[:, j] for j in range(n)]
        out = np.empty((m, n * n))
        for c, fn in enumerate(self._g_comp_fns):
            out[:, c] = np.broadcast_to(fn(*cols), (m,))
        return out.reshape(m, n, n)

    def christoffel_many(self, pts: np.ndarray) -> np.ndarray:
        """Christoffel symbols at an (m, n) point array -> (m, n, n, n)."""
        pts = np.asarray(pts, dtype=float)
        m, n = pts.shape
        cols = [pts[:, j] for j in range(n)]
        out = np.empty((m, n**3))
        for c, fn in enumerate(self._gamma_comp_fns):
            out[:, c] = np.broadcast_to(fn(*cols), (m,))
        return out.reshape(m, n, n, n)

    def riemann_many(self, pts: np.ndarray) -> np.ndarray:
        """Lowered Riemann tensor at an (m, n) point array -> (m, n,n,n,n)."""
        pts = np.asarray(pts, dtype=float)
        m, n = pts.shape
        cols = [pts[:, j] for j in range(n)]
        out = np.empty((m, n**4))
        for c, fn in enumerate(self._riem_comp_fns):
            out[:, c] = np.broadcast_to(fn(*cols), (m,))
        return out.reshape(m, n, n, n, n)

    def sectional_many(self, pts: np.ndarray, u, v) -> np.ndarray:
        """Sectional curvature of a fixed coordinate plane at many points."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        g = self.g_many(pts)
        uu = np.einsum("i,pij,j->p", u, g, u)
        vv = np.einsum("i,pij,j->p", v, g, v)
        uv = np.einsum("i,pij,j->p", u, g, v)
        gram = uu * vv - uv**2
        if np.any(gram < 1e-14 * np.maximum(1.0, uu * vv)):
            raise DegeneratePlane("plane vectors are (nearly) linearly dependent")
        num = np.einsum("pijkl,i,j,k,l->p", self.riemann_many(pts), u, v, v, u)
        return num / gram

    # -- derived curvature quantities ----------------------------------------
    def sectional(self, p, u, v) -> float:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        g = self.g(p)
        gram = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
        if gram < 1e-14 * max(1.0, float(u @ g @ u) * float(v @ g @ v)):
            raise DegeneratePlane("plane vectors are (nearly) linearly dependent")
        r = self.riemann(p)
        num = np.einsum("i,j,k,l,ijkl->", u, v, v, u, r)
        return float(num / gram)

    def normal_curvature_form(self, x: float) -> np.ndarray:
        """The form <R(e_a, e_1) e_1, e_b> on the normal space along the axis.

        Returns an (n-1, n-1) symmetric matrix in the coordinate frame
        (d_y[, d_z]) at the axis point (x, 0[, 0]).
        """
        p = np.zeros(self.dim)
        p[0] = x
        r = self.riemann(p)
        idx = range(1, self.dim)
        return np.array([[r[a, 0, 0, b] for b in idx] for a in idx])

    def _build_grad_riemann(self):
        n = self.dim
        syms = _SYMS[:n]
        g = _family_matrix(self.family, self.params)
        # reuse lowered Riemann expressions
        riem = np.array(self._riem_exprs, dtype=object).reshape(n, n, n, n)
        gamma = np.array(self._gamma_exprs, dtype=object).reshape(n, n, n)
        grad = []
        for m in range(n):
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        for l in range(n):
                            expr = sp.diff(riem[i, j, k, l], syms[m])
                            for pidx in range(n):
                                expr -= gamma[pidx, m, i] * riem[pidx, j, k, l]
                                expr -= gamma[pidx, m, j] * riem[i, pidx, k, l]
                                expr -= gamma[pidx, m, k] * riem[i, j, pidx, l]
                                expr -= gamma[pidx, m, l] * riem[i, j, k, pidx]
                            grad.append(expr)
        self._grad_riem, _ = _lambdify_components(grad, n)

    def grad_riemann(self, p) -> np.ndarray:
        """Covariant derivative of the lowered Riemann tensor, (n, n,n,n,n)."""
        if self._grad_riem is None:
            self._build_grad_riemann()
        n = self.dim
        return self._grad_riem(p).reshape(n, n, n, n, n)


@lru_cache(maxsize=32)
def _cached_metric(family: str, params_key: tuple) -> Metric:
    return Metric(family, **dict(params_key))


def make_metric(family: str, **params) -> Metric:
    return _cached_metric(family, tuple(sorted(params.items())))


# ---------------------------------------------------------------------------
# Module operations (thin wrappers matching the public surface)
# ---------------------------------------------------------------------------


def metric_at(metric: Metric, p) -> MetricTensor:
    metric.require_inside(p)
    return MetricTensor(g=metric.g(p), g_inv=metric.g_inv(p), sqrt_det=metric.sqrt_det(p))


def christoffel(metric: Metric, p) -> np.ndarray:
    metric.require_inside(p)
    return metric.christoffel(p)


def curvature_at(metric: Metric, p, plane) -> tuple[float, CurvatureData]:
    """Sectional curvature of the plane spanned by two tangent vectors."""
    metric.require_inside(p)
    u, v = plane
    kappa = metric.sectional(p, u, v)
    data = CurvatureData(
        riemann=metric.riemann(p),
        sectional=lambda uu, vv: metric.sectional(p, uu, vv),
    )
    return kappa, data


def _tube_points(metric: Metric, L: float, r_max: float, step: float) -> np.ndarray:
    nx = max(3, int(math.ceil(2 * L / step)) + 1)
    nr = max(3, int(math.ceil(2 * r_max / step)) + 1)
    xs = np.linspace(-L, L, min(nx, 201))
    if metric.dim == 2:
        ys = np.linspace(-r_max, r_max, min(nr, 101))
        grid = np.meshgrid(xs, ys, indexing="ij")
    else:
        ys = np.linspace(-r_max, r_max, min(nr, 21))
        zs = np.linspace(-r_max, r_max, min(nr, 21))
        grid = np.meshgrid(xs, ys, zs, indexing="ij")
    return np.stack([c.ravel() for c in grid], axis=-1)


def tube_bounds(metric: Metric, L: float, r_max: float, n_planes: int = 6) -> CurvatureBounds:
    """Sampled sectional-curvature bounds on the tube, widened by 10%."""
    for corner in ([L, r_max], [-L, -r_max]) if metric.dim == 2 else ([L, r_max, r_max], [-L, -r_max, -r_max]):
        if not metric.contains(corner):
            raise TubeExceedsChart(f"tube (L={L}, r={r_max}) leaves the chart of {metric}")
    step = r_max / 50.0
    pts = _tube_points(metric, L, r_max, step)
    n = metric.dim
    rng = np.random.default_rng(20240611)
    if n == 2:
        planes = [(np.array([1.0, 0.0]), np.array([0.0, 1.0]))]
    else:
        planes = [
            (np.array([1.0, 0, 0]), np.array([0, 1.0, 0])),
            (np.array([1.0, 0, 0]), np.array([0, 0, 1.0])),
            (np.array([0, 1.0, 0]), np.array([0, 0, 1.0])),
        ]
        for _ in range(max(0, n_planes - 3)):
            planes.append((rng.standard_normal(3), rng.standard_normal(3)))
    sect = np.concatenate([metric.sectional_many(pts, u, v) for u, v in planes])
    k_lo, k_hi = sect.min(), sect.max()
    width = max(k_hi - k_lo, 0.1 * max(abs(k_lo), abs(k_hi), 1e-12))
    K1 = float(k_lo - 0.1 * width)
    K2 = float(k_hi + 0.1 * width)
    K = float(1.1 * np.abs(sect).max())

    xs = np.linspace(-L, L, 201)
    kap2 = np.empty_like(xs)
    kap3 = np.zeros_like(xs)
    for i, x in enumerate(xs):
        form = metric.normal_curvature_form(x)
        if metric.dim == 2:
            kap2[i] = form[0, 0]
        else:
            ev = np.linalg.eigvalsh(form)
            kap2[i], kap3[i] = ev[0], ev[1]
    k2 = float(kap2.min())
    K2_dir = float(kap2.max())
    K3 = float(np.abs(kap3).max())
    kappa2_origin = float(kap2[len(xs) // 2])
    pinching_ok = bool(
        kappa2_origin < 0
        and 9 * kappa2_origin / 8 < k2 <= K2_dir < 7 * kappa2_origin / 8
    )
    return CurvatureBounds(
        K1=K1, K2=K2, K=K, k2=k2, K2_dir=K2_dir, K3=K3,
        kappa2_origin=kappa2_origin, pinching_ok=pinching_ok,
    )


def grad_norm_samples(metric: Metric, L: float, r_max: float, n_samples: int = 60) -> dict:
    """Sampled sup norms of |R| and |∇R| (covariant) plus a coordinate
    finite-difference proxy for |∇²R| over the tube."""
    rng = np.random.default_rng(7)
    n = metric.dim
    max_r = 0.0
    max_dr = 0.0
    max_d2r = 0.0
    h = 1e-4
    for _ in range(n_samples):
        p = np.empty(n)
        p[0] = rng.uniform(-L, L)
        p[1:] = rng.uniform(-r_max, r_max, n - 1)
        max_r = max(max_r, float(np.abs(metric.riemann(p)).max()))
        dr = metric.grad_riemann(p)
        max_dr = max(max_dr, float(np.abs(dr).max()))
        for axis in range(n):
            dp = np.zeros(n)
            dp[axis] = h
            d2 = (metric.grad_riemann(p + dp) - metric.grad_riemann(p - dp)) / (2 * h)
            max_d2r = max(max_d2r, float(np.abs(d2).max()))
    return {"R": max_r, "grad_R": max_dr, "grad2_R_fd": max_d2r}
