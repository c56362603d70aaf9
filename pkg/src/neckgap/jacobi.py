"""Jacobi fields along the axis geodesic, barriers, and comparison audits.

All fields are integrated in the parallel coordinate frame of the axis
y = 0, where the normal components satisfy J'' + A(x) J = 0 with
A_ab(x) = <R(e_a, gamma') gamma', e_b>.  The eigenvalues of A are the
directional curvatures kappa_2(x) <= kappa_3(x); for surfaces A is the
1x1 matrix (kappa(x)).

Barriers are closed-form constant-coefficient super/sub-solutions that
sandwich the height component J^y between prescribed endpoint heights,
with stiffness -kappa_2(0)/2 (upper, flatter) and -3*kappa_2(0)/2
(lower, stiffer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    AuditFailed,
    EigenvalueCollision,
    GateFailed,
    HypothesisViolation,
    InvalidBoundaryHeights,
    NearConjugate,
    NoConvergence,
)
from .metrics import Metric

_RTOL = 1e-11
_ATOL = 1e-12


def curvature_form(metric: Metric) -> Callable[[float], np.ndarray]:
    """A(x) on the normal bundle of the axis, as a callable matrix."""

    def A(x: float) -> np.ndarray:
        return metric.normal_curvature_form(float(x))

    return A


@dataclass
class JacobiField:
    """Normal components of a Jacobi field along the axis, with dense output."""

    span: tuple[float, float]
    n_normal: int
    _sol: object = field(repr=False)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self._sol(x)[: self.n_normal].T

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self._sol(x)[self.n_normal :].T

    def norm(self, x):
        return np.linalg.norm(np.atleast_2d(self.value(x)), axis=1)

    def residual(self, A: Callable[[float], np.ndarray], n_samples: int = 40) -> float:
        """Max |J'' + A J| by centered differences on the dense output."""
        a, b = self.span
        h = abs(b - a) * 1e-4
        xs = np.linspace(a + 2 * h, b - 2 * h, n_samples)
        worst = 0.0
        for x in xs:
            jpp = (self.value(x + h) - 2 * self.value(x) + self.value(x - h)) / h**2
            worst = max(worst, float(np.abs(jpp + A(x) @ self.value(x)).max()))
        return worst


def _integrate(A: Callable[[float], np.ndarray], a: float, b: float,
               J0: np.ndarray, dJ0: np.ndarray) -> JacobiField:
    m = len(J0)

    def rhs(x, state):
        j = state[:m]
        dj = state[m:]
        return np.concatenate([dj, -(A(x) @ j)])

    sol = solve_ivp(rhs, (a, b), np.concatenate([J0, dJ0]), method="DOP853",
                    rtol=_RTOL, atol=_ATOL, dense_output=True)
    if not sol.success:
        raise NoConvergence(residual=float("nan"))
    return JacobiField(span=(a, b), n_normal=m, _sol=sol.sol)


def integrate_jacobi_ivp(metric_or_A, J0, dJ0, span=(0.0, 1.0)) -> JacobiField:
    """Integrate J'' + A(x) J = 0 with initial value data at span[0].

    The first argument is either a catalog metric (A taken on its axis)
    or a callable x -> A(x) matrix, which admits perturbed or rotated
    curvature forms.
    """
    A = curvature_form(metric_or_A) if isinstance(metric_or_A, Metric) else metric_or_A
    J0 = np.atleast_1d(np.asarray(J0, dtype=float))
    dJ0 = np.atleast_1d(np.asarray(dJ0, dtype=float))
    return _integrate(A, span[0], span[1], J0, dJ0)


def jacobi_bvp(metric_or_A, a: float, V_p, b: float, V_q) -> JacobiField:
    """Jacobi field with prescribed normal components at x=a and x=b.

    Solved from two matrix IVP basis solutions; an ill-conditioned basis
    matrix (cond > 1e10) signals a near-conjugate pair of endpoints.
    """
    A = curvature_form(metric_or_A) if isinstance(metric_or_A, Metric) else metric_or_A
    V_p = np.atleast_1d(np.asarray(V_p, dtype=float))
    V_q = np.atleast_1d(np.asarray(V_q, dtype=float))
    m = len(V_p)

    def rhs(x, state):
        u = state[: m * m].reshape(m, m)
        w = state[m * m : 2 * m * m].reshape(m, m)
        du = state[2 * m * m : 3 * m * m].reshape(m, m)
        dw = state[3 * m * m :].reshape(m, m)
        Ax = A(x)
        return np.concatenate([du.ravel(), dw.ravel(),
                               (-Ax @ u).ravel(), (-Ax @ w).ravel()])

    eye = np.eye(m)
    zero = np.zeros((m, m))
    state0 = np.concatenate([eye.ravel(), zero.ravel(), zero.ravel(), eye.ravel()])
    sol = solve_ivp(rhs, (a, b), state0, method="DOP853", rtol=_RTOL, atol=_ATOL)
    if not sol.success:
        raise NoConvergence(residual=float("nan"))
    Ub = sol.y[: m * m, -1].reshape(m, m)
    Wb = sol.y[m * m : 2 * m * m, -1].reshape(m, m)
    svals = np.linalg.svd(Wb, compute_uv=False)
    # scale-aware conditioning guard (covers the scalar case where the
    # raw condition number is identically 1)
    if svals[-1] < 1e-10 * max(1.0, svals[0], abs(b - a)):
        raise NearConjugate(f"BVP basis matrix nearly singular on [{a}, {b}]")
    c = np.linalg.solve(Wb, V_q - Ub @ V_p)
    fld = _integrate(A, a, b, V_p, c)
    res = max(np.abs(fld.value(a) - V_p).max(), np.abs(fld.value(b) - V_q).max())
    if res > 1e-9 * max(1.0, np.abs(V_p).max(), np.abs(V_q).max()):
        raise NoConvergence(residual=float(res))
    return fld


# ---------------------------------------------------------------------------
# Rotation angle of the curvature form eigenframe
# ---------------------------------------------------------------------------


@dataclass
class RotationAngle:
    xs: np.ndarray
    theta: np.ndarray            # unwrapped angle of xi_2 against d/dy
    kappa2: np.ndarray
    kappa3: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.xs, self.theta)

    def kappa2_at(self, x):
        return np.interp(x, self.xs, self.kappa2)

    def kappa3_at(self, x):
        return np.interp(x, self.xs, self.kappa3)


def rotation_angle(metric_or_A, a: float, b: float, n_samples: int = 401) -> RotationAngle:
    """Angle theta(x) of the low eigenvector of A(x) against the y axis.

    Eigenvectors are sign-aligned with the previous sample for
    continuity; an eigenvalue gap below 1e-8 aborts.
    """
    A = curvature_form(metric_or_A) if isinstance(metric_or_A, Metric) else metric_or_A
    xs = np.linspace(a, b, n_samples)
    theta = np.empty(n_samples)
    k2 = np.empty(n_samples)
    k3 = np.empty(n_samples)
    prev = None
    for i, x in enumerate(xs):
        Ax = np.atleast_2d(A(x))
        if Ax.shape == (1, 1):
            theta[i], k2[i], k3[i] = 0.0, Ax[0, 0], Ax[0, 0]
            continue
        vals, vecs = np.linalg.eigh(Ax)
        if vals[1] - vals[0] < 1e-8:
            raise EigenvalueCollision(f"curvature eigenvalue gap < 1e-8 at x={x}")
        xi2 = vecs[:, 0]
        if prev is not None and xi2 @ prev < 0:
            xi2 = -xi2
        elif prev is None and xi2[0] < 0:
            xi2 = -xi2
        prev = xi2
        theta[i] = math.atan2(xi2[1], xi2[0])
        k2[i], k3[i] = vals
    theta = np.unwrap(theta)
    # gauge: theta measured relative to the value at x closest to 0
    i0 = int(np.argmin(np.abs(xs)))
    theta = theta - theta[i0]
    return RotationAngle(xs=xs, theta=theta, kappa2=k2, kappa3=k3)


def rotated_form(angle: RotationAngle) -> Callable[[float], np.ndarray]:
    """Reconstruct A(x) from its eigen-data: Q(theta) diag(k2,k3) Q(theta)^T."""

    def A(x):
        t = angle(x)
        c, s = math.cos(t), math.sin(t)
        q = np.array([[c, -s], [s, c]])
        return q @ np.diag([angle.kappa2_at(x), angle.kappa3_at(x)]) @ q.T

    return A


# ---------------------------------------------------------------------------
# Barriers
# ---------------------------------------------------------------------------


@dataclass
class Barrier:
    """cosh-combination solution of j'' = mu^2 j through two endpoint heights."""

    kind: str                    # "upper" or "lower"
    stiffness: float             # mu^2
    a: float
    b: float
    height_a: float
    height_b: float
    _c: tuple[float, float] = field(repr=False, default=(0.0, 0.0))

    def __post_init__(self):
        mu = math.sqrt(self.stiffness)
        mat = np.array([
            [math.cosh(mu * self.a), math.sinh(mu * self.a)],
            [math.cosh(mu * self.b), math.sinh(mu * self.b)],
        ])
        c = np.linalg.solve(mat, np.array([self.height_a, self.height_b]))
        self._c = (float(c[0]), float(c[1]))

    def __call__(self, x):
        mu = math.sqrt(self.stiffness)
        x = np.asarray(x, dtype=float)
        return self._c[0] * np.cosh(mu * x) + self._c[1] * np.sinh(mu * x)

    def minimum(self, n: int = 2001) -> tuple[float, float]:
        xs = np.linspace(self.a, self.b, n)
        vals = self(xs)
        i = int(np.argmin(vals))
        return float(xs[i]), float(vals[i])


def barriers(kappa20: float, a: float, b: float, V_py: float, V_qy: float
             ) -> tuple[Barrier, Barrier]:
    """Lower and upper barriers (j_*, j*) for the height component J^y."""
    if kappa20 >= 0:
        raise InvalidBoundaryHeights(f"kappa_2(0) must be negative, got {kappa20}")
    if min(V_py, V_qy) <= 0.75:
        raise InvalidBoundaryHeights(
            f"boundary heights must exceed 3/4, got ({V_py}, {V_qy})"
        )
    lower = Barrier("lower", 1.5 * abs(kappa20), a, b, V_py, V_qy)
    upper = Barrier("upper", 0.5 * abs(kappa20), a, b, V_py, V_qy)
    return lower, upper


# ---------------------------------------------------------------------------
# Sturm comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SturmReport:
    passed: bool
    min_margin: float
    xs: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    width_note: str


def sturm_compare(g1: Callable[[float], float], K: float, a: float, b: float,
                  boundary=(1.0, 1.0), n_samples: int = 201) -> SturmReport:
    """Dominance phi < psi on (a,b) for phi'' = -g1 phi vs psi'' = -K psi.

    Requires 0 < g1(x) < K on (a,b) and the width bound b - a < pi/sqrt(K)
    (the sharp no-conjugate-point hypothesis for the stiffer equation).
    """
    if K <= 0:
        raise HypothesisViolation("comparison constant K must be positive")
    if b - a >= math.pi / math.sqrt(K):
        raise HypothesisViolation(
            f"interval width {b - a:.6g} >= pi/sqrt(K) = {math.pi / math.sqrt(K):.6g}"
        )
    xs = np.linspace(a, b, n_samples)
    gvals = np.array([g1(x) for x in xs])
    if gvals.min() <= 0 or gvals.max() >= K:
        raise HypothesisViolation(
            f"g1 range [{gvals.min():.6g}, {gvals.max():.6g}] not inside (0, {K})"
        )
    va, vb = boundary
    # psi in closed form
    rk = math.sqrt(K)
    mat = np.array([[math.cos(rk * a), math.sin(rk * a)],
                    [math.cos(rk * b), math.sin(rk * b)]])
    c = np.linalg.solve(mat, np.array([va, vb]))
    psi = c[0] * np.cos(rk * xs) + c[1] * np.sin(rk * xs)
    # phi by shooting from two scalar basis IVPs
    Afun = lambda x: np.array([[g1(x)]])
    fld = jacobi_bvp(Afun, a, [va], b, [vb])
    phi = fld.value(xs)[:, 0]
    margin = psi[1:-1] - phi[1:-1]
    return SturmReport(
        passed=bool(np.all(margin > 0)),
        min_margin=float(margin.min()),
        xs=xs,
        phi=phi,
        psi=psi,
        width_note="width hypothesis applied as b - a < pi/sqrt(K)",
    )


# ---------------------------------------------------------------------------
# Length gate and flattening audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LengthGate:
    L: float
    rho: float
    kappa20: float
    K: float
    cond_envelope: bool          # cos(sqrt(K) L) > 1/2
    cond_rotation: bool          # sup sin theta < |kappa20| / (16 K rho)
    cond_lower_barrier: bool     # cosh(sqrt(3|kappa20|/2) L) <= 3/2
    cond_monotone: bool          # sinh^2(sqrt(|kappa20|/2) L) < 1/20
    max_L: float

    @property
    def passed(self) -> bool:
        return (self.cond_envelope and self.cond_rotation
                and self.cond_lower_barrier and self.cond_monotone)


def _gate_conditions(kappa20: float, K: float, rho: float, sup_sin_theta: float,
                     L: float) -> tuple[bool, bool, bool, bool]:
    c1 = math.cos(math.sqrt(K) * L) > 0.5
    c2 = sup_sin_theta < abs(kappa20) / (16 * K * rho)
    c3 = math.cosh(math.sqrt(1.5 * abs(kappa20)) * L) <= 1.5
    c4 = math.sinh(math.sqrt(0.5 * abs(kappa20)) * L) ** 2 < 0.05
    return c1, c2, c3, c4


def length_gate(kappa20: float, K: float, rho: float, theta, L: float) -> LengthGate:
    """Evaluate the four admissibility conditions on the slab half-length L.

    ``theta`` is a RotationAngle, a callable, or a constant; the rotation
    condition uses its sup over [-L, L].  ``max_L`` is the largest
    admissible half-length for the same data, found by bisection.
    """
    if callable(theta):
        xs = np.linspace(-L, L, 201)
        sup_sin = float(np.abs(np.sin([theta(x) for x in xs])).max())
    else:
        sup_sin = abs(math.sin(float(theta)))
    conds = _gate_conditions(kappa20, K, rho, sup_sin, L)
    lo, hi = 0.0, 10.0
    if all(_gate_conditions(kappa20, K, rho, sup_sin, hi)):
        max_L = hi
    elif not all(_gate_conditions(kappa20, K, rho, sup_sin, 1e-12)):
        max_L = 0.0
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if all(_gate_conditions(kappa20, K, rho, sup_sin, mid)):
                lo = mid
            else:
                hi = mid
        max_L = lo
    return LengthGate(L=L, rho=rho, kappa20=kappa20, K=K,
                      cond_envelope=conds[0], cond_rotation=conds[1],
                      cond_lower_barrier=conds[2], cond_monotone=conds[3],
                      max_L=max_L)


@dataclass(frozen=True)
class FlatteningReport:
    passed: bool
    trials: int
    seed: int
    worst_lower_margin: float    # min over samples of J^y - j_*
    worst_upper_margin: float    # min over samples of j* - J^y
    worst_envelope_margin: float  # min of rho cos(sqrt(K) x) - |J|
    rows: list                   # (trial, V_p, V_q, min margin, pass)


def flattening_audit(metric_or_A, kappa20: float, K: float, rho: float, L: float,
                     gate: LengthGate, trials: int = 200, seed: int = 20240613,
                     r: float = 0.0, height_cap: float = 1.0) -> FlatteningReport:
    """Randomized check that BVP Jacobi fields are barrier-sandwiched.

    Boundary heights V^y are drawn in (3/4, 1.1 * height_cap); the
    remaining components are capped so that |V| < rho cos(sqrt(K) L).
    Each trial asserts j_* <= J^y <= j* and |J| <= rho cos(sqrt(K) x) at
    interior samples, up to a slack of max(1e-9, r^2).
    """
    if not gate.passed:
        raise GateFailed(f"length gate rejected L={gate.L}: {gate}")
    if rho <= 2:
        raise GateFailed(f"rho must exceed 2, got {rho}")
    A = curvature_form(metric_or_A) if isinstance(metric_or_A, Metric) else metric_or_A
    m = np.atleast_2d(A(0.0)).shape[0]
    rng = np.random.default_rng(seed)
    xs = np.linspace(-L, L, 101)[1:-1]
    env = rho * np.cos(math.sqrt(K) * xs)
    cap_norm = rho * math.cos(math.sqrt(K) * L)
    tol = max(1e-9, r * r)
    rows = []
    worst_lo = worst_up = worst_env = math.inf
    all_ok = True
    for trial in range(trials):
        vy = rng.uniform(0.751, 1.1 * height_cap, size=2)
        V_p = np.zeros(m)
        V_q = np.zeros(m)
        V_p[0], V_q[0] = vy
        if m > 1:
            room_p = math.sqrt(max(cap_norm**2 - vy[0] ** 2, 0.0))
            room_q = math.sqrt(max(cap_norm**2 - vy[1] ** 2, 0.0))
            V_p[1] = rng.uniform(-0.95 * room_p, 0.95 * room_p)
            V_q[1] = rng.uniform(-0.95 * room_q, 0.95 * room_q)
        fld = jacobi_bvp(A, -L, V_p, L, V_q)
        lower, upper = barriers(kappa20, -L, L, vy[0], vy[1])
        jy = fld.value(xs)[:, 0]
        lo_m = float((jy - lower(xs)).min())
        up_m = float((upper(xs) - jy).min())
        env_m = float((env - fld.norm(xs)).min())
        ok = lo_m > -tol and up_m > -tol and env_m > -tol
        worst_lo = min(worst_lo, lo_m)
        worst_up = min(worst_up, up_m)
        worst_env = min(worst_env, env_m)
        all_ok = all_ok and ok
        rows.append((trial, tuple(V_p), tuple(V_q),
                     min(lo_m, up_m, env_m), ok))
    report = FlatteningReport(passed=all_ok, trials=trials, seed=seed,
                              worst_lower_margin=worst_lo,
                              worst_upper_margin=worst_up,
                              worst_envelope_margin=worst_env, rows=rows)
    if not all_ok:
        bad = [row for row in rows if not row[4]][0]
        raise AuditFailed(f"flattening audit failed at trial {bad[0]}",
                          witness=bad)
    return report
