"""Tests for eigenfunction diagnostics and the gap estimate chain."""

import math

import numpy as np
import pytest

from neckgap.analysis import (
    ansatz_report,
    continuity_scan,
    cutoff,
    doubling_audit,
    gap_decay_fit,
    gradient_bound_constant,
    neck_sup,
    neck_suppression,
    refine_neck_tail,
    vertical_profile,
    _gradient_at_vertices,
)
from neckgap.domains import build_domain_2d
from neckgap.errors import (
    DeltaTooLarge,
    InsufficientData,
    InsufficientSweep,
    InterpolationOutsideMesh,
    NoSignChange,
    NonDecaying,
    PositiveSlope,
    ProfileTooCoarse,
)
from neckgap.fem import assemble, smallest_eigenpairs
from neckgap.meshing import rectangle_mesh, tube_mesh_2d
from neckgap.metrics import make_metric

EU = make_metric("euclidean")
HYP = make_metric("hyperbolic")


class _Box:
    """Rectangle [0,a] x [0,b] through the slab-domain interface."""

    def __init__(self, a, b):
        self.a, self.b = a, b

    def y_plus(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.b)

    def y_minus(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


def _rect_run(a=1.0, b=0.5, h=0.02):
    forms = assemble(rectangle_mesh(a, b, h), EU)
    p1, p2 = smallest_eigenpairs(forms, 2)
    return forms, p1, p2


def _tube_run(r=0.05, L=4.0, t=2.0):
    dom = build_domain_2d(HYP, r, L, t)
    forms = assemble(tube_mesh_2d(dom, r / 8), HYP)
    p1, p2 = smallest_eigenpairs(forms, 2)
    return dom, forms, refine_neck_tail(p1, forms, 0.0, L), p2


def test_vertical_profile_closed_form():
    forms, p1, _ = _rect_run()
    xg = np.linspace(0.05, 0.95, 61)
    prof = vertical_profile(p1, forms, _Box(1.0, 0.5), xg)
    # M-normalized product state: V(x) = (4/(ab)) sin^2(pi x/a) * b/2
    exact = 2.0 * np.sin(np.pi * xg) ** 2
    assert np.max(np.abs(prof.V / exact - 1)) < 0.01
    # mirror symmetry of the symmetric configuration (P1 interpolation
    # with alternating diagonals leaves ~5e-4 asymmetry at h = 0.02)
    sym = np.abs(prof.V - prof.V[::-1]) / prof.V.max()
    assert sym.max() < 1e-3
    with pytest.raises(InterpolationOutsideMesh):
        vertical_profile(p1, forms, _Box(1.0, 0.5), np.array([-0.5, 0.5]))


def test_doubling_audit_hyperbolic_and_control():
    dom, forms, p1, _ = _tube_run()
    L = 4.0
    xg = np.linspace(-L / 9 * 0.99, L / 9 * 0.99, 121)
    prof = vertical_profile(p1, forms, dom, xg)
    rep = doubling_audit(prof, 0.05, L)
    assert rep.passed and rep.C_hat > 0
    # doubling length through the neck is O(r)
    assert prof.doubling_length < 10 * 0.05
    # V exhibits crude neck bounds: tiny at center for sup-normalized h
    hsup = np.abs(p1.function).max()
    assert prof.V[60] / hsup**2 <= 2.2 * 2 * float(dom.y_plus(0.0))

    forms2, q1, _ = _rect_run(a=2.0, b=0.5, h=0.02)
    xg2 = np.linspace(1.0 - 2 / 9 * 0.99, 1.0 + 2 / 9 * 0.99, 61)
    prof2 = vertical_profile(q1, forms2, _Box(2.0, 0.5), xg2)
    rep2 = doubling_audit(prof2, 0.25, 2.0, center=1.0)
    assert not rep2.passed and rep2.C_hat < 0


def test_doubling_audit_coarse_error():
    forms, p1, _ = _rect_run(h=0.05)
    prof = vertical_profile(p1, forms, _Box(1.0, 0.5), np.linspace(0.4, 0.6, 11))
    with pytest.raises(ProfileTooCoarse):
        doubling_audit(prof, 0.25, 1.8, center=0.5)


def test_offset_neck_profile_decreasing():
    # neck near the right edge: V decreases toward the Dirichlet end
    # L is capped: the flaring boundary geodesic at width 0.05 escapes
    # the chart near |x| = 3.7, so a strongly offset tube must be shorter
    L = 2.0
    dom, forms, p1, _ = _tube_run(L=L, t=L / 18)
    xg = np.linspace(-L / 9, L / 18 - 0.02, 80)
    prof = vertical_profile(p1, forms, dom, xg)
    assert np.all(np.diff(prof.V) < 0)
    # drop across the window is consistent with the measured doubling
    # length (at least half the predicted number of halvings)
    span = xg[-1] - xg[0]
    assert prof.V[-1] < prof.V[0] * 2 ** (-0.5 * span / prof.doubling_length)
    assert prof.V[-1] < 1e-7 * prof.V[0]


def test_refine_neck_tail_consistency():
    dom, forms, p1raw, _ = (None, None, None, None)
    dom = build_domain_2d(HYP, 0.05, 4.0, 2.0)
    forms = assemble(tube_mesh_2d(dom, 0.05 / 8), HYP)
    p1, _ = smallest_eigenpairs(forms, 2)
    p1r = refine_neck_tail(p1, forms, 0.0, 4.0)
    big = np.abs(p1.function) > 1e-5 * np.abs(p1.function).max()
    rel = np.abs(p1r.function[big] - p1.function[big]) / np.abs(p1.function[big])
    assert rel.max() < 1e-5
    # per-column maxima: the rescued tail reaches far below the raw
    # eigenvector noise floor and its log profile is smooth, where the
    # raw vector jitters at the ~1e-13 relative level
    xs = np.round(forms.mesh.points[:, 0], 12)
    cols = np.unique(xs[np.abs(xs) < 0.3])
    refined = np.array([np.abs(p1r.function[xs == c]).max() for c in cols])
    raw = np.array([np.abs(p1.function[xs == c]).max() for c in cols])
    scale = np.abs(p1r.function).max()
    assert refined.min() < raw.min() / 10
    assert refined.min() < 1e-14 * scale
    curv = np.abs(np.diff(np.log(refined), 2))
    assert curv.max() < 0.05


def test_gradient_bound_constant():
    from scipy.optimize import minimize_scalar

    lam, K, n = 100.0, 1.0, 2
    a0 = 0.5 * math.sqrt((n - 1) * K)
    c1 = 2 * math.sqrt(a0) * (1 + 4 ** (2 / 3)) ** 0.25 * (1 + 5 * 2 ** (-1 / 3))
    c2 = math.sqrt(1 + 2 ** (1 / 3)) * (1 + 4 ** (2 / 3)) / 2

    def obj(logt):
        t = math.exp(logt)
        return (9.5 * a0 + c1 / (t * math.pi) ** 0.25
                + c2 / math.sqrt(t * math.pi)) * math.exp(lam * t)

    oracle = minimize_scalar(obj, bounds=(-12, 2), method="bounded").fun
    assert gradient_bound_constant(lam, K, n) == pytest.approx(oracle, rel=1e-3)
    # K = 0, theta = 0: only the two t-terms remain
    b0 = gradient_bound_constant(lam, 0.0, n)
    t_ref = 1e-3
    assert b0 < (c1 / (t_ref * math.pi) ** 0.25
                 + c2 / math.sqrt(t_ref * math.pi)) * math.exp(lam * t_ref)
    with pytest.raises(ValueError):
        gradient_bound_constant(-1.0, 1.0, 2)


def test_gradient_bound_dominates_mesh_gradient():
    dom, forms, p1, _ = _tube_run()
    g = _gradient_at_vertices(forms, p1.function)
    ginv = forms.metric.g_inv_many(forms.mesh.points)
    gnorm = np.sqrt(np.einsum("pa,pab,pb->p", g, ginv, g))
    ratio = gnorm.max() / np.abs(p1.function).max()
    assert ratio <= gradient_bound_constant(p1.value, 1.0, 2)


def test_neck_suppression_fit():
    rs = np.array([0.1, 0.07, 0.05, 0.035])
    fit = neck_suppression(rs, 3.0 * np.exp(-2.5 / rs))
    assert fit.c == pytest.approx(2.5, rel=1e-9)
    assert fit.C == pytest.approx(3.0, rel=1e-9)
    assert fit.r_squared > 0.999999
    with pytest.raises(InsufficientSweep):
        neck_suppression(rs[:3], np.exp(-1 / rs[:3]))
    with pytest.raises(PositiveSlope):
        neck_suppression(rs, np.array([0.4, 0.4, 0.4, 0.4]))


def test_cutoff_profile():
    psi = cutoff(0.0, 0.05, 0.5)
    assert psi.v == pytest.approx(math.exp(-10.0), rel=1e-12)
    assert psi(psi.v) == 1.0 and psi(-psi.v) == -1.0 and psi(0.0) == 0.0
    xs = np.linspace(-2 * psi.v, 2 * psi.v, 20001)
    assert np.abs(psi.derivative(xs)).max() <= 2 / psi.v
    assert np.allclose(psi(xs), -psi(-xs), atol=1e-15)
    assert np.abs(psi(xs)).max() <= 1.0
    with pytest.raises(DeltaTooLarge):
        cutoff(0.0, 0.05, 0.5, c_fit=0.4)


def test_ansatz_identity_resolved_strip():
    # wide, mesh-resolved transition: the nodal quotient reproduces the
    # closed-form identity bound
    forms, p1, p2 = _rect_run(a=2.0, b=0.5, h=0.01)
    psi = cutoff(1.0, 0.1, 0.1)       # v = e^{-1} = 0.37, dozens of columns
    rep = ansatz_report(p1, psi, forms, _Box(2.0, 0.5), L=1.0)
    assert rep.quotient_orth - rep.lambda1 == pytest.approx(rep.gap_bound, rel=0.05)
    # variational bound on the discrete second eigenvalue
    assert rep.quotient_orth >= p2.value * (1 - 1e-10)


def test_ansatz_euclidean_no_collapse():
    forms, p1, p2 = _rect_run(a=2.0, b=0.5, h=0.01)
    psi = cutoff(1.0, 0.1, 0.5)       # v = e^{-5}, unresolvable strip
    rep = ansatz_report(p1, psi, forms, _Box(2.0, 0.5), L=1.0)
    assert max(rep.term_I, rep.term_II) > 1.0
    assert rep.rayleigh_psi_h - rep.lambda1 > 1.0
    assert rep.gap_bound > p2.value - p1.value


def test_ansatz_neck_collapse_and_resolution_guard():
    from neckgap.errors import NeckNotResolved

    dom, forms, p1, p2 = _tube_run()
    psi = cutoff(0.0, 0.05, 0.69)
    rep = ansatz_report(p1, psi, forms, dom, L=4.0)
    assert rep.term_I < 1e-20 and rep.term_II < 1e-18
    assert rep.quotient_orth >= p2.value * (1 - 1e-10)
    assert abs(rep.F) <= rep.h1_norm2
    with pytest.raises(NeckNotResolved):
        ansatz_report(p1, psi, forms, dom, L=4e-4)


def test_continuity_scan_bisection():
    calls = []

    def evaluate(p):
        calls.append(p)
        return p - 1.2345, 1.0, None

    root = continuity_scan(0.0, 3.0, evaluate)
    assert root.parameter == pytest.approx(1.2345, abs=1e-3)
    assert abs(root.F) < 1e-3
    with pytest.raises(NoSignChange) as exc:
        continuity_scan(2.0, 3.0, evaluate)
    assert exc.value.endpoint_signs == (1.0, 1.0)


def test_gap_decay_fit():
    rs = np.array([0.1, 0.07, 0.05, 0.035])
    gaps = 5.0 * np.exp(-1.7 / rs)
    Ds = np.full(4, 2.0)
    fit = gap_decay_fit(rs, gaps, Ds)
    assert fit.c == pytest.approx(1.7, rel=1e-9)
    assert fit.C == pytest.approx(20.0, rel=1e-9)
    assert fit.r_squared > 0.9999
    with pytest.raises(InsufficientData):
        gap_decay_fit(rs[:1], gaps[:1], Ds[:1])
    with pytest.raises(NonDecaying):
        gap_decay_fit(rs, np.full(4, 29.6), Ds)


def test_neck_sup_suppressed():
    dom, forms, p1, _ = _tube_run()
    assert neck_sup(p1, forms, 0.0, 4.0) < 1e-9
    forms2, q1, _ = _rect_run(a=2.0, b=0.5)
    assert neck_sup(q1, forms2, 1.0, 2.0) > 0.5
