"""Tests for the metric catalog and its curvature oracles."""

import math

import numpy as np
import pytest

from neckgap.errors import DegeneratePlane, PointOutsideChart, TubeExceedsChart
from neckgap.metrics import (
    curvature_at,
    christoffel,
    grad_norm_samples,
    make_metric,
    metric_at,
    tube_bounds,
)

E2 = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]


def _random_points(metric, n, seed):
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(n):
        if metric.family == "hyperbolic-half-plane":
            p = [rng.uniform(-2, 2), rng.uniform(0.3, 3.0)]
        elif metric.family == "sphere-diag":
            p = [rng.uniform(0.3, math.pi - 0.3), rng.uniform(-2, 2)]
        else:
            p = [rng.uniform(-1, 1)] + list(rng.uniform(-0.5, 0.5, metric.dim - 1))
        pts.append(np.array(p))
    return pts


ALL_METRICS = [
    make_metric("euclidean"),
    make_metric("hyperbolic"),
    make_metric("hyperbolic-half-plane"),
    make_metric("pinched", base=1.0, amp=0.5, freq=2.0),
    make_metric("mixed3d", a=1.0, b=0.5),
    make_metric("sphere-diag"),
]


def test_metric_closed_forms():
    hyp = make_metric("hyperbolic")
    mt = metric_at(hyp, [0.3, 0.7])
    assert mt.g[0, 0] == pytest.approx(math.cosh(0.7) ** 2, rel=1e-14)
    assert mt.g[1, 1] == pytest.approx(1.0)
    assert mt.g[0, 1] == 0.0
    assert mt.sqrt_det == pytest.approx(math.cosh(0.7), rel=1e-14)

    pin = make_metric("pinched", base=1.0)
    assert pin.g([0.0, 1.0])[0, 0] == pytest.approx(2.38110, abs=5e-6)

    hp = make_metric("hyperbolic-half-plane")
    g = hp.g([1.2, 0.5])
    assert g[0, 0] == pytest.approx(4.0) and g[1, 1] == pytest.approx(4.0)


def test_metric_inverse_and_symmetry():
    for metric in ALL_METRICS:
        for p in _random_points(metric, 5, seed=1):
            mt = metric_at(metric, p)
            assert np.allclose(mt.g, mt.g.T, atol=1e-14)
            assert np.allclose(mt.g @ mt.g_inv, np.eye(metric.dim), atol=1e-12)
            assert mt.sqrt_det == pytest.approx(
                math.sqrt(np.linalg.det(mt.g)), rel=1e-12
            )


def test_christoffel_matches_finite_differences():
    h = 1e-4
    for metric in ALL_METRICS:
        for p in _random_points(metric, 3, seed=2):
            gam = christoffel(metric, p)
            n = metric.dim
            dg = np.empty((n, n, n))
            for m in range(n):
                dp = np.zeros(n)
                dp[m] = h
                dg[m] = (metric.g(p + dp) - metric.g(p - dp)) / (2 * h)
            gi = metric.g_inv(p)
            ref = np.empty((n, n, n))
            for k in range(n):
                for i in range(n):
                    for j in range(n):
                        ref[k, i, j] = 0.5 * sum(
                            gi[k, l] * (dg[i][j, l] + dg[j][i, l] - dg[l][i, j])
                            for l in range(n)
                        )
            assert np.abs(gam - ref).max() < 1e-6


def test_riemann_symmetries_and_bianchi():
    for metric in ALL_METRICS:
        for p in _random_points(metric, 3, seed=3):
            r = metric.riemann(p)
            scale = max(np.abs(r).max(), 1.0)
            assert np.abs(r + r.transpose(1, 0, 2, 3)).max() < 1e-10 * scale
            assert np.abs(r + r.transpose(0, 1, 3, 2)).max() < 1e-10 * scale
            assert np.abs(r - r.transpose(2, 3, 0, 1)).max() < 1e-10 * scale
            bianchi = r + r.transpose(1, 2, 0, 3) + r.transpose(2, 0, 1, 3)
            assert np.abs(bianchi).max() < 1e-10 * scale


def test_sectional_basis_invariance():
    rng = np.random.default_rng(4)
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    p = np.array([0.2, 0.1, -0.15])
    u = rng.standard_normal(3)
    v = rng.standard_normal(3)
    kappa, _ = curvature_at(m3, p, (u, v))
    for _ in range(10):
        a, b, c, d = rng.standard_normal(4)
        if abs(a * d - b * c) < 0.1:
            continue
        k2, _ = curvature_at(m3, p, (a * u + b * v, c * u + d * v))
        assert k2 == pytest.approx(kappa, rel=1e-10)


def test_closed_form_curvatures():
    for p in _random_points(make_metric("hyperbolic"), 5, seed=5):
        k, _ = curvature_at(make_metric("hyperbolic"), p, E2)
        assert k == pytest.approx(-1.0, abs=1e-12)
    for p in _random_points(make_metric("hyperbolic-half-plane"), 5, seed=6):
        k, _ = curvature_at(make_metric("hyperbolic-half-plane"), p, E2)
        assert k == pytest.approx(-1.0, abs=1e-12)
    for p in _random_points(make_metric("sphere-diag"), 5, seed=7):
        k, _ = curvature_at(make_metric("sphere-diag"), p, E2)
        assert k == pytest.approx(1.0, abs=1e-12)
    k, _ = curvature_at(make_metric("euclidean"), [0.4, -0.2], E2)
    assert k == 0.0


def test_pinched_curvature_profile():
    pin = make_metric("pinched", base=1.0, amp=0.5, freq=2.0)
    for x in [-0.8, 0.0, 0.37, 1.1]:
        kx = 1.0 + 0.5 * (1 + math.sin(2 * x)) / 2
        k, _ = curvature_at(pin, [x, 1e-7], E2)
        assert k == pytest.approx(-kx * kx, rel=1e-6)


def test_mixed3d_axis_curvatures():
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    e = np.eye(3)
    k12, _ = curvature_at(m3, [0.1, 0, 0], (e[0], e[1]))
    k13, _ = curvature_at(m3, [0.1, 0, 0], (e[0], e[2]))
    k23, _ = curvature_at(m3, [0.1, 0, 0], (e[1], e[2]))
    assert k12 == pytest.approx(-1.0, abs=1e-12)
    assert k13 == pytest.approx(0.25, abs=1e-12)
    assert k23 == pytest.approx(0.0, abs=1e-12)


def test_chart_and_plane_errors():
    hp = make_metric("hyperbolic-half-plane")
    with pytest.raises(PointOutsideChart):
        metric_at(hp, [0.0, -0.5])
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    u = np.array([1.0, 2.0, 0.0])
    with pytest.raises(DegeneratePlane):
        curvature_at(m3, [0, 0, 0], (u, 3.0 * u))


def test_tube_bounds_mixed3d_example():
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    cb = tube_bounds(m3, 0.3, 0.2)
    assert cb.kappa2_origin == pytest.approx(-1.0, abs=1e-12)
    assert cb.K3 == pytest.approx(0.25, abs=1e-12)
    assert cb.k2 <= cb.K2_dir < 0
    assert cb.pinching_ok
    # widened sandwich really contains the raw samples
    assert cb.K1 < -1.0 < 0.25 < cb.K2
    assert cb.K >= 1.0


def test_tube_bounds_gates():
    # zero curvature has no negative kappa_2: the pinching gate must fail
    cb = tube_bounds(make_metric("euclidean"), 1.0, 0.2)
    assert not cb.pinching_ok
    # strongly varying pinched metric violates the 9/8 - 7/8 pinching window
    pin = make_metric("pinched", base=1.0, amp=2.0, freq=1.0, phase=1.0)
    cb = tube_bounds(pin, 2.0, 0.2)
    assert not cb.pinching_ok
    with pytest.raises(TubeExceedsChart):
        tube_bounds(make_metric("hyperbolic", y_max=0.5), 1.0, 0.8)


def test_grad_norms_symmetric_spaces():
    # hyperbolic plane is locally symmetric: covariant derivative of R vanishes
    norms = grad_norm_samples(make_metric("hyperbolic"), 1.0, 0.5, n_samples=12)
    assert norms["R"] > 0.9
    assert norms["grad_R"] < 1e-10
    norms = grad_norm_samples(make_metric("euclidean"), 1.0, 0.5, n_samples=5)
    assert norms["R"] == 0.0 and norms["grad_R"] == 0.0


def test_vectorized_evaluation_matches_pointwise():
    pin = make_metric("pinched", base=1.0, amp=0.5, freq=2.0)
    rng = np.random.default_rng(8)
    pts = np.column_stack([rng.uniform(-1, 1, 40), rng.uniform(-0.5, 0.5, 40)])
    gi = pin.g_inv_many(pts)
    sd = pin.sqrt_det_many(pts)
    rm = pin.riemann_many(pts)
    for i in range(0, 40, 7):
        assert np.allclose(gi[i], pin.g_inv(pts[i]), atol=1e-14)
        assert sd[i] == pytest.approx(pin.sqrt_det(pts[i]), rel=1e-14)
        assert np.allclose(rm[i], pin.riemann(pts[i]), atol=1e-12)
