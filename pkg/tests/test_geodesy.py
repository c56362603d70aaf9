"""Tests for geodesic shooting, connection, transport, and Fermi charts."""

import math

import numpy as np
import pytest

from neckgap.errors import LeftChart, PointOutsideChart
from neckgap.geodesy import (
    build_fermi_chart,
    connect,
    expansion_audit,
    orthonormal_frame,
    shoot_geodesic,
    transport_frame,
)
from neckgap.metrics import make_metric


def _dist_hyperbolic_fermi(p, q):
    # closed form in coordinates where the axis y=0 is a geodesic
    return math.acosh(
        math.cosh(p[1]) * math.cosh(q[1]) * math.cosh(q[0] - p[0])
        - math.sinh(p[1]) * math.sinh(q[1])
    )


def _dist_half_plane(p, q):
    return math.acosh(1 + ((q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2) / (2 * p[1] * q[1]))


def _dist_sphere(p, q):
    return math.acos(
        math.cos(p[0]) * math.cos(q[0])
        + math.sin(p[0]) * math.sin(q[0]) * math.cos(q[1] - p[1])
    )


def test_shoot_preserves_speed_and_length():
    hyp = make_metric("hyperbolic")
    path = shoot_geodesic(hyp, [0.0, 0.0], [1.0, 0.0], 3.0)
    assert np.allclose(path.endpoint, [3.0, 0.0], atol=1e-9)
    for s in [0.5, 1.7, 2.9]:
        v = path.velocity(s)
        p = path.point(s)
        assert hyp.norm(p, v) == pytest.approx(1.0, abs=1e-9)


def test_shoot_left_chart():
    hyp = make_metric("hyperbolic", y_max=0.5)
    with pytest.raises(LeftChart):
        shoot_geodesic(hyp, [0.0, 0.0], [0.0, 1.0], 1.0)


def test_connect_against_closed_forms():
    rng = np.random.default_rng(11)
    cases = [
        (make_metric("hyperbolic"), _dist_hyperbolic_fermi,
         lambda: [rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0)]),
        (make_metric("hyperbolic-half-plane"), _dist_half_plane,
         lambda: [rng.uniform(-1, 1), rng.uniform(0.5, 2.5)]),
        (make_metric("sphere-diag"), _dist_sphere,
         lambda: [rng.uniform(0.5, math.pi - 0.5), rng.uniform(-1, 1)]),
        (make_metric("euclidean"),
         lambda p, q: math.hypot(q[0] - p[0], q[1] - p[1]),
         lambda: list(rng.uniform(-2, 2, 2))),
    ]
    for metric, oracle, draw in cases:
        for _ in range(5):
            p, q = draw(), draw()
            if np.allclose(p, q, atol=1e-3):
                continue
            res = connect(metric, p, q)
            assert res.residual < 1e-10
            assert res.distance == pytest.approx(oracle(p, q), rel=1e-8, abs=1e-10)


def test_connect_pinched_symmetry():
    # distance is symmetric even with no closed form available
    pin = make_metric("pinched", base=1.0, amp=0.5, freq=2.0)
    p, q = [0.1, 0.2], [0.9, -0.3]
    d1 = connect(pin, p, q).distance
    d2 = connect(pin, q, p).distance
    assert d1 == pytest.approx(d2, rel=1e-9)
    # triangle inequality through a midpoint detour
    m = [0.5, 0.4]
    assert d1 <= connect(pin, p, m).distance + connect(pin, m, q).distance + 1e-12


def test_transport_preserves_inner_products():
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    path = shoot_geodesic(m3, [0.0, 0.1, -0.1], [1.0, 0.05, 0.02], 0.8)
    frame = orthonormal_frame(m3, path.p0, first=path.v0)
    out = transport_frame(path, frame)
    g1 = out.T @ m3.g(path.endpoint) @ out
    assert np.allclose(g1, frame.T @ m3.g(path.p0) @ frame, atol=1e-9)


def test_sphere_holonomy_equals_triangle_area():
    sph = make_metric("sphere-diag")
    A = np.array([math.pi / 2, 0.0])
    B = np.array([math.pi / 2, 0.8])
    C = np.array([0.7, 0.4])
    rAB = connect(sph, A, B)
    rBC = connect(sph, B, C)
    rCA = connect(sph, C, A)
    a, b, c = rBC.distance, rCA.distance, rAB.distance
    s = (a + b + c) / 2
    excess = 4 * math.atan(
        math.sqrt(
            math.tan(s / 2) * math.tan((s - a) / 2)
            * math.tan((s - b) / 2) * math.tan((s - c) / 2)
        )
    )
    frame = orthonormal_frame(sph, A)
    frame = transport_frame(rAB.path, frame)
    frame = transport_frame(rBC.path, frame)
    frame = transport_frame(rCA.path, frame)
    rot = orthonormal_frame(sph, A).T @ sph.g(A) @ frame
    angle = math.atan2(rot[0, 1], rot[0, 0])
    assert abs(angle) == pytest.approx(excess, abs=1e-9)


def test_identity_fermi_chart_passthrough():
    hyp = make_metric("hyperbolic")
    ch = build_fermi_chart(hyp)
    assert ch.identity
    assert np.allclose(ch.to_manifold([0.4, 0.2]), [0.4, 0.2])
    assert np.allclose(ch.pullback_metric([0.4, 0.2]), hyp.g([0.4, 0.2]))


def test_numeric_fermi_chart_recovers_hyperbolic_form():
    # the half-plane model in Fermi coordinates along any geodesic must
    # reproduce ds^2 = cosh^2(y) dx^2 + dy^2
    hp = make_metric("hyperbolic-half-plane")
    axis = shoot_geodesic(hp, [0.0, 1.0], [0.0, 1.0], 2.0)
    ch = build_fermi_chart(hp, axis)
    for x, y in [(0.0, 0.3), (0.5, 0.2), (1.0, -0.4)]:
        g = ch.pullback_metric([x, y])
        assert g[0, 0] == pytest.approx(math.cosh(y) ** 2, abs=1e-8)
        assert abs(g[0, 1]) < 1e-8
        assert g[1, 1] == pytest.approx(1.0, abs=1e-8)


def test_expansion_audit_catalog():
    for fam, kw in [
        ("euclidean", {}),
        ("hyperbolic", {}),
        ("pinched", dict(base=1.0, amp=0.5, freq=2.0)),
        ("mixed3d", dict(a=1.0, b=0.5)),
    ]:
        audit = expansion_audit(make_metric(fam, **kw), x0=0.3 if fam != "euclidean" else 0.0)
        assert audit.passed, f"{fam}: slopes {audit.slopes}"
        assert audit.min_slope >= 2.9


def test_expansion_audit_numeric_chart():
    hp = make_metric("hyperbolic-half-plane")
    axis = shoot_geodesic(hp, [0.0, 1.0], [0.0, 1.0], 2.0)
    ch = build_fermi_chart(hp, axis)
    audit = expansion_audit(ch, x0=0.3, r0=0.2, levels=4, n_dirs=4)
    assert audit.passed
    assert audit.slopes["xx"] == pytest.approx(4.0, abs=0.3)


def test_connect_rejects_outside_chart():
    hp = make_metric("hyperbolic-half-plane")
    with pytest.raises(PointOutsideChart):
        connect(hp, [0.0, 1.0], [0.0, -1.0])
