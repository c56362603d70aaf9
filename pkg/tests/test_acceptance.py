"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints a single ``criterion NN ...: PASS`` line (pytest -v adds
the per-test verdict as well).  The four preset sweeps run once each in
module-scoped fixtures; wall times feed the runtime criteria.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import jn_zeros

from neckgap.analysis import doubling_audit, vertical_profile
from neckgap.config import preset_config
from neckgap.domains import build_domain_2d
from neckgap.fem import assemble, smallest_eigenpairs
from neckgap.geodesy import expansion_audit
from neckgap.jacobi import integrate_jacobi_ivp, sturm_compare
from neckgap.meshing import disk_mesh, rectangle_mesh, tube_mesh_2d
from neckgap.metrics import make_metric
from neckgap.runner import THREE_PI_SQ, run_experiment

TIMES: dict[str, float] = {}


def _run(name):
    t0 = time.perf_counter()
    record = run_experiment(preset_config(name))
    TIMES[name] = time.perf_counter() - t0
    return record


@pytest.fixture(scope="module")
def euclid_record():
    return _run("euclidean-control")


@pytest.fixture(scope="module")
def hyp_record():
    return _run("hyperbolic-2d")


@pytest.fixture(scope="module")
def pinched_record():
    return _run("pinched-2d")


@pytest.fixture(scope="module")
def mixed_record():
    return _run("mixed-3d")


def _verdict(num, label, passed, detail=""):
    line = f"criterion {num:02d} ({label}): {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f" -- {detail}"
    print(line)
    return passed


def _clean_rows(record):
    rows = [r for r in record.rows if not r.get("error")]
    assert len(rows) == len(record.rows), [r["error"] for r in record.rows
                                           if r.get("error")]
    return rows


def test_criterion_01_flat_eigenvalue_oracles():
    flat = make_metric("euclidean")

    t0 = time.perf_counter()
    pairs = smallest_eigenpairs(assemble(rectangle_mesh(1.0, 1.0, 0.02), flat))
    t_square = time.perf_counter() - t0
    lam1, lam2 = pairs[0].value, pairs[1].value
    sq_lam_err = abs(lam1 - 2 * math.pi**2) / (2 * math.pi**2)
    sq_gap_err = abs((lam2 - lam1) - THREE_PI_SQ) / THREE_PI_SQ

    t0 = time.perf_counter()
    d_pairs = smallest_eigenpairs(assemble(disk_mesh(0.02), flat))
    t_disk = time.perf_counter() - t0
    j01_sq = jn_zeros(0, 1)[0] ** 2
    disk_err = abs(d_pairs[0].value - j01_sq) / j01_sq

    ok = (sq_lam_err < 0.01 and sq_gap_err < 0.01 and disk_err < 0.01
          and t_square < 30 and t_disk < 30)
    assert _verdict(
        1, "flat eigenvalue oracles", ok,
        f"square lam1 err {sq_lam_err:.2e}, gap err {sq_gap_err:.2e}, "
        f"disk lam1 err {disk_err:.2e}, {t_square:.1f}s/{t_disk:.1f}s")


def test_criterion_02_flat_control_sweep(euclid_record):
    rows = _clean_rows(euclid_record)
    aspects = [euclid_record.config.L / (2 * row["r"]) for row in rows]
    floor_ok = all(row["gap_bound_D2"] >= THREE_PI_SQ for row in rows)
    near = [row["gap_bound_D2"] / THREE_PI_SQ for row, a in zip(rows, aspects)
            if a >= 10]
    tight_ok = bool(near) and max(near) <= 1.05
    ok = floor_ok and tight_ok and euclid_record.passed
    assert _verdict(
        2, "flat control gap*D^2", ok,
        f"gap*D^2 / 3pi^2 in [{min(near):.4f}, {max(near):.4f}] "
        f"over aspects {[f'{a:.0f}' for a in aspects]}")


def test_criterion_03_chart_expansion_slopes():
    hyp = preset_config("hyperbolic-2d").metric()
    m3 = preset_config("mixed-3d").metric()
    rep_h = expansion_audit(hyp)
    rep_3 = expansion_audit(m3)
    ok = (rep_h.passed and rep_3.passed
          and rep_h.min_slope >= 2.9 and rep_3.min_slope >= 2.9)
    assert _verdict(
        3, "cubic chart remainders", ok,
        f"min slopes {rep_h.min_slope:.3f} (2d), {rep_3.min_slope:.3f} (3d)")


def test_criterion_04_jacobi_comparison():
    # two-sided comparison for J'' = -kappa J, kappa in [-K^2, -1],
    # J(0) = r, J'(0) = 0: the sharp envelopes are r cosh(x) and r cosh(Kx)
    K = 1.5
    pin = make_metric("pinched", base=1.0, amp=K - 1.0, freq=2.0)
    r = 0.05
    xs = np.linspace(0.0, 1.2, 121)
    J = integrate_jacobi_ivp(pin, [r], [0.0], span=(0.0, 1.2)).norm(xs)
    sandwich_ok = bool(
        np.all(J >= r * np.cosh(xs) * (1 - 1e-4))
        and np.all(J <= r * np.cosh(K * xs) * (1 + 1e-4)))

    rng = np.random.default_rng(20240616)
    wins = 0
    for _ in range(100):
        Kc = float(rng.uniform(0.5, 4.0))
        a = float(rng.uniform(-1.0, 1.0))
        b = a + 0.9 * math.pi / math.sqrt(Kc)
        lo, hi = sorted(rng.uniform(0.05 * Kc, 0.95 * Kc, size=2))
        w, phase = rng.uniform(0.5, 3.0), rng.uniform(0.0, 2 * math.pi)
        mid, amp = 0.5 * (lo + hi), 0.5 * max(hi - lo, 1e-3 * Kc)
        g1 = lambda x: mid + amp * math.sin(w * x + phase)
        bc = tuple(rng.uniform(0.5, 1.5, size=2))
        wins += sturm_compare(g1, Kc, a, b, boundary=bc).passed

    ok = sandwich_ok and wins == 100
    assert _verdict(
        4, "Jacobi comparison", ok,
        f"cosh sandwich at 1e-4: {sandwich_ok}, dominance trials {wins}/100")


def test_criterion_05_hyperbolic_lambda1_cap(hyp_record):
    rows = _clean_rows(hyp_record)
    cfg = hyp_record.config
    caps = {row["r"]: math.pi**2 / (4 * (1 - cfg.delta) ** 2 * row["r"] ** 2
                                    * math.cosh(cfg.L / 2))
            for row in rows}
    bound_ok = all(row["lambda1"] <= 1.02 * caps[row["r"]] for row in rows)
    spot_ok = abs(caps[0.05] - 267.7) < 0.1
    ok = bound_ok and spot_ok
    assert _verdict(
        5, "hyperbolic lambda1 cap", ok,
        f"max lambda1/cap = "
        f"{max(row['lambda1'] / caps[row['r']] for row in rows):.4f}, "
        f"cap(r=0.05) = {caps[0.05]:.1f}")


def test_criterion_06_doubling_inequality(hyp_record, pinched_record):
    hyp_C = hyp_record.fits["min_C_hat"]
    pin_C = pinched_record.fits["min_C_hat"]
    rows_ok = all(row["doubling_ok"]
                  for row in _clean_rows(hyp_record) + _clean_rows(pinched_record))

    # flat negative control: the same audit must reject a straight tube
    flat = make_metric("euclidean")
    r, L = 0.05, 2.0
    domain = build_domain_2d(flat, r, L, L / 2)
    forms = assemble(tube_mesh_2d(domain, r / 10), flat)
    pair = smallest_eigenpairs(forms)[0]
    xg = np.linspace(-L / 9 * 0.99, L / 9 * 0.99, 80)
    flat_report = doubling_audit(vertical_profile(pair, forms, domain, xg), r, L)

    time_ok = TIMES["hyperbolic-2d"] < 600 and TIMES["pinched-2d"] < 600
    ok = (hyp_C > 0.1 and pin_C > 0.1 and rows_ok
          and not flat_report.passed and time_ok)
    assert _verdict(
        6, "doubling inequality", ok,
        f"min C_hat {hyp_C:.3f} (hyperbolic), {pin_C:.3f} (pinched); "
        f"flat control C_hat {flat_report.C_hat:.3f}; "
        f"{TIMES['hyperbolic-2d']:.0f}s/{TIMES['pinched-2d']:.0f}s")


def test_criterion_07_neck_suppression(hyp_record, pinched_record):
    fits_h, fits_p = hyp_record.fits, pinched_record.fits
    ok = (fits_h["suppression_c"] > 0 and fits_h["suppression_R2"] >= 0.95
          and fits_p["suppression_c"] > 0 and fits_p["suppression_R2"] >= 0.95)
    assert _verdict(
        7, "neck suppression fits", ok,
        f"hyperbolic c={fits_h['suppression_c']:.3f} "
        f"R2={fits_h['suppression_R2']:.4f}; "
        f"pinched c={fits_p['suppression_c']:.3f} "
        f"R2={fits_p['suppression_R2']:.4f}")


def test_criterion_08_continuity_root(hyp_record, pinched_record):
    rows_h = _clean_rows(hyp_record)
    rows_p = _clean_rows(pinched_record)
    worst_F = max(abs(row["F_over_norm2"]) for row in rows_h + rows_p)
    balance_ok = worst_F < 1e-3
    L = hyp_record.config.L
    sym_dev = max(abs(row["parameter"] - L / 2) for row in rows_h)
    ok = balance_ok and sym_dev < 1e-2
    assert _verdict(
        8, "continuity root", ok,
        f"max |F|/norm^2 = {worst_F:.2e}, "
        f"max |t0 - L/2| = {sym_dev:.2e} (symmetric case)")


def test_criterion_09_gap_decay(hyp_record, pinched_record):
    checks = []
    for record in (hyp_record, pinched_record):
        rows = _clean_rows(record)
        scaled = [row["gap_bound_D2"] for row in rows]
        checks.append(all(np.diff(scaled) < 0)
                      and record.fits["decay_c"] > 0
                      and record.fits["decay_R2"] >= 0.95
                      and record.passed)
    total = sum(TIMES.values())
    ok = all(checks) and total < 3600
    assert _verdict(
        9, "certified gap decay", ok,
        f"decay c={hyp_record.fits['decay_c']:.3f}/"
        f"{pinched_record.fits['decay_c']:.3f}, "
        f"R2={hyp_record.fits['decay_R2']:.4f}/"
        f"{pinched_record.fits['decay_R2']:.4f}, total sweep {total:.0f}s")


def test_criterion_10_mixed_3d_regime(mixed_record):
    rows = _clean_rows(mixed_record)
    audits_ok = all(a["passed"] for a in mixed_record.audits)
    stages = {a["stage"] for a in mixed_record.audits}
    coverage_ok = {"length-gate", "jacobi-barriers", "curvature"} <= stages
    ratio_ok = all(row["neck_bulk_ratio"] < 1 for row in rows)
    sandwich_ok = all(row["sandwich_margin"] >= 0 for row in rows)
    slack_ok = mixed_record.fits["lambda1_slack"] > 1
    ok = (audits_ok and coverage_ok and ratio_ok and sandwich_ok and slack_ok
          and mixed_record.passed)
    assert _verdict(
        10, "3D mixed-curvature regime", ok,
        f"max neck/bulk ratio "
        f"{mixed_record.fits['max_neck_bulk_ratio']:.4f}, "
        f"lambda1 slack {mixed_record.fits['lambda1_slack']:.2f}, "
        f"min barrier margin {min(row['sandwich_margin'] for row in rows):.2e}")
