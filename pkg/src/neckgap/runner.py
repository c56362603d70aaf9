"""Sweep orchestration: per-radius pipeline, audits, fits, run records.

For each neck half-width r the 2D pipeline builds the convex tube,
meshes and solves the Dirichlet eigenproblem, locates the balanced slab
offset t0 where the mass functional F(t) = int_{x>0} h1^2 - int_{x<0}
h1^2 changes sign, and evaluates the cutoff-ansatz certificate there.
3D sweeps run the gate/barrier/audit chain per end-height ratio alpha.
"""
from __future__ import annotations

import math
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (ansatz_report, balanced_pair, cutoff, doubling_audit,
                       gap_decay_fit, gradient_bound_constant, neck_sup,
                       neck_suppression, refine_neck_tail, vertical_profile)
from .cache import ArrayCache
from .config import ExperimentConfig, config_hash, validate
from .domains import (build_domain_2d, build_domain_3d, convexity_audit,
                      height_and_neck)
from .errors import (NeckgapError, NoBalancedState, NonDecaying,
                     NoSignChange)
from .fem import EigenPair, assemble, smallest_eigenpairs
from .geodesy import expansion_audit
from .jacobi import flattening_audit
from .meshing import tube_mesh_2d, tube_mesh_3d

THREE_PI_SQ = 3 * math.pi**2


@dataclass
class RunRecord:
    config: ExperimentConfig
    config_hash: str
    rows: list = field(default_factory=list)        # per-(r | alpha) dicts
    fits: dict = field(default_factory=dict)
    audits: list = field(default_factory=list)      # per-audit dicts
    profiles: dict = field(default_factory=dict)    # r -> (x, V) arrays
    timings: dict = field(default_factory=dict)
    cache_stats: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)    # acceptance-tagged

    @property
    def passed(self) -> bool:
        return not self.failures and not any(r.get("error") for r in self.rows)


# --------------------------------------------------------------- 2D cells

def _split_masses(forms, h, center=0.0):
    """(p, q, mass) with p = int_{x>c} h^2, q = int_{x<c} h^2."""
    xs = forms.mesh.points[:, 0]
    hf = h[forms.free]
    Mh = forms.M @ hf
    p = float(np.where(xs > center, h, 0.0)[forms.free] @ Mh)
    q = float(np.where(xs < center, h, 0.0)[forms.free] @ Mh)
    return p, q, float(hf @ Mh)


class _CellSolver:
    """Solve (and cache) the eigenproblem of one (r, t) tube."""

    def __init__(self, config: ExperimentConfig, metric, cache: ArrayCache | None):
        self.config = config
        self.metric = metric
        self.cache = cache

    def payload(self, r: float, t: float) -> dict:
        return {
            "family": self.config.family,
            "params": self.config.params,
            "L": self.config.L,
            "r": r,
            "t": t,
            "mesh_divisor": self.config.mesh_divisor,
            "version": 1,
        }

    def __call__(self, r: float, t: float):
        cfg = self.config
        domain = build_domain_2d(self.metric, r, cfg.L, t)
        forms = assemble(tube_mesh_2d(domain, r / cfg.mesh_divisor), self.metric)
        cached = self.cache.load(self.payload(r, t)) if self.cache else None
        if cached is not None:
            p1 = EigenPair(value=float(cached["lam1"]),
                           function=cached["vec1"],
                           residual=float(cached["res1"]))
            p2 = EigenPair(value=float(cached["lam2"]),
                           function=cached["vec2"],
                           residual=float(cached["res2"]))
        else:
            p1, p2 = smallest_eigenpairs(forms, 2)
            p1 = refine_neck_tail(p1, forms, 0.0, cfg.L)
            if self.cache:
                self.cache.store(self.payload(r, t), {
                    "lam1": p1.value, "vec1": p1.function, "res1": p1.residual,
                    "lam2": p2.value, "vec2": p2.function, "res2": p2.residual,
                })
        return domain, forms, p1, p2


def _find_balanced_root(config: ExperimentConfig, solver: _CellSolver,
                        r: float, t_tol: float = 1e-5):
    """Bisect the sign change of the mass balance F(t), then canonicalize.

    The two wells detune at rate O(lambda/L) while their coupling is the
    physical tunneling splitting, exponentially below machine precision,
    so the solver's F(t) jumps between -||h||^2 and +||h||^2 with no
    resolvable zero crossing. Bisection brackets the jump; at the
    bracket midpoint the discrete pair is quasi-degenerate and the
    balanced positive combination of the two eigenvectors realizes the
    continuity root.
    """
    cfg = config
    lo, hi = cfg.scan_lo * cfg.L, cfg.scan_hi * cfg.L

    def evaluate(t):
        domain, forms, p1, p2 = solver(r, t)
        p, q, mass = _split_masses(forms, p1.function)
        return p - q, mass, (domain, forms, p1, p2)

    F_lo, m_lo, d_lo = evaluate(lo)
    F_hi, m_hi, d_hi = evaluate(hi)
    for F, m, d, t in ((F_lo, m_lo, d_lo, lo), (F_hi, m_hi, d_hi, hi)):
        if abs(F) < cfg.root_tol * m:
            return t, F / m, 0, d
    if np.sign(F_lo) == np.sign(F_hi):
        raise NoSignChange(
            f"F({lo:.6g}) = {F_lo:.3e}, F({hi:.6g}) = {F_hi:.3e}",
            endpoint_signs=(float(np.sign(F_lo)), float(np.sign(F_hi))))
    it = 0
    while hi - lo > t_tol:
        mid = 0.5 * (lo + hi)
        F_mid, m_mid, d_mid = evaluate(mid)
        it += 1
        if abs(F_mid) < cfg.root_tol * m_mid:
            return mid, F_mid / m_mid, it, d_mid
        if np.sign(F_mid) == np.sign(F_lo):
            lo, F_lo = mid, F_mid
        else:
            hi, F_hi = mid, F_mid

    mid = 0.5 * (lo + hi)
    domain, forms, p1, p2 = solver(r, mid)
    # quasi-degenerate = split at most by the discretization-error scale
    # (the P1 eigenvalue error at h = r/8 is well above 1e-3 relative)
    gap = p2.value - p1.value
    if gap > 1e-3 * p1.value:
        raise NoBalancedState(
            f"pair not quasi-degenerate at the bracket midpoint "
            f"(gap {gap:.3e} vs lambda1 {p1.value:.6g})")
    pair = balanced_pair(p1, p2, forms)
    pair = refine_neck_tail(pair, forms, 0.0, cfg.L)
    p, q, mass = _split_masses(forms, pair.function)
    return mid, (p - q) / mass, it, (domain, forms, pair, p2)


def _sweep_cell_2d(config: ExperimentConfig, metric, r: float,
                   cache: ArrayCache | None) -> tuple[dict, tuple | None]:
    """One radius of a curved 2D sweep: root, ansatz, audits, profile."""
    cfg = config
    solver = _CellSolver(cfg, metric, cache)
    t_root, F_rel, iterations, data = _find_balanced_root(cfg, solver, r)
    domain, forms, p1, p2 = data

    psi = cutoff(0.0, r, cfg.cutoff_delta)
    report = ansatz_report(p1, psi, forms, domain, L=cfg.L)
    audit = convexity_audit(domain)
    sup = neck_sup(p1, forms, 0.0, cfg.L)

    # sample V at mesh-column abscissae: nodal slices carry no x-wise
    # interpolation noise, so the convexity check sees the FE solution
    cols = forms.mesh.column_x
    if cols is None:
        cols = np.unique(np.round(forms.mesh.points[:, 0], 12))
    xg = cols[np.abs(cols) < cfg.L / 9 * 0.99]
    prof = vertical_profile(p1, forms, domain, xg)
    doubling = doubling_audit(prof, r, cfg.L)

    row = {
        "r": r,
        "parameter": t_root,
        "lambda1": p1.value,
        "lambda2": p2.value,
        "gap_discrete": p2.value - p1.value,
        "diameter": audit.diameter,
        "gap_bound": report.gap_bound,
        "gap_bound_D2": report.gap_bound * audit.diameter**2,
        "F_over_norm2": F_rel,
        "root_iterations": iterations,
        "sup_neck": sup,
        "C_hat": doubling.C_hat,
        "term_I": report.term_I,
        "term_II": report.term_II,
        "quotient_orth": report.quotient_orth,
        "n_vertices": len(forms.mesh.points),
        "convexity_ok": audit.passed,
        "doubling_ok": doubling.passed,
        "error": "",
    }
    return row, (prof.x.copy(), prof.V.copy())


def _sweep_cell_euclidean(config: ExperimentConfig, metric, r: float,
                          cache: ArrayCache | None) -> tuple[dict, tuple | None]:
    """Flat control: symmetric rectangle, discrete gap, no collapse."""
    cfg = config
    solver = _CellSolver(cfg, metric, cache)
    domain, forms, p1, p2 = solver(r, cfg.L / 2)
    audit = convexity_audit(domain)
    gap = p2.value - p1.value
    row = {
        "r": r,
        "parameter": cfg.L / 2,
        "lambda1": p1.value,
        "lambda2": p2.value,
        "gap_discrete": gap,
        "diameter": audit.diameter,
        "gap_bound": gap,
        "gap_bound_D2": gap * audit.diameter**2,
        "F_over_norm2": float("nan"),
        "root_iterations": 0,
        "sup_neck": neck_sup(p1, forms, 0.0, cfg.L),
        "C_hat": float("nan"),
        "term_I": float("nan"),
        "term_II": float("nan"),
        "quotient_orth": p2.value,
        "n_vertices": len(forms.mesh.points),
        "convexity_ok": audit.passed,
        "doubling_ok": False,
        "error": "",
    }
    return row, None


# --------------------------------------------------------------- 3D cells

def _sweep_cell_3d(config: ExperimentConfig, metric, alpha: float,
                   artifacts: dict) -> tuple[dict, tuple | None]:
    cfg = config
    r = cfg.r_list[0]
    rho, gate, bounds = artifacts["rho"], artifacts["gate"], artifacts["bounds"]
    domain = build_domain_3d(metric, r, rho, alpha, cfg.L, gate)
    _, neck = height_and_neck(domain, bounds.kappa2_origin)
    audit = convexity_audit(domain)
    # hull heights must stay between the unit-normalized barriers, up to
    # the quadratic chart remainder
    xs = np.linspace(-cfg.L, cfg.L, 41)
    tol = 2 * r * r
    margins = []
    for z in np.linspace(-0.5 * rho * r, 0.5 * rho * r, 5):
        Hz = np.atleast_1d(domain.height(xs, np.full_like(xs, z)))
        margins.append(min(float((neck.upper(xs) * r + tol - Hz).min()),
                           float((Hz - neck.lower(xs) * r + tol).min())))
    sandwich_margin = min(margins)
    mesh = tube_mesh_3d(domain, r / cfg.mesh_divisor)
    forms = assemble(mesh, metric)
    p1, p2 = smallest_eigenpairs(forms, 2)
    # slab + slice upper bound: the first factor sees the bulk measure b,
    # the cross-slice the (1 + B) r height cap and the rho r z-extent
    b = neck.bulk_measure
    bound = (4 * math.pi**2 / b**2
             + 4 * math.pi**2 / ((1 + neck.neck_bound) ** 2 * r**2)
             + math.pi**2 / (rho**2 * r**2))
    row = {
        "r": r,
        "parameter": alpha,
        "lambda1": p1.value,
        "lambda2": p2.value,
        "gap_discrete": p2.value - p1.value,
        "diameter": audit.diameter,
        "gap_bound": p2.value - p1.value,
        "gap_bound_D2": (p2.value - p1.value) * audit.diameter**2,
        "F_over_norm2": float("nan"),
        "root_iterations": 0,
        "sup_neck": float("nan"),
        "C_hat": float("nan"),
        "term_I": float("nan"),
        "term_II": float("nan"),
        "quotient_orth": p2.value,
        "n_vertices": len(mesh.points),
        "convexity_ok": audit.passed,
        "doubling_ok": False,
        "rho": rho,
        "alpha": alpha,
        "neck_bound": neck.neck_bound,
        "bulk_measure": b,
        "neck_bulk_ratio": neck.ratio,
        "lambda1_upper": bound,
        "sandwich_margin": sandwich_margin,
        "error": "",
    }
    return row, None


# ----------------------------------------------------------------- audits

def run_audits(config: ExperimentConfig, artifacts: dict) -> list[dict]:
    """Geometry/Jacobi audits shared by `run` and the `audit` subcommand."""
    metric = artifacts["metric"]
    audits: list[dict] = []

    if config.family != "euclidean":
        exp = expansion_audit(metric)
        audits.append({
            "stage": "fermi-expansion", "name": "cubic-remainder",
            "passed": exp.passed, "value": exp.min_slope,
            "detail": "min log-log remainder slope (need >= 2.9)",
        })
        bounds = artifacts["bounds"]
        audits.append({
            "stage": "curvature", "name": "pinching-window",
            "passed": bounds.pinching_ok, "value": bounds.kappa2_origin,
            "detail": f"kappa2 range [{bounds.k2:.6g}, {bounds.K2_dir:.6g}]",
        })

    if config.is_3d:
        gate, rho, bounds = artifacts["gate"], artifacts["rho"], artifacts["bounds"]
        audits.append({
            "stage": "length-gate", "name": "admissible-length",
            "passed": gate.passed, "value": gate.max_L,
            "detail": f"L={config.L}, rho={rho:.6g}",
        })
        flat = flattening_audit(metric, bounds.kappa2_origin, bounds.K, rho,
                                config.L, gate, r=config.r_list[0])
        audits.append({
            "stage": "jacobi-barriers", "name": "flattening",
            "passed": flat.passed, "value": flat.worst_lower_margin,
            "detail": f"{flat.trials} randomized boundary-value trials",
        })
    return audits


# ------------------------------------------------------------------ fits

def _fit_block(config: ExperimentConfig, rows: list[dict],
               record: RunRecord) -> None:
    ok = [r for r in rows if not r.get("error")]
    if config.family == "euclidean":
        if ok:
            worst = min(row["gap_bound_D2"] for row in ok)
            record.fits["min_gap_D2"] = worst
            record.fits["gap_D2_over_3pi2"] = worst / THREE_PI_SQ
            if worst < THREE_PI_SQ:
                record.failures.append(
                    f"flat control violates gap*D^2 >= 3 pi^2 ({worst:.6g})")
        try:
            gap_decay_fit([row["r"] for row in ok], [row["gap_bound"] for row in ok],
                          [row["diameter"] for row in ok])
            record.failures.append(
                "flat control shows a decaying gap (expected non-decaying)")
        except (NonDecaying, NeckgapError) as exc:
            record.fits["control_note"] = f"{type(exc).__name__}: {exc}"
        return

    if config.is_3d:
        if ok:
            record.fits["max_neck_bulk_ratio"] = max(
                row["neck_bulk_ratio"] for row in ok)
            record.fits["lambda1_slack"] = min(
                row["lambda1_upper"] / row["lambda1"] for row in ok)
            if record.fits["max_neck_bulk_ratio"] >= 1:
                record.failures.append("neck/bulk height ratio >= 1")
            if record.fits["lambda1_slack"] <= 1:
                record.failures.append("3D lambda1 upper bound violated")
        return

    if len(ok) >= 4:
        try:
            sup_fit = neck_suppression([row["r"] for row in ok],
                                       [row["sup_neck"] for row in ok])
            record.fits["suppression_c"] = sup_fit.c
            record.fits["suppression_C"] = sup_fit.C
            record.fits["suppression_R2"] = sup_fit.r_squared
        except NeckgapError as exc:
            record.failures.append(f"neck suppression fit: {exc}")
        try:
            decay = gap_decay_fit([row["r"] for row in ok],
                                  [row["gap_bound"] for row in ok],
                                  [row["diameter"] for row in ok])
            record.fits["decay_c"] = decay.c
            record.fits["decay_C"] = decay.C
            record.fits["decay_R2"] = decay.r_squared
            diffs = np.diff(decay.values)
            if not np.all(diffs < 0):
                record.failures.append("gap * D^2 not strictly decreasing")
        except NeckgapError as exc:
            record.failures.append(f"gap decay fit: {exc}")
    else:
        record.failures.append(f"only {len(ok)} clean rows, need >= 4 for fits")

    if ok:
        record.fits["min_C_hat"] = min(row["C_hat"] for row in ok)
        if record.fits["min_C_hat"] <= 0:
            record.failures.append("doubling audit failed on some row")

    if config.family == "hyperbolic":
        # closed-form lambda1 cap of the widest inscribed rectangle
        slack = 1.02
        for row in ok:
            cap = (math.pi**2 / (4 * (1 - config.delta) ** 2 * row["r"] ** 2
                                 * math.cosh(config.L / 2)))
            row["lambda1_upper"] = cap
            if row["lambda1"] > slack * cap:
                record.failures.append(
                    f"lambda1 bound violated at r={row['r']}: "
                    f"{row['lambda1']:.6g} > {cap:.6g}")
        record.fits["lambda1_K"] = 1.0
        lam_max = max((row["lambda1"] for row in ok), default=1.0)
        record.fits["gradient_bound_c"] = gradient_bound_constant(
            lam_max, 1.0, 2)


# ------------------------------------------------------------------- run

def run_experiment(config: ExperimentConfig,
                   cache_dir: str | None = None) -> RunRecord:
    t0 = time.perf_counter()
    artifacts = validate(config)
    record = RunRecord(config=config, config_hash=config_hash(config))
    record.timings["validate"] = time.perf_counter() - t0
    metric = artifacts["metric"]

    t0 = time.perf_counter()
    record.audits = run_audits(config, artifacts)
    for a in record.audits:
        if not a["passed"]:
            record.failures.append(f"audit failed: {a['stage']}/{a['name']}")
    record.timings["audits"] = time.perf_counter() - t0

    cache = ArrayCache(cache_dir) if cache_dir else None

    if config.is_3d:
        cells = list(config.alpha_list)

        def job(alpha):
            return _sweep_cell_3d(config, metric, alpha, artifacts)
    else:
        cells = list(config.r_list)
        cell_fn = (_sweep_cell_euclidean if config.family == "euclidean"
                   else _sweep_cell_2d)

        def job(r):
            return cell_fn(config, metric, r, cache)

    def guarded(param):
        try:
            return job(param)
        except NeckgapError as exc:
            return ({"r": config.r_list[0] if config.is_3d else param,
                     "parameter": param,
                     "error": f"{type(exc).__name__}: {exc}"}, None)
        except Exception:
            return ({"r": config.r_list[0] if config.is_3d else param,
                     "parameter": param,
                     "error": traceback.format_exc(limit=3)}, None)

    t0 = time.perf_counter()
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(guarded, cells))
    else:
        results = [guarded(p) for p in cells]
    record.timings["sweep"] = time.perf_counter() - t0

    for param, (row, profile) in zip(cells, results):
        record.rows.append(row)
        if row.get("error"):
            record.failures.append(f"cell {param}: {row['error']}")
        if profile is not None:
            record.profiles[row["r"]] = profile

    t0 = time.perf_counter()
    _fit_block(config, record.rows, record)
    record.timings["fits"] = time.perf_counter() - t0
    if cache:
        record.cache_stats = cache.stats
    return record
