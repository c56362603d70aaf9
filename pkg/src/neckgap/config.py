"""Experiment configuration: presets, INI parsing, validation, hashing.

A configuration is a plain ``key = value`` text file with sections so
that runs are reproducible and hashable; the only environment override
is the output directory (CLI ``--out``).
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, asdict

from .errors import GateFailed, ValidationError
from .jacobi import length_gate, rotation_angle
from .metrics import Metric, make_metric, tube_bounds
from .domains import choose_rho

PRESET_NAMES = ("euclidean-control", "hyperbolic-2d", "pinched-2d", "mixed-3d")


@dataclass
class ExperimentConfig:
    preset: str
    family: str                       # metric catalog id
    params: dict = field(default_factory=dict)
    L: float = 4.0                    # tube length (2D: x-span; 3D: half-span)
    delta: float = 0.01               # inner-rectangle slack
    cutoff_delta: float = 0.69        # transition-strip rate (width e^{-delta/r})
    r_list: tuple = (0.1, 0.07, 0.05, 0.035)
    scan_lo: float = 0.45             # family-parameter window, fraction of L
    scan_hi: float = 0.55
    alpha_list: tuple = ()            # 3D end-height ratios
    rho: float | None = None          # 3D aspect; chosen from curvature if None
    mesh_divisor: float = 8.0         # h = r / mesh_divisor
    root_tol: float = 1e-3            # |F| < tol * ||h1||^2 at the root
    out_dir: str = "out"
    seed: int = 20240616
    workers: int = 1

    def metric(self) -> Metric:
        return make_metric(self.family, **self.params)

    @property
    def is_3d(self) -> bool:
        return self.family == "mixed3d"


_PRESETS: dict[str, dict] = {
    # flat negative control: the gap never collapses (gap * D^2 >= 3 pi^2)
    "euclidean-control": dict(
        family="euclidean", params={"dimension": 2.0}, L=2.0),
    # constant curvature -1 surface, the headline regime
    "hyperbolic-2d": dict(
        family="hyperbolic", params={"y_max": 2.0}, L=4.0),
    # variable negative pinching; shorter tube because the boundary
    # flare of the stiffer metric escapes the chart near |x| = 2.35
    "pinched-2d": dict(
        family="pinched",
        # amp must stay below 0.13 * base or the sampled kappa2 range
        # leaves the (9/8, 7/8) pinching window around kappa2(0)
        params={"base": 1.0, "amp": 0.1, "freq": 2.0, "y_max": 2.0},
        L=3.0, scan_lo=0.4, scan_hi=0.6),
    # 3D slab with one negative and one positive sectional direction
    "mixed-3d": dict(
        family="mixed3d", params={"a": 1.0, "b": 0.5, "y_max": 1.0},
        L=0.3, r_list=(0.05,),
        alpha_list=(10 / 11 + 1e-3, 0.95, 1.0, 1.05, 11 / 10 - 1e-3)),
}


def preset_config(name: str) -> ExperimentConfig:
    if name not in _PRESETS:
        raise ValidationError(
            f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return ExperimentConfig(preset=name, **_PRESETS[name])


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_ini(config: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "preset": config.preset,
        "family": config.family,
        "L": repr(config.L),
        "delta": repr(config.delta),
        "cutoff_delta": repr(config.cutoff_delta),
        "seed": str(config.seed),
    }
    cp["metric"] = {k: repr(float(v)) for k, v in config.params.items()}
    sweep = {
        "r_list": ", ".join(repr(float(r)) for r in config.r_list),
        "scan_lo": repr(config.scan_lo),
        "scan_hi": repr(config.scan_hi),
        "root_tol": repr(config.root_tol),
    }
    if config.alpha_list:
        sweep["alpha_list"] = ", ".join(repr(float(a)) for a in config.alpha_list)
    if config.rho is not None:
        sweep["rho"] = repr(config.rho)
    cp["sweep"] = sweep
    cp["mesh"] = {"divisor": repr(config.mesh_divisor)}
    cp["output"] = {"out_dir": config.out_dir, "workers": str(config.workers)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ValidationError(f"cannot read config file {path!r}")
    try:
        exp = cp["experiment"]
        sweep = cp["sweep"] if cp.has_section("sweep") else {}
        mesh = cp["mesh"] if cp.has_section("mesh") else {}
        out = cp["output"] if cp.has_section("output") else {}
        params = ({k: float(v) for k, v in cp["metric"].items()}
                  if cp.has_section("metric") else {})
        cfg = ExperimentConfig(
            preset=exp.get("preset", "custom"),
            family=exp["family"],
            params=params,
            L=float(exp.get("L", 4.0)),
            delta=float(exp.get("delta", 0.01)),
            cutoff_delta=float(exp.get("cutoff_delta", 0.69)),
            seed=int(exp.get("seed", 20240616)),
            r_list=tuple(float(s) for s in sweep.get("r_list", "0.1").split(",")),
            scan_lo=float(sweep.get("scan_lo", 0.3)),
            scan_hi=float(sweep.get("scan_hi", 0.7)),
            root_tol=float(sweep.get("root_tol", 1e-3)),
            alpha_list=tuple(float(s) for s in sweep.get("alpha_list", "").split(",")
                             if s.strip()),
            rho=float(sweep["rho"]) if "rho" in sweep else None,
            mesh_divisor=float(mesh.get("divisor", 8.0)),
            out_dir=out.get("out_dir", "out"),
            workers=int(out.get("workers", 1)),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"malformed config {path!r}: {exc}") from exc
    return cfg


def config_hash(config: ExperimentConfig) -> str:
    """Content hash of everything that affects the numbers (not out_dir)."""
    d = asdict(config)
    d.pop("out_dir")
    d.pop("workers")
    canon = "\n".join(f"{k}={_format_value(d[k])}" for k in sorted(d))
    return hashlib.sha256(canon.encode()).hexdigest()


def validate(config: ExperimentConfig) -> dict:
    """Check invariants and re-run the geometric admissibility gates.

    Returns a dict of gate artifacts (curvature bounds, rho, length gate)
    so the runner does not recompute them.
    """
    if not config.r_list:
        raise ValidationError("empty r list")
    rs = list(config.r_list)
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise ValidationError(f"r list must be strictly decreasing: {rs}")
    if any(r <= 0 for r in rs):
        raise ValidationError(f"r values must be positive: {rs}")
    if config.L <= 0:
        raise ValidationError("L must be positive")
    if not (0 < config.scan_lo < config.scan_hi < 1):
        raise ValidationError(
            f"scan window ({config.scan_lo}, {config.scan_hi}) must satisfy "
            "0 < lo < hi < 1")
    if config.mesh_divisor < 4:
        raise ValidationError("mesh divisor must be >= 4 (h <= r/4)")
    if config.is_3d:
        if not config.alpha_list:
            raise ValidationError("3D preset needs a non-empty alpha list")
        for a in config.alpha_list:
            if not (10 / 11 < a < 11 / 10):
                raise ValidationError(
                    f"alpha={a} outside the admissible window (10/11, 11/10)")
    try:
        metric = config.metric()
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    artifacts: dict = {"metric": metric}
    if config.family == "euclidean":
        return artifacts

    r_max = max(rs)
    half = config.L if config.is_3d else config.L * max(
        config.scan_hi, 1 - config.scan_lo)
    bounds = tube_bounds(metric, half, r_max)
    artifacts["bounds"] = bounds
    if not bounds.pinching_ok:
        raise ValidationError(
            f"pinching gate failed: kappa2(0)={bounds.kappa2_origin:.4g}, "
            f"window [{bounds.k2:.4g}, {bounds.K2_dir:.4g}]")

    if config.is_3d:
        rho = config.rho if config.rho is not None else choose_rho(
            bounds, config.L)
        theta = rotation_angle(metric, -config.L, config.L)
        gate = length_gate(bounds.kappa2_origin, bounds.K, rho,
                           theta, config.L)
        artifacts["theta"] = theta
        if not gate.passed:
            raise GateFailed(
                f"length gate failed at L={config.L} (max admissible "
                f"{gate.max_L:.4g})")
        artifacts["rho"] = rho
        artifacts["gate"] = gate
    return artifacts
