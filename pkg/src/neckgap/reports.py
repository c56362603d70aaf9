"""Report emission: CSV tables, fit summaries, SVG plots.

CSV files are written with a fixed column schema and explicit float
formatting so that two runs with the same config hash are byte
identical; plots are informational and excluded from that guarantee.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .runner import RunRecord

# one schema for 2D and 3D sweeps; rows without a column leave it empty
GAP_COLUMNS = (
    "r", "parameter", "lambda1", "lambda2", "gap_discrete", "diameter",
    "gap_bound", "gap_bound_D2", "F_over_norm2", "root_iterations",
    "sup_neck", "C_hat", "term_I", "term_II", "quotient_orth",
    "lambda1_upper", "n_vertices", "convexity_ok", "doubling_ok",
    "rho", "alpha", "neck_bound", "bulk_measure", "neck_bulk_ratio",
    "sandwich_margin", "error",
)

AUDIT_COLUMNS = ("stage", "name", "passed", "value", "detail")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return ""
        return f"{float(value):.12e}"
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def _fits_text(record: RunRecord) -> str:
    lines = [
        f"preset: {record.config.preset}",
        f"config_hash: {record.config_hash}",
        f"rows: {len(record.rows)}",
        f"status: {'pass' if record.passed else 'fail'}",
        "",
    ]
    for key in sorted(record.fits):
        lines.append(f"{key} = {_cell(record.fits[key])}")
    if record.failures:
        lines.append("")
        lines.append("failures:")
        lines.extend(f"  - {f}" for f in record.failures)
    lines.append("")
    lines.append("timings [s]:")
    for key in sorted(record.timings):
        lines.append(f"  {key} = {record.timings[key]:.3f}")
    if record.cache_stats:
        lines.append(f"cache: {record.cache_stats}")
    return "\n".join(lines) + "\n"


def _plot_gap_decay(record: RunRecord, path: Path) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    rows = [r for r in record.rows if not r.get("error")
            and np.isfinite(r.get("gap_bound_D2", float("nan")))]
    if len(rows) < 2:
        return
    rs = np.array([r["r"] for r in rows])
    vals = np.array([r["gap_bound_D2"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(1 / rs, vals, "o-")
    ax.set_xlabel("1 / r")
    ax.set_ylabel("certified gap bound * D^2")
    ax.set_title(record.config.preset)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _plot_profiles(record: RunRecord, path: Path) -> None:
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    if not record.profiles:
        return
    fig, ax = plt.subplots(figsize=(5, 4))
    for r in sorted(record.profiles, reverse=True):
        x, V = record.profiles[r]
        ax.semilogy(x, np.maximum(V, 1e-300), label=f"r = {r}")
    ax.set_xlabel("x")
    ax.set_ylabel("V(x)")
    ax.set_title(f"{record.config.preset}: slice mass through the neck")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def emit_outputs(record: RunRecord, out_dir: str | Path | None = None) -> dict:
    """Write gap_report.csv, fits.txt, audits.csv, plots/*.svg.

    Returns a dict of emitted paths. Overwrites idempotently.
    """
    out = Path(out_dir if out_dir is not None else record.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plots = out / "plots"
    plots.mkdir(exist_ok=True)

    paths = {
        "gap_report": out / "gap_report.csv",
        "audits": out / "audits.csv",
        "fits": out / "fits.txt",
    }
    _write_csv(paths["gap_report"], GAP_COLUMNS, record.rows)
    _write_csv(paths["audits"], AUDIT_COLUMNS, record.audits)
    paths["fits"].write_text(_fits_text(record))

    decay_svg = plots / "gap_decay.svg"
    _plot_gap_decay(record, decay_svg)
    if decay_svg.exists():
        paths["gap_decay_svg"] = decay_svg
    prof_svg = plots / "profiles.svg"
    _plot_profiles(record, prof_svg)
    if prof_svg.exists():
        paths["profiles_svg"] = prof_svg
    return paths
