"""Command line driver.

Subcommands:
  run <config>     run the full sweep pipeline and emit reports
  audit <config>   run only the geometry/Jacobi audits
  presets          list built-in presets (or write their config files)

<config> is either an INI file path or a preset name. Exit codes:
0 success, 2 validation failure, 3 acceptance failure, 4 runtime error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import (PRESET_NAMES, load_config, preset_config, to_ini,
                     validate)
from .errors import GateFailed, NeckgapError, ValidationError
from .reports import emit_outputs
from .runner import run_audits, run_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ACCEPTANCE = 3
EXIT_RUNTIME = 4


def _resolve_config(spec: str, args):
    if spec in PRESET_NAMES and not Path(spec).exists():
        cfg = preset_config(spec)
    else:
        cfg = load_config(spec)
    if args.out is not None:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _cmd_run(args) -> int:
    cfg = _resolve_config(args.config, args)
    cache_dir = os.path.join(cfg.out_dir, "cache")
    record = run_experiment(cfg, cache_dir=cache_dir)
    paths = emit_outputs(record)
    print(f"config hash {record.config_hash[:16]}; "
          f"{len(record.rows)} rows -> {paths['gap_report']}")
    for key in sorted(record.fits):
        print(f"  {key} = {record.fits[key]}")
    if record.failures:
        for f in record.failures:
            print(f"FAIL: {f}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    print("status: pass")
    return EXIT_OK


def _cmd_audit(args) -> int:
    cfg = _resolve_config(args.config, args)
    artifacts = validate(cfg)
    audits = run_audits(cfg, artifacts)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    from .reports import AUDIT_COLUMNS, _write_csv
    _write_csv(out / "audits.csv", AUDIT_COLUMNS, audits)
    failed = [a for a in audits if not a["passed"]]
    for a in audits:
        print(f"{a['stage']}/{a['name']}: {'pass' if a['passed'] else 'FAIL'}"
              f" ({a['detail']})")
    return EXIT_ACCEPTANCE if failed else EXIT_OK


def _cmd_presets(args) -> int:
    for name in PRESET_NAMES:
        cfg = preset_config(name)
        if args.write:
            path = Path(args.write) / f"{name}.ini"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(to_ini(cfg))
            print(f"{name} -> {path}")
        else:
            print(f"{name}: family={cfg.family}, L={cfg.L}, "
                  f"r={list(cfg.r_list)}"
                  + (f", alpha={list(cfg.alpha_list)}" if cfg.alpha_list else ""))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="neckgap",
        description="Spectral-gap collapse experiments on curved tube domains")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep and emit reports")
    p_run.add_argument("config", help="config file path or preset name")
    p_audit = sub.add_parser("audit", help="run only geometry/Jacobi audits")
    p_audit.add_argument("config", help="config file path or preset name")
    p_presets = sub.add_parser("presets", help="list built-in presets")
    p_presets.add_argument("--write", metavar="DIR", default=None,
                           help="write preset config files to DIR")

    for p in (p_run, p_audit):
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "audit":
            return _cmd_audit(args)
        return _cmd_presets(args)
    except (ValidationError, GateFailed) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NeckgapError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
