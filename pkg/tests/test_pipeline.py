"""Config, cache, runner, report, and CLI plumbing tests."""

import math

import numpy as np
import pytest

from neckgap.cache import ArrayCache, content_key
from neckgap.cli import main
from neckgap.config import (PRESET_NAMES, config_hash, load_config,
                            preset_config, to_ini, validate)
from neckgap.errors import ValidationError
from neckgap.reports import emit_outputs
from neckgap.runner import THREE_PI_SQ, run_experiment


def test_preset_catalog():
    for name in PRESET_NAMES:
        cfg = preset_config(name)
        assert cfg.preset == name
        assert all(b < a for a, b in zip(cfg.r_list, cfg.r_list[1:]))
    with pytest.raises(ValidationError):
        preset_config("nonexistent")


def test_ini_round_trip(tmp_path):
    cfg = preset_config("hyperbolic-2d")
    path = tmp_path / "cfg.ini"
    path.write_text(to_ini(cfg))
    loaded = load_config(str(path))
    assert config_hash(loaded) == config_hash(cfg)
    assert loaded.r_list == cfg.r_list
    assert loaded.params == cfg.params


def test_config_hash_scope():
    a = preset_config("hyperbolic-2d")
    b = preset_config("hyperbolic-2d")
    b.out_dir = "elsewhere"
    b.workers = 7
    assert config_hash(a) == config_hash(b)   # output knobs excluded
    b.r_list = (0.1, 0.05)
    assert config_hash(a) != config_hash(b)


def test_validation_rejects_bad_sweeps():
    cfg = preset_config("hyperbolic-2d")
    cfg.r_list = (0.05, 0.1)                  # increasing
    with pytest.raises(ValidationError):
        validate(cfg)
    cfg = preset_config("hyperbolic-2d")
    cfg.r_list = ()
    with pytest.raises(ValidationError):
        validate(cfg)
    cfg = preset_config("mixed-3d")
    cfg.alpha_list = (0.5,)                   # far outside (10/11, 11/10)
    with pytest.raises(ValidationError):
        validate(cfg)
    cfg = preset_config("euclidean-control")
    cfg.scan_lo, cfg.scan_hi = 0.7, 0.3
    with pytest.raises(ValidationError):
        validate(cfg)


def test_missing_config_file():
    with pytest.raises(ValidationError):
        load_config("/nonexistent/path.ini")


def test_cache_round_trip(tmp_path):
    cache = ArrayCache(tmp_path)
    payload = {"family": "hyperbolic", "r": 0.05, "params": {"y_max": 2.0}}
    assert cache.load(payload) is None
    cache.store(payload, {"lam": np.array(1.5), "vec": np.arange(4.0)})
    out = cache.load(payload)
    assert float(out["lam"]) == 1.5
    assert np.array_equal(out["vec"], np.arange(4.0))
    assert cache.stats == {"hits": 1, "misses": 1}
    # key is order independent
    assert content_key(payload) == content_key(
        {"params": {"y_max": 2.0}, "r": 0.05, "family": "hyperbolic"})
    assert content_key(payload) != content_key({**payload, "r": 0.07})


def test_flat_control_record():
    rec = run_experiment(preset_config("euclidean-control"))
    assert rec.passed
    assert len(rec.rows) == 4
    for row in rec.rows:
        assert not row["error"]
        assert row["gap_bound_D2"] >= THREE_PI_SQ
    assert "NonDecaying" in rec.fits["control_note"]


def test_report_determinism(tmp_path):
    cfg = preset_config("euclidean-control")
    recs = [run_experiment(cfg) for _ in range(2)]
    assert recs[0].config_hash == recs[1].config_hash
    blobs = []
    for i, rec in enumerate(recs):
        paths = emit_outputs(rec, tmp_path / f"run{i}")
        blob = {k: paths[k].read_bytes() for k in ("gap_report", "audits")}
        # fits.txt is deterministic except for its wall-clock section
        blob["fits"] = paths["fits"].read_text().split("timings")[0]
        blobs.append(blob)
    assert blobs[0] == blobs[1]
    head = (tmp_path / "run0" / "gap_report.csv").read_text().splitlines()[0]
    assert head.startswith("r,parameter,lambda1,lambda2,gap_discrete")


def test_empty_sweep_emits_headers(tmp_path):
    rec = run_experiment(preset_config("euclidean-control"))
    rec.rows = []
    rec.profiles = {}
    paths = emit_outputs(rec, tmp_path)
    lines = paths["gap_report"].read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("r,")


def test_crash_isolation():
    # r = 0.3 flares past the chart before the tube ends; the cell must
    # record its error while the r = 0.1 cell still completes
    cfg = preset_config("hyperbolic-2d")
    cfg.r_list = (0.3, 0.1)
    rec = run_experiment(cfg)
    assert rec.rows[0]["error"]
    assert not rec.rows[1].get("error")
    assert not rec.passed


def test_worker_pool_matches_serial(tmp_path):
    cfg = preset_config("euclidean-control")
    serial = run_experiment(cfg)
    cfg.workers = 2
    pooled = run_experiment(cfg)
    assert [r["lambda1"] for r in serial.rows] == [r["lambda1"] for r in pooled.rows]


def test_cli_exit_codes(tmp_path):
    assert main(["presets"]) == 0
    assert main(["presets", "--write", str(tmp_path / "presets")]) == 0
    assert (tmp_path / "presets" / "hyperbolic-2d.ini").exists()
    # validation failure: malformed config file
    bad = tmp_path / "bad.ini"
    bad.write_text("[experiment]\nfamily = hyperbolic\nL = -1\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o1")]) == 2
    # full flat control run through the CLI
    assert main(["run", "euclidean-control", "--out", str(tmp_path / "o2")]) == 0
    assert (tmp_path / "o2" / "gap_report.csv").exists()
    assert (tmp_path / "o2" / "fits.txt").exists()
    assert (tmp_path / "o2" / "plots" / "gap_decay.svg").exists()
    # audits only
    assert main(["audit", "hyperbolic-2d", "--out", str(tmp_path / "o3")]) == 0
    assert (tmp_path / "o3" / "audits.csv").exists()


def test_cache_reuse_between_runs(tmp_path):
    cfg = preset_config("euclidean-control")
    cfg.r_list = (0.1,)
    first = run_experiment(cfg, cache_dir=tmp_path / "cache")
    second = run_experiment(cfg, cache_dir=tmp_path / "cache")
    assert first.cache_stats["misses"] >= 1
    assert second.cache_stats["hits"] >= 1
    assert second.rows[0]["lambda1"] == first.rows[0]["lambda1"]
