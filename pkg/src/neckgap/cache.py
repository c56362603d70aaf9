"""Content-addressed npz cache for expensive sweep artifacts.

Entries are keyed by a sha256 hash of a canonical textual rendering of
the inputs that determine the artifact (metric family and parameters,
geometry, mesh rule, solver tolerances), so identical sub-configs hit
the same entry across runs.
"""
from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

import numpy as np


def content_key(payload: dict) -> str:
    """sha256 of the canonical JSON rendering of a payload dict."""
    def norm(v):
        if isinstance(v, (np.floating, float)):
            return repr(float(v))
        if isinstance(v, (np.integer, int)):
            return int(v)
        if isinstance(v, dict):
            return {k: norm(v[k]) for k in sorted(v)}
        if isinstance(v, (list, tuple)):
            return [norm(x) for x in v]
        return v
    canon = json.dumps(norm(payload), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class ArrayCache:
    """Thread-safe directory of ``<key>.npz`` files."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.root / f"{key}.npz"

    def load(self, payload: dict) -> dict | None:
        key = content_key(payload)
        path = self._path(key)
        with self._lock:
            if not path.exists():
                self.misses += 1
                return None
            self.hits += 1
        with np.load(path) as data:
            return {k: data[k] for k in data.files}

    def store(self, payload: dict, arrays: dict) -> None:
        key = content_key(payload)
        path = self._path(key)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        with self._lock:
            tmp.replace(path)

    @property
    def stats(self) -> dict:
        return {"hits": self.hits, "misses": self.misses}
