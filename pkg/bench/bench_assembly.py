"""Benchmark the two element-assembly kernel paths (numba vs numpy).

Usage: python3 bench/bench_assembly.py [--repeats N]

Builds representative 2D and 3D tube meshes, extracts the per-element
inputs once, then times the compiled loop kernel against the pure-numpy
einsum kernel on identical data and checks the outputs agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from neckgap import kernels
from neckgap.domains import build_domain_2d
from neckgap.kernels import _local_matrices_numpy, simplex_quadrature
from neckgap.meshing import box_mesh, tube_mesh_2d
from neckgap.metrics import make_metric


def element_inputs(mesh, metric):
    dim = mesh.points.shape[1]
    qp, qw, qphi = simplex_quadrature(dim)
    coords = mesh.points[mesh.simplices]
    xq = np.einsum("qi,eid->eqd", np.column_stack([1 - qp.sum(axis=1), qp]),
                   coords)
    flat = xq.reshape(-1, dim)
    ginv = metric.g_inv_many(flat).reshape(len(coords), len(qw), dim, dim)
    sd = metric.sqrt_det_many(flat).reshape(len(coords), len(qw))
    return coords, ginv, sd, qw, qphi


def run(fn, args, repeats):
    fn(*args)                       # warm up (JIT compile / page in)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    if kernels.USING_NUMBA:
        loops = kernels._local_matrices_jit
        loop_label = "numba"
    else:
        print("note: numba unavailable or disabled; loop kernel is uncompiled")
        loops = kernels._local_matrices_loops
        loop_label = "loops"

    hyp = make_metric("hyperbolic", y_max=2.0)
    mesh2 = tube_mesh_2d(build_domain_2d(hyp, 0.05, 4.0, 2.0), 0.05 / 8)
    m3 = make_metric("mixed3d", a=1.0, b=0.5)
    mesh3 = box_mesh(0.6, 0.1, 0.3, 0.02)

    for label, mesh, metric in (("2D tube", mesh2, hyp), ("3D box", mesh3, m3)):
        inputs = element_inputs(mesh, metric)
        ne = len(mesh.simplices)
        t_np = run(_local_matrices_numpy, inputs, args.repeats)
        t_nb = run(loops, inputs, args.repeats)
        A1, M1 = _local_matrices_numpy(*inputs)
        A2, M2 = loops(*inputs)
        err = max(np.abs(A1 - A2).max(), np.abs(M1 - M2).max())
        scale = max(np.abs(A1).max(), 1.0)
        print(f"{label}: {ne} elements | numpy {t_np * 1e3:8.2f} ms | "
              f"{loop_label} {t_nb * 1e3:8.2f} ms | speedup {t_np / t_nb:5.2f}x | "
              f"max rel diff {err / scale:.2e}")


if __name__ == "__main__":
    main()
