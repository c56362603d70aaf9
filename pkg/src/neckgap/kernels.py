"""Element assembly kernels.

The hot loop (per-element stiffness/mass contributions with variable
metric coefficients) is compiled with numba when available; setting the
environment variable NECKGAP_NO_NUMBA selects the pure-numpy einsum path
instead. Both paths produce bit-identical local matrices up to the usual
floating-point reassociation, and the test suite runs against either.
"""

from __future__ import annotations

import os

import numpy as np

USING_NUMBA = False
if not os.environ.get("NECKGAP_NO_NUMBA"):
    try:
        from numba import njit
        USING_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def simplex_quadrature(dim: int):
    """Degree-2 quadrature on the reference simplex.

    Returns (points (nq, dim), weights (nq,), basis values (nq, dim+1));
    weights sum to the reference simplex volume 1/dim!.
    """
    if dim == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        w = np.full(3, 1 / 6)
    elif dim == 3:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.array([[a, b, b], [b, a, b], [b, b, a], [b, b, b]])
        w = np.full(4, 1 / 24)
    else:
        raise ValueError("only 2D/3D simplices supported")
    phi = np.column_stack([1 - pts.sum(axis=1), pts])
    return pts, w, phi


def _local_matrices_numpy(coords, ginv_q, sd_q, qw, qphi):
    """coords (ne, d+1, d); ginv_q (ne, nq, d, d); sd_q (ne, nq)."""
    edges = coords[:, 1:, :] - coords[:, :1, :]          # (ne, d, d)
    detJ = np.abs(np.linalg.det(edges))
    einv = np.linalg.inv(edges)                           # (ne, d, d)
    d = coords.shape[2]
    grads = np.empty((coords.shape[0], d + 1, d))
    grads[:, 1:, :] = np.transpose(einv, (0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    wq = qw[None, :] * sd_q                               # (ne, nq)
    G = np.einsum("eq,eqab->eab", wq, ginv_q)
    A = np.einsum("e,eia,eab,ejb->eij", detJ, grads, G, grads)
    M = np.einsum("e,eq,qi,qj->eij", detJ, wq, qphi, qphi)
    return A, M


def _local_matrices_loops(coords, ginv_q, sd_q, qw, qphi):
    ne = coords.shape[0]
    d = coords.shape[2]
    nv = d + 1
    nq = qw.shape[0]
    A = np.zeros((ne, nv, nv))
    M = np.zeros((ne, nv, nv))
    for e in range(ne):
        edges = np.empty((d, d))
        for k in range(d):
            for c in range(d):
                edges[k, c] = coords[e, k + 1, c] - coords[e, 0, c]
        einv = np.linalg.inv(edges)
        detJ = abs(np.linalg.det(edges))
        grads = np.zeros((nv, d))
        for k in range(d):
            for c in range(d):
                grads[k + 1, c] = einv[c, k]
                grads[0, c] -= einv[c, k]
        for q in range(nq):
            w = qw[q] * sd_q[e, q] * detJ
            for i in range(nv):
                for j in range(nv):
                    aij = 0.0
                    for a in range(d):
                        for b in range(d):
                            aij += grads[i, a] * ginv_q[e, q, a, b] * grads[j, b]
                    A[e, i, j] += w * aij
                    M[e, i, j] += w * qphi[q, i] * qphi[q, j]
    return A, M


if USING_NUMBA:
    _local_matrices_jit = njit(cache=True)(_local_matrices_loops)

    def local_matrices(coords, ginv_q, sd_q, qw, qphi):
        return _local_matrices_jit(coords, ginv_q, sd_q, qw, qphi)
else:
    local_matrices = _local_matrices_numpy
