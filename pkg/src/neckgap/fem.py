"""P1 finite elements for the Dirichlet Laplace-Beltrami operator.

Weak form on a chart with metric g: stiffness integrand g^{ij} du dv
sqrt(det g), mass integrand u v sqrt(det g), per-element degree-2
quadrature. Dirichlet rows/columns are eliminated; eigenpairs come from
shift-invert Lanczos on the reduced pencil with a deterministic start.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import (
    NoConvergence,
    QuadraturePointOutsideChart,
    SolverStagnation,
    ZeroFunction,
)
from .kernels import local_matrices, simplex_quadrature
from .meshing import Mesh

_EIG_SEED = 20240616


@dataclass
class DiscreteForms:
    mesh: Mesh
    A: sp.csr_matrix            # Dirichlet-reduced stiffness
    M: sp.csr_matrix            # Dirichlet-reduced mass
    free: np.ndarray            # free-vertex indices into the full mesh
    metric: object = None

    @property
    def n_free(self) -> int:
        return self.free.size

    def reduce(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float)[self.free]

    def extend(self, reduced: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mesh.num_vertices)
        full[self.free] = reduced
        return full


@dataclass
class EigenPair:
    value: float
    function: np.ndarray        # full vertex vector, zero on the boundary
    residual: float


def assemble(mesh: Mesh, metric) -> DiscreteForms:
    d = mesh.dim
    qpts, qw, qphi = simplex_quadrature(d)
    coords = mesh.points[mesh.simplices]                 # (ne, d+1, d)
    xq = np.einsum("qi,eid->eqd", qphi, coords)          # (ne, nq, d)
    flat = xq.reshape(-1, d)
    for j, (lo, hi) in enumerate(metric.chart_box):
        if flat[:, j].min() < lo or flat[:, j].max() > hi:
            raise QuadraturePointOutsideChart(
                f"coordinate {j} leaves the chart box ({lo}, {hi})")
    ginv = metric.g_inv_many(flat).reshape(xq.shape[0], xq.shape[1], d, d)
    sd = metric.sqrt_det_many(flat).reshape(xq.shape[0], xq.shape[1])
    A_loc, M_loc = local_matrices(coords, ginv, sd, qw, qphi)

    nv = mesh.num_vertices
    rows = np.repeat(mesh.simplices, d + 1, axis=1).ravel()
    cols = np.tile(mesh.simplices, (1, d + 1)).ravel()
    A = sp.coo_matrix((A_loc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    M = sp.coo_matrix((M_loc.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
    free = np.flatnonzero(~mesh.boundary)
    A = A[free][:, free].tocsr()
    M = M[free][:, free].tocsr()
    asym = abs(A - A.T).max()
    msym = abs(M - M.T).max()
    if max(asym, msym) > 1e-12 * max(1.0, abs(A).max()):
        raise SolverStagnation(f"assembled forms not symmetric ({asym:.1e})")
    return DiscreteForms(mesh=mesh, A=A, M=M, free=free, metric=metric)


def smallest_eigenpairs(forms: DiscreteForms, k: int = 2) -> list[EigenPair]:
    if k < 2:
        raise ValueError("k >= 2 required")
    n = forms.n_free
    if n < 10 * k:
        raise ValueError(f"reduced dimension {n} < 10k = {10 * k}")
    v0 = np.random.default_rng(_EIG_SEED).standard_normal(n)
    try:
        vals, vecs = eigsh(forms.A, k=k, M=forms.M, sigma=0.0, which="LM",
                           v0=v0, tol=0)
    except ArpackNoConvergence as exc:
        raise SolverStagnation(f"eigensolver stagnated: {exc}") from exc
    except RuntimeError as exc:
        raise SolverStagnation(f"shift-invert factorization failed: {exc}") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    pairs = []
    for i in range(k):
        lam = float(vals[i])
        v = vecs[:, i]
        v = v / np.sqrt(v @ (forms.M @ v))
        peak = np.argmax(np.abs(v))
        if v[peak] < 0:
            v = -v
        res = float(np.linalg.norm(forms.A @ v - lam * (forms.M @ v)))
        if res >= 1e-8 * max(lam, 1.0):
            raise NoConvergence(
                f"eigenpair {i} residual {res:.2e} exceeds 1e-8*lambda",
                residual=res)
        pairs.append(EigenPair(value=lam, function=forms.extend(v), residual=res))
    for i in range(k):
        for j in range(i + 1):
            ip = pairs[i].function[forms.free] @ (forms.M @ pairs[j].function[forms.free])
            if abs(ip - (i == j)) > 1e-8:
                raise NoConvergence(
                    f"eigenpairs {i},{j} not M-orthonormal ({ip:.2e})",
                    residual=abs(ip - (i == j)))
    return pairs


def rayleigh_quotient(forms: DiscreteForms, values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if np.abs(values[forms.mesh.boundary]).max(initial=0.0) > 1e-12 * max(
            1.0, np.abs(values).max()):
        raise ValueError("function must vanish on Dirichlet vertices")
    v = forms.reduce(values)
    denom = v @ (forms.M @ v)
    if denom <= 0:
        raise ZeroFunction("Rayleigh quotient of the zero function")
    return float((v @ (forms.A @ v)) / denom)


def interpolate_vertex_function(f, mesh: Mesh) -> np.ndarray:
    """Evaluate a callable at mesh vertices, zeroed on the boundary."""
    vals = np.asarray(f(mesh.points), dtype=float)
    vals = vals.copy()
    vals[mesh.boundary] = 0.0
    return vals


def export_matrix(matrix: sp.spmatrix, path: str) -> None:
    """Coordinate-format text dump: 'row col value' per line."""
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def export_eigenfunction(mesh: Mesh, values: np.ndarray, path: str) -> None:
    header = ["x", "y", "z"][: mesh.dim] + ["value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p, v in zip(mesh.points, values):
            writer.writerow([f"{c:.17g}" for c in p] + [f"{v:.17g}"])
