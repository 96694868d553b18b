"""Patch averaging of piecewise-constant displacements onto continuous P1."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .quadrature import cell_rule, conical_rule
from .spaces import P0VectorSpace, P1VectorSpace, physical_points


def theta_matrix(mesh):
    """Scalar (nv, nc) operator: vertex value = sum over the patch of |T| v_T / |patch|."""
    n1 = mesh.dim + 1
    rows = mesh.cells.ravel()
    cols = np.repeat(np.arange(mesh.num_cells), n1)
    vals = np.repeat(mesh.volumes, n1) / mesh.patch_measures[rows]
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.num_vertices, mesh.num_cells))


@dataclass
class PostprocessedField:
    p1_coeffs: np.ndarray
    source: np.ndarray
    space: P1VectorSpace


def theta(space_p0, coeffs, matrix=None):
    """Apply the patch-averaging operator componentwise to a P0 vector field."""
    m = space_p0.mesh
    W = theta_matrix(m) if matrix is None else matrix
    cellwise = space_p0.to_cellwise(coeffs)
    nodal = W @ cellwise
    return PostprocessedField(p1_coeffs=nodal.T.ravel(), source=np.asarray(coeffs), space=P1VectorSpace(m))


def _linear_sq_integral(mesh, nodal_minus_const):
    # int over T of (sum_a w_a lam_a)^2 = |T| (sum w_a^2 + (sum w_a)^2) / ((n+1)(n+2))
    n = mesh.dim
    w = nodal_minus_const
    s2 = np.sum(w**2, axis=1) + np.sum(w, axis=1) ** 2
    return mesh.volumes[:, None] * s2 / ((n + 1) * (n + 2))


def p1_l2_norm(mesh, nodal):
    """L2 norm of a continuous P1 vector field given vertex values (nv, n)."""
    w = nodal[mesh.cells]  # (nc, n+1, n)
    return float(np.sqrt(_linear_sq_integral(mesh, w).sum()))


def theta_minus_u_sq(mesh, nodal, cellwise):
    """Per-cell squared L2 norm of (Theta u - u), shape (nc,)."""
    w = nodal[mesh.cells] - cellwise[:, None, :]
    return _linear_sq_integral(mesh, w).sum(axis=1)


def theta_projection_identity(v, mesh, degree=6, exact_degree=12):
    """||Theta(cell means of v) - Theta(v)|| with Theta(v) built from accurate cell integrals."""
    W = theta_matrix(mesh)
    bary, w = cell_rule(mesh.dim, degree)
    x = physical_points(mesh.cell_coords, bary)
    means = np.einsum("cqi,q->ci", np.asarray(v(x)), w)
    bary_e, w_e = conical_rule(mesh.dim, exact_degree)
    xe = physical_points(mesh.cell_coords, bary_e)
    exact = np.einsum("cqi,q->ci", np.asarray(v(xe)), w_e)
    return p1_l2_norm(mesh, W @ means - W @ exact)


def superconvergence_probe(levels):
    """||Theta u_h - u_h|| for a sequence of (mesh, u_coeffs) pairs."""
    out = []
    for mesh, u in levels:
        p0 = P0VectorSpace(mesh)
        cw = p0.to_cellwise(u)
        nodal = theta_matrix(mesh) @ cw
        out.append(float(np.sqrt(theta_minus_u_sq(mesh, nodal, cw).sum())))
    return np.array(out)
