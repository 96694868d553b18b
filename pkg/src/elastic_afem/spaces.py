"""Row-wise lowest-order Raviart-Thomas tensors, piecewise constants and P1.

On a cell T with vertices p_0..p_n, the local basis function attached to the
facet opposite p_j is

    phi_j(x) = s_j / (n |T|) * (x - p_j),

with s_j = +1 when the global facet normal points out of T.  Its normal flux
through facet j is one and through every other facet zero, so global dofs
are facet fluxes.  A tensor dof ``(i, f)`` places phi on row ``i``; its
global index is ``i * num_facets + f``.
"""
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh
from .quadrature import cell_rule, facet_rule


def physical_points(coords, bary):
    """Map barycentric points (q, n+1) onto cells (..., n+1, n) -> (..., q, n)."""
    return np.einsum("qa,...ad->...qd", bary, coords)


@dataclass(frozen=True, eq=False)
class RtTensorSpace:
    mesh: Mesh

    @property
    def dim(self):
        return self.mesh.dim

    @property
    def num_dofs(self):
        return self.dim * self.mesh.num_facets

    @property
    def dof_sign(self):
        return self.mesh.facet_signs

    def cell_dofs(self):
        """(nc, n, n+1) global dof index of row ``i``, local facet ``j``."""
        m = self.mesh
        rows = np.arange(self.dim)[None, :, None] * m.num_facets
        return rows + m.cell_to_facets[:, None, :]

    def _scale(self):
        m = self.mesh
        return m.facet_signs / (self.dim * m.volumes)[:, None]

    def basis_values(self, cells, x):
        """phi_j at points ``x`` (len(cells), q, n) -> (len(cells), q, n+1, n)."""
        m = self.mesh
        p = m.cell_coords[cells]
        s = self._scale()[cells]
        return s[:, None, :, None] * (x[:, :, None, :] - p[:, None, :, :])

    def affine_coefficients(self, coeffs):
        """Per-cell form of a tensor field: row i of rho(x) equals A[:, i] + d[:, i] x.

        Returns ``(A, d)`` with shapes (nc, n, n) and (nc, n).
        """
        coeffs = np.asarray(coeffs, dtype=float)
        m = self.mesh
        c = coeffs[self.cell_dofs()] * self._scale()[:, None, :]  # (nc, n, n+1)
        d = c.sum(axis=2)
        A = -np.einsum("cij,cjk->cik", c, m.cell_coords)
        return A, d

    def divergence(self, coeffs):
        """Cellwise constant row divergences, shape (nc, n)."""
        coeffs = np.asarray(coeffs, dtype=float)
        m = self.mesh
        c = coeffs[self.cell_dofs()] * m.facet_signs[:, None, :]
        return c.sum(axis=2) / m.volumes[:, None]


@dataclass(frozen=True, eq=False)
class P0VectorSpace:
    mesh: Mesh

    @property
    def num_dofs(self):
        return self.mesh.dim * self.mesh.num_cells

    def to_cellwise(self, coeffs):
        """(n * nc,) component-major vector -> (nc, n)."""
        return np.asarray(coeffs).reshape(self.mesh.dim, -1).T

    def from_cellwise(self, values):
        return np.asarray(values).T.ravel()


@dataclass(frozen=True, eq=False)
class P1VectorSpace:
    mesh: Mesh

    @property
    def num_dofs(self):
        return self.mesh.dim * self.mesh.num_vertices

    def to_nodal(self, coeffs):
        return np.asarray(coeffs).reshape(self.mesh.dim, -1).T


@dataclass
class TensorFieldEval:
    value: np.ndarray
    trace: float
    deviator: np.ndarray
    rot: np.ndarray


class PointOutsideCell(ValueError):
    pass


def barycentric(mesh, t, x):
    p = mesh.cell_coords[t]
    jac = (p[1:] - p[0]).T
    lam = np.linalg.solve(jac, np.asarray(x, dtype=float) - p[0])
    return np.concatenate([[1.0 - lam.sum()], lam])


def _check_inside(mesh, t, x):
    if barycentric(mesh, t, x).min() < -1e-12:
        raise PointOutsideCell(f"point {x} lies outside cell {t}")


def rt_basis_eval(space, t, x):
    """Nonzero tensor basis functions on cell ``t`` at ``x``: list of (dof, row, vector)."""
    _check_inside(space.mesh, t, x)
    x = np.asarray(x, dtype=float)
    vals = space.basis_values(np.array([t]), x[None, None, :])[0, 0]
    dofs = space.cell_dofs()[t]
    return [(int(dofs[i, j]), i, vals[j].copy()) for i in range(space.dim) for j in range(space.dim + 1)]


def interpolate_rt(space, f, degree=5):
    """Facet-flux interpolant: dof (i, e) = integral over e of (row i of f) . n_e.

    ``f`` maps points (..., n) to tensors (..., n, n).
    """
    m = space.mesh
    bary, w = facet_rule(m.dim, degree)
    x = physical_points(m.facet_coords, bary)  # (nf, q, n)
    vals = np.asarray(f(x))  # (nf, q, n, n)
    flux = np.einsum("fqij,fj->fqi", vals, m.normals)
    moments = np.einsum("fqi,q->fi", flux, w) * m.facet_measures[:, None]
    return moments.T.ravel()


def project_p0(space, g, degree=4):
    """Cell means of ``g`` (points (..., n) -> vectors (..., n)), component-major."""
    m = space.mesh
    bary, w = cell_rule(m.dim, degree)
    x = physical_points(m.cell_coords, bary)
    vals = np.asarray(g(x))  # (nc, q, n)
    return space.from_cellwise(np.einsum("cqi,q->ci", vals, w))


def check_commuting(space_rt, space_p0, f, div_f, degree=6):
    """L2 norm of div(interpolant of f) minus the cell means of div f.

    Returns ``(residual, norm_div_f)``.
    """
    m = space_rt.mesh
    coeffs = interpolate_rt(space_rt, f, degree=degree)
    lhs = space_rt.divergence(coeffs)
    rhs = space_p0.to_cellwise(project_p0(space_p0, div_f, degree=degree))
    res = np.sqrt(np.sum(m.volumes[:, None] * (lhs - rhs) ** 2))
    bary, w = cell_rule(m.dim, degree)
    x = physical_points(m.cell_coords, bary)
    dv = np.asarray(div_f(x))
    norm = np.sqrt(np.sum(np.einsum("cqi,q->c", dv**2, w) * m.volumes))
    return float(res), float(norm)


def chi_affine(space, coeffs, c_trace, mu):
    """Per-cell affine form of chi = (rho - c tr(rho) I) / mu.

    With ``(A, d)`` from :meth:`RtTensorSpace.affine_coefficients` the trace of
    rho is ``t0 + d . x``; the three pieces come back divided by mu.
    """
    A, d = space.affine_coefficients(coeffs)
    t0 = np.trace(A, axis1=1, axis2=2)
    return A / mu, d / mu, t0 / mu


def eval_chi(A, d, t0, c_trace, x):
    """chi at points x (nc, q, n) -> (nc, q, n, n)."""
    n = x.shape[-1]
    rho = A[:, None, :, :] + d[:, None, :, None] * x[:, :, None, :]
    tr = t0[:, None] + np.einsum("ci,cqi->cq", d, x)
    return rho - c_trace * tr[:, :, None, None] * np.eye(n)


def curl_chi(d, c_trace):
    """Row-wise rot (2D, shape (nc, 2)) or curl (3D, shape (nc, 3, 3)) of chi.

    Only the trace term contributes: curl of row r equals -c * d x e_r.
    """
    n = d.shape[1]
    if n == 2:
        return c_trace * np.column_stack([d[:, 1], -d[:, 0]])
    eye = np.eye(3)
    return -c_trace * np.cross(d[:, None, :], eye[None, :, :])


def eval_tensor_field(space, coeffs, t, x, c_trace, mu=1.0):
    """Value, trace, deviator and row-wise rot/curl of chi on cell ``t`` at ``x``."""
    _check_inside(space.mesh, t, x)
    A, d = space.affine_coefficients(coeffs)
    A, d = A[t:t + 1] / mu, d[t:t + 1] / mu
    t0 = np.trace(A, axis1=1, axis2=2)
    x = np.asarray(x, dtype=float)
    val = eval_chi(A, d, t0, c_trace, x[None, None, :])[0, 0]
    n = space.dim
    tr = float(np.trace(val))
    dev = val - tr / n * np.eye(n)
    return TensorFieldEval(value=val, trace=tr, deviator=dev, rot=curl_chi(d, c_trace)[0])
