"""Residual-type a posteriori indicators for the mixed eigenpair.

For each cell the squared indicator is the sum of five terms, all built from
chi = (rho_h - c tr(rho_h) I) / mu:

0. ||Theta u_h - u_h||^2 on T
1. h_T^2 ||grad u_h - chi||^2 on T
2. h_T^2 ||rot/curl chi||^2 on T
3. sum over interior facets of T of h_e ||[chi tangential]||^2
4. sum over boundary facets of T of h_e ||chi tangential||^2

In 2D the tangential trace is chi t with t = (n_2, -n_1); in 3D it is the
row-wise cross product chi x n.  Interior facet contributions are added to
both neighbours.
"""
from dataclasses import dataclass

import numpy as np

from .postprocess import theta_matrix
from .quadrature import cell_rule, facet_rule
from .spaces import P0VectorSpace, RtTensorSpace, chi_affine, curl_chi, eval_chi, physical_points

TERM_NAMES = ("postprocess", "gradient", "curl", "jump", "boundary")


@dataclass
class EstimatorField:
    per_cell: np.ndarray
    terms: np.ndarray  # (nc, 5)
    variant: str

    @property
    def global_sq(self):
        return float(self.per_cell.sum())

    @property
    def eta(self):
        return float(np.sqrt(self.global_sq))

    @property
    def indicators(self):
        """eta_T, the square roots of the stored per-cell values."""
        return np.sqrt(self.per_cell)


def resolve_variant(mat, variant="auto"):
    if variant == "auto":
        return "limit" if mat.limit else "standard"
    if variant not in ("standard", "limit"):
        raise ValueError(f"unknown estimator variant {variant!r}")
    if variant == "standard" and mat.limit:
        raise ValueError("the standard estimator needs a finite lambda")
    return variant


def tangential_trace(chi, normal):
    """chi (..., n, n) with normals (..., n) -> chi t (2D, (..., n)) or rows x n (3D, (..., n, 3))."""
    n = chi.shape[-1]
    if n == 2:
        t = np.stack([normal[..., 1], -normal[..., 0]], axis=-1)
        return np.einsum("...rk,...k->...r", chi, t)
    return np.cross(chi, normal[..., None, :])


def estimate(mesh, rho_coeffs, u_coeffs, mat, variant="auto", theta=None):
    """Per-cell squared indicators and their term breakdown for one eigenpair."""
    n = mesh.dim
    rt = RtTensorSpace(mesh)
    p0 = P0VectorSpace(mesh)
    rho_coeffs = np.asarray(rho_coeffs, dtype=float)
    u_coeffs = np.asarray(u_coeffs, dtype=float)
    if rho_coeffs.shape != (rt.num_dofs,) or u_coeffs.shape != (p0.num_dofs,):
        raise ValueError("eigenpair does not match the mesh")
    variant = resolve_variant(mat, variant)
    c = 1.0 / n if variant == "limit" else mat.c_trace(n)
    A, d, t0 = chi_affine(rt, rho_coeffs, c, mat.mu)
    terms = np.zeros((mesh.num_cells, 5))
    vol, hT = mesh.volumes, mesh.diameters

    bary, w = cell_rule(n, 4)
    x = physical_points(mesh.cell_coords, bary)
    u = p0.to_cellwise(u_coeffs)
    W = theta_matrix(mesh) if theta is None else theta
    nodal = W @ u
    theta_q = np.einsum("qa,cad->cqd", bary, nodal[mesh.cells])
    terms[:, 0] = vol * np.einsum("cqd,q->c", (theta_q - u[:, None, :]) ** 2, w)

    chi = eval_chi(A, d, t0, c, x)
    grad_u = np.zeros_like(chi)  # u_h is cellwise constant
    terms[:, 1] = hT**2 * vol * np.einsum("cqrs,q->c", (grad_u - chi) ** 2, w)

    curl = curl_chi(d, c)
    terms[:, 2] = hT**2 * vol * np.sum(curl.reshape(len(curl), -1) ** 2, axis=1)

    fb, fw = facet_rule(n, 5)
    xf = physical_points(mesh.facet_coords, fb)  # (nf, q, n)
    f2c = mesh.facet_to_cells
    nrm = np.broadcast_to(mesh.normals[:, None, :], xf.shape)
    c0 = f2c[:, 0]
    tr0 = tangential_trace(eval_chi(A[c0], d[c0], t0[c0], c, xf), nrm)
    he = mesh.facet_diameters
    scale = he * mesh.facet_measures

    inner = mesh.interior_facets
    c1 = f2c[inner, 1]
    tr1 = tangential_trace(eval_chi(A[c1], d[c1], t0[c1], c, xf[inner]), nrm[inner])
    jump = (tr0[inner] - tr1).reshape(len(inner), len(fw), n if n == 2 else n * n)
    jsq = scale[inner] * np.einsum("fqk,q->f", jump**2, fw)
    np.add.at(terms[:, 3], f2c[inner, 0], jsq)
    np.add.at(terms[:, 3], c1, jsq)

    bnd = mesh.boundary_facets
    bt = tr0[bnd].reshape(len(bnd), len(fw), n if n == 2 else n * n)
    bsq = scale[bnd] * np.einsum("fqk,q->f", bt**2, fw)
    np.add.at(terms[:, 4], f2c[bnd, 0], bsq)

    return EstimatorField(per_cell=terms.sum(axis=1), terms=terms, variant=variant)


def effectivity(err, field):
    """err(omega) / eta^2."""
    g = field.global_sq if isinstance(field, EstimatorField) else float(field)
    if g <= 0:
        raise ValueError("effectivity undefined for a zero estimator")
    return err / g
