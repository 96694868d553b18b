"""Slow, independent reference computations used by the self-test.

Nothing here shares evaluation code with the production estimator: fields
are rebuilt point by point from :func:`rt_basis_eval`, derivatives are taken
by central differences (exact up to rounding for the affine fields involved)
and integrals use high-degree collapsed Gauss rules.
"""
import numpy as np

from .quadrature import conical_rule
from .spaces import RtTensorSpace, barycentric, rt_basis_eval

ORACLE_DEGREE = 8  # integrands are at most quadratic


def _rho_at(space, coeffs, t, x):
    n = space.dim
    val = np.zeros((n, n))
    for dof, row, vec in rt_basis_eval(space, t, x):
        val[row] += coeffs[dof] * vec
    return val


def _chi_at(space, coeffs, t, x, c, mu):
    rho = _rho_at(space, coeffs, t, x)
    return (rho - c * np.trace(rho) * np.eye(space.dim)) / mu


def _curl_fd(space, coeffs, t, c, mu):
    mesh = space.mesh
    n = space.dim
    x0 = mesh.centroids[t]
    h = 1e-3 * mesh.diameters[t]
    jac = np.zeros((n, n, n))  # jac[r, k, l] = d chi_rk / d x_l
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        jac[:, :, l] = (_chi_at(space, coeffs, t, x0 + e, c, mu) - _chi_at(space, coeffs, t, x0 - e, c, mu)) / (2 * h)
    if n == 2:
        return np.array([jac[r, 1, 0] - jac[r, 0, 1] for r in range(2)])
    return np.array(
        [[jac[r, 2, 1] - jac[r, 1, 2], jac[r, 0, 2] - jac[r, 2, 0], jac[r, 1, 0] - jac[r, 0, 1]] for r in range(3)]
    )


def _patch_averages(mesh, u_cell, t):
    out = []
    for z in mesh.cells[t]:
        patch = mesh.vertex_patch(z)
        vol = mesh.volumes[patch]
        out.append((vol[:, None] * u_cell[patch]).sum(axis=0) / vol.sum())
    return np.array(out)


def _tangential(chi, normal):
    if len(normal) == 2:
        return chi @ np.array([normal[1], -normal[0]])
    return np.cross(chi, normal[None, :]).ravel()


def estimator_terms_oracle(mesh, rho_coeffs, u_coeffs, c, mu, cells=None):
    """Five per-cell terms (len(cells), 5) by brute-force quadrature."""
    space = RtTensorSpace(mesh)
    n = mesh.dim
    u_cell = np.asarray(u_coeffs).reshape(n, -1).T
    cells = range(mesh.num_cells) if cells is None else cells
    cb, cw = conical_rule(n, ORACLE_DEGREE)
    fb, fw = conical_rule(n - 1, ORACLE_DEGREE)
    out = []
    for t in cells:
        p = mesh.cell_coords[t]
        vol = mesh.volumes[t]
        hT = mesh.diameters[t]
        terms = np.zeros(5)
        nodal = _patch_averages(mesh, u_cell, t)
        for lam, w in zip(cb, cw):
            x = lam @ p
            diff = barycentric(mesh, t, x) @ nodal - u_cell[t]
            terms[0] += w * vol * diff @ diff
            chi = _chi_at(space, rho_coeffs, t, x, c, mu)
            terms[1] += w * vol * hT**2 * np.sum(chi**2)
        curl = _curl_fd(space, rho_coeffs, t, c, mu)
        terms[2] = hT**2 * vol * np.sum(curl**2)
        for j in range(n + 1):
            f = mesh.cell_to_facets[t, j]
            fx = mesh.vertices[mesh.facets[f]]
            nrm = mesh.normals[f]
            fmeas = mesh.facet_measures[f]
            he = max(np.linalg.norm(fx[a] - fx[b]) for a in range(n) for b in range(a + 1, n)) if n == 3 else fmeas
            nb = [k for k in mesh.facet_to_cells[f] if k >= 0 and k != t]
            acc = 0.0
            for lam, w in zip(fb, fw):
                x = lam @ fx
                mine = _tangential(_chi_at(space, rho_coeffs, t, x, c, mu), nrm)
                if nb:
                    other = _tangential(_chi_at(space, rho_coeffs, nb[0], x, c, mu), nrm)
                    mine = mine - other
                acc += w * fmeas * mine @ mine
            terms[3 if nb else 4] += he * acc
        out.append(terms)
    return np.array(out)
