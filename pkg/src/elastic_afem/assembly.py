"""Material parameters and sparse assembly of the mixed pseudostress system."""
from dataclasses import dataclass
import math

import numpy as np
import scipy.io
import scipy.sparse as sp

from .quadrature import cell_rule
from .spaces import P0VectorSpace, RtTensorSpace, physical_points


@dataclass(frozen=True)
class MaterialParams:
    E: float
    nu: float
    lam: float
    mu: float
    limit: bool

    def c_trace(self, n):
        """Coefficient c in chi = (rho - c tr(rho) I) / mu."""
        if self.limit:
            return 1.0 / n
        return (self.lam + self.mu) / (n * self.lam + (n + 1) * self.mu)

    def trace_penalty(self, n):
        """Weight of the tr-tr term in the deviatoric form; zero in the limit."""
        if self.limit:
            return 0.0
        return 1.0 / (n * (n * self.lam + (n + 1) * self.mu))


def material(E, nu):
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0 < nu <= 0.5:
        raise ValueError(f"Poisson ratio must lie in (0, 1/2], got {nu}")
    mu = E / (2 * (1 + nu))
    if nu == 0.5:
        return MaterialParams(E, nu, math.inf, mu, True)
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    return MaterialParams(E, nu, lam, mu, False)


def _local_to_global(space):
    dofs = space.cell_dofs().reshape(space.mesh.num_cells, -1)  # (nc, n*(n+1)), row-major (i, j)
    rows = np.repeat(dofs, dofs.shape[1], axis=1).ravel()
    cols = np.tile(dofs, (1, dofs.shape[1])).ravel()
    return rows, cols


def _gather(space, local):
    rows, cols = _local_to_global(space)
    N = space.num_dofs
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    mat.sum_duplicates()
    return mat


def _moment_grams(space):
    """Closed-form local integrals of products of RT0 basis functions.

    Returns ``full[c, j, k] = int phi_j . phi_k`` and
    ``comp[c, j, a, k, b] = int (phi_j)_a (phi_k)_b``.
    """
    m = space.mesh
    n = m.dim
    p = m.cell_coords
    # int lam_a lam_b = |T| (1 + delta_ab) / ((n+1)(n+2))
    L = (np.ones((n + 1, n + 1)) + np.eye(n + 1)) / ((n + 1) * (n + 2))
    diff = p[:, None, :, :] - p[:, :, None, :]  # diff[c, j, a] = p_a - p_j
    comp = np.einsum("cjad,ab,ckbe->cjdke", diff, L, diff)
    s = space._scale()
    comp *= (s[:, :, None, None, None] * s[:, None, None, :, None] * m.volumes[:, None, None, None, None])
    full = np.einsum("cjdkd->cjk", comp)
    return full, comp


def _original_local(space, mat):
    """(1/mu) int xi:tau - (c/mu) int tr xi tr tau, from the closed-form moments."""
    n = space.dim
    full, comp = _moment_grams(space)
    nc = space.mesh.num_cells
    eye = np.eye(n)
    frob = eye[None, :, None, :, None] * full[:, None, :, None, :]  # (c, i, j, i', k)
    # tr(e_i (x) phi_j) = (phi_j)_i
    trtr = np.einsum("cjikl->cijlk", comp)  # comp[c, j, i, k, i'] -> (c, i, j, i', k)
    coef = mat.c_trace(n) / mat.mu
    local = frob / mat.mu - coef * trtr
    return local.reshape(nc, n * (n + 1), n * (n + 1))


def _deviatoric_local(space, mat, chunk=4096):
    """(1/mu) int dev xi : dev tau + w int tr xi tr tau, by cell quadrature of explicit tensors."""
    m = space.mesh
    n = m.dim
    nloc = n * (n + 1)
    bary, w = cell_rule(n, 4)
    w_tr = mat.trace_penalty(n)
    out = np.empty((m.num_cells, nloc, nloc))
    eye = np.eye(n)
    for lo in range(0, m.num_cells, chunk):
        cells = np.arange(lo, min(lo + chunk, m.num_cells))
        x = physical_points(m.cell_coords[cells], bary)
        phi = space.basis_values(cells, x)  # (c, q, j, d)
        # tensor basis (i, j): row i equals phi_j
        tens = eye[None, None, :, None, :, None] * phi[:, :, None, :, None, :]  # (c,q,i,j,r,d)
        tens = tens.reshape(len(cells), len(w), nloc, n, n)
        tr = np.einsum("cqlrr->cql", tens)
        dev = tens - tr[..., None, None] * eye / n
        wq = w[None, :] * m.volumes[cells, None]
        dd = np.einsum("cq,cqlrs,cqmrs->clm", wq, dev, dev)
        tt = np.einsum("cq,cql,cqm->clm", wq, tr, tr)
        out[cells] = dd / mat.mu + w_tr * tt
    return out


def assemble_a(space, mat, form="deviatoric"):
    """Global matrix of the a-form on the RT tensor space.

    ``form`` is ``original``, ``deviatoric`` or ``limit``.  The original form
    is undefined for an incompressible material.
    """
    if form == "original":
        if mat.limit:
            raise ValueError("the original a-form is undefined at nu = 1/2")
        local = _original_local(space, mat)
    elif form == "deviatoric":
        local = _deviatoric_local(space, mat)
    elif form == "limit":
        lim = MaterialParams(mat.E, mat.nu, math.inf, mat.mu, True)
        local = _deviatoric_local(space, lim)
    else:
        raise ValueError(f"unknown a-form {form!r}")
    local = 0.5 * (local + local.transpose(0, 2, 1))
    return _gather(space, local)


def assemble_b(space_rt, space_p0):
    """B[(i, T), (i, f)] = integral over T of row-i divergence = facet sign."""
    m = space_rt.mesh
    if space_p0.mesh is not m:
        raise ValueError("spaces live on different meshes")
    n, nc, nf = m.dim, m.num_cells, m.num_facets
    rows, cols, vals = [], [], []
    for i in range(n):
        rows.append(np.repeat(np.arange(nc), n + 1) + i * nc)
        cols.append(m.cell_to_facets.ravel() + i * nf)
        vals.append(m.facet_signs.ravel())
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * nc, n * nf)
    )


def assemble_mass(space_p0):
    m = space_p0.mesh
    return sp.diags(np.tile(m.volumes, m.dim)).tocsr()


def assemble_trace_constraint(space_rt):
    """c_j = integral over the domain of tr(basis_j)."""
    m = space_rt.mesh
    n = m.dim
    s = space_rt._scale() * m.volumes[:, None]  # s_j / n
    # integral of (x - p_j)_i over T is |T| (centroid - p_j)_i
    arm = m.centroids[:, None, :] - m.cell_coords  # (c, j, d)
    vals = np.einsum("cj,cji->cij", s, arm)
    out = np.zeros(space_rt.num_dofs)
    np.add.at(out, space_rt.cell_dofs().ravel(), vals.ravel())
    return out


@dataclass
class SaddleSystem:
    A: sp.csr_matrix
    B: sp.csr_matrix
    M: sp.csr_matrix
    c: np.ndarray
    space_rt: RtTensorSpace
    space_p0: P0VectorSpace
    mat: MaterialParams = None

    @property
    def n_rho(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[0]

    @property
    def num_dofs(self):
        """dim(H x Q): pseudostress plus displacement dofs, multiplier excluded."""
        return self.n_rho + self.n_u

    def block_matrix(self):
        """K = [[A, B^T, c], [B, 0, 0], [c^T, 0, 0]]."""
        c = sp.csr_matrix(self.c[:, None])
        return sp.bmat([[self.A, self.B.T, c], [self.B, None, None], [c.T, None, None]], format="csc")

    def rhs_matrix(self):
        """The pencil's right-hand side: -M on the displacement block, zero elsewhere."""
        z1 = sp.csr_matrix((self.n_rho, self.n_rho))
        z2 = sp.csr_matrix((1, 1))
        return sp.block_diag([z1, -self.M, z2], format="csc")


def assemble_system(mesh, mat, form=None):
    """Assemble the saddle system; by default the limit form when ``mat.limit``."""
    if form is None:
        form = "limit" if mat.limit else "deviatoric"
    rt = RtTensorSpace(mesh)
    p0 = P0VectorSpace(mesh)
    return SaddleSystem(
        A=assemble_a(rt, mat, form),
        B=assemble_b(rt, p0),
        M=assemble_mass(p0),
        c=assemble_trace_constraint(rt),
        space_rt=rt,
        space_p0=p0,
        mat=mat,
    )


def dump_matrix(path, matrix):
    """Write a sparse matrix in MatrixMarket coordinate format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))
