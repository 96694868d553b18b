"""Quick invariant checks on tiny meshes, run by ``elastic-afem selftest``."""
import numpy as np

from .assembly import assemble_a, assemble_system, material
from .eigensolver import solve_eigs, solve_eigs_dense
from .estimator import estimate
from .mesh import Mesh, preset_mesh
from .oracles import estimator_terms_oracle
from .spaces import P0VectorSpace, RtTensorSpace, check_commuting


def _form_identity():
    worst = 0.0
    for name, levels in (("unit_square", 0), ("lshape2d", 2), ("unit_cube", 0)):
        mesh = preset_mesh(name)
        for _ in range(levels):
            mesh = mesh.uniform_refine()
        rt = RtTensorSpace(mesh)
        for nu in (0.2, 0.35, 0.49, 0.4999):
            mat = material(1.0, nu)
            Ao = assemble_a(rt, mat, "original")
            Ad = assemble_a(rt, mat, "deviatoric")
            worst = max(worst, abs(Ao - Ad).max() / abs(Ao).max())
    return worst <= 1e-12, f"max relative entry difference {worst:.2e}"


def _polynomial_tensors(n, rng):
    """Five (f, div f) pairs of polynomial tensor fields in n dimensions."""
    a = rng.standard_normal((5, n, n))
    eye = np.eye(n)

    def others(x, j):
        return np.prod(np.delete(x, j, axis=-1), axis=-1)

    return [
        (lambda x: a[0] * x[..., None, :] ** 2, lambda x: 2 * (a[0] * x[..., None, :]).sum(-1)),
        (
            lambda x: a[1] * x[..., :, None] * x[..., None, :],
            lambda x: (a[1] * (1 + eye)).sum(-1) * x,
        ),
        (lambda x: a[2] * x[..., None, :] ** 3, lambda x: 3 * (a[2] * x[..., None, :] ** 2).sum(-1)),
        (
            lambda x: a[3] * x.sum(-1)[..., None, None] ** 2,
            lambda x: 2 * x.sum(-1)[..., None] * a[3].sum(-1),
        ),
        (
            lambda x: a[4] * np.prod(x, axis=-1)[..., None, None],
            lambda x: (a[4] * np.stack([others(x, j) for j in range(n)], -1)[..., None, :]).sum(-1),
        ),
    ]


def _commuting():
    rng = np.random.default_rng(3)
    worst = 0.0
    for name, levels in (("unit_square", 3), ("lshape2d", 2), ("unit_cube", 1)):
        mesh = preset_mesh(name)
        for _ in range(levels):
            mesh = mesh.uniform_refine()
        rt, p0 = RtTensorSpace(mesh), P0VectorSpace(mesh)
        for f, div_f in _polynomial_tensors(mesh.dim, rng):
            res, norm = check_commuting(rt, p0, f, div_f)
            worst = max(worst, res / norm)
    return worst <= 1e-10, f"max residual / ||div f|| {worst:.2e} (5 tensors, 3 meshes)"


def _dense_oracle():
    worst = 0.0
    mesh = preset_mesh("lshape2d").uniform_refine().uniform_refine().uniform_refine()
    for nu in (0.35, 0.5):
        sys = assemble_system(mesh, material(1.0, nu))
        sparse = solve_eigs(sys, 5).kappas
        dense = solve_eigs_dense(sys, 5)
        worst = max(worst, float(np.max(np.abs(sparse - dense) / dense)))
    return worst <= 1e-9, f"max relative eigenvalue difference {worst:.2e}"


def single_cell_mesh(dim):
    """One reference-like simplex, slightly skewed so no facet is axis-aligned."""
    if dim == 2:
        verts = np.array([[0.1, -0.2], [1.3, 0.1], [0.4, 0.9]])
    else:
        verts = np.array([[0.1, -0.2, 0.0], [1.3, 0.1, 0.2], [0.4, 0.9, -0.1], [0.2, 0.3, 1.1]])
    return Mesh(verts, np.arange(dim + 1)[None, :])


def two_cell_mesh(dim):
    return preset_mesh("unit_square") if dim == 2 else _two_tets()


def _two_tets():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]])
    return Mesh(verts, np.array([[0, 1, 2, 3], [1, 2, 3, 4]]))


ORACLE_MESHES = (
    ("1 triangle", lambda: single_cell_mesh(2)),
    ("2 triangles", lambda: two_cell_mesh(2)),
    ("1 tetrahedron", lambda: single_cell_mesh(3)),
    ("2 tetrahedra", lambda: two_cell_mesh(3)),
    ("unit cube", lambda: preset_mesh("unit_cube")),
)


def estimator_oracle_difference(mesh, mat, rng):
    """Worst relative difference between fast and oracle estimator terms."""
    rho = rng.standard_normal(RtTensorSpace(mesh).num_dofs)
    u = rng.standard_normal(P0VectorSpace(mesh).num_dofs)
    fast = estimate(mesh, rho, u, mat).terms
    slow = estimator_terms_oracle(mesh, rho, u, mat.c_trace(mesh.dim), mat.mu)
    scale = np.maximum(np.abs(slow), 1e-14 * np.abs(slow).max())
    return float(np.max(np.abs(fast - slow) / scale))


def _estimator_oracle():
    rng = np.random.default_rng(7)
    mat = material(1.0, 0.35)
    worst = max(estimator_oracle_difference(make(), mat, rng) for _, make in ORACLE_MESHES)
    return worst <= 1e-10, f"max relative term difference {worst:.2e}"


CHECKS = {
    "form-identity": _form_identity,
    "commuting-diagram": _commuting,
    "dense-eigen-oracle": _dense_oracle,
    "estimator-quadrature-oracle": _estimator_oracle,
}


def run_selftest():
    """Run every check; returns a list of (name, passed, detail)."""
    out = []
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as exc:
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
