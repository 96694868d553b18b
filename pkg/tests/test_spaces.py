import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastic_afem.mesh import Mesh, preset_mesh
from elastic_afem.quadrature import cell_rule
from elastic_afem.spaces import (
    P0VectorSpace,
    PointOutsideCell,
    RtTensorSpace,
    check_commuting,
    eval_tensor_field,
    interpolate_rt,
    physical_points,
    project_p0,
    rt_basis_eval,
)
from elastic_afem.selftest import _polynomial_tensors

from conftest import refined

MESHES = [("unit_square", 2), ("lshape2d", 1), ("unit_cube", 1), ("lshape3d", 0)]


def reference_triangle():
    return Mesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]))


def test_facet_flux_at_midpoint():
    m = reference_triangle()
    rt = RtTensorSpace(m)
    # facet opposite vertex 0 joins (1,0) and (0,1)
    f = m.cell_to_facets[0, 0]
    mid = np.array([0.5, 0.5])
    for dof, row, vec in rt_basis_eval(rt, 0, mid):
        if dof == row * m.num_facets + f:
            flux = vec @ m.normals[f] * m.facet_measures[f]
            assert np.isclose(flux, 1.0, atol=1e-14)
        elif dof % m.num_facets != f:
            assert abs(vec @ m.normals[f]) < 1e-14


def test_point_outside_cell():
    rt = RtTensorSpace(reference_triangle())
    with pytest.raises(PointOutsideCell):
        rt_basis_eval(rt, 0, [1.0, 1.0])


@pytest.mark.parametrize("name,levels", MESHES)
def test_dual_basis(name, levels):
    m = refined(name, levels)
    rt = RtTensorSpace(m)
    rng = np.random.default_rng(0)
    coeffs = rng.standard_normal(rt.num_dofs)
    A, d = rt.affine_coefficients(coeffs)

    # facet-flux moments of the field, computed cell by cell, reproduce the coefficients
    n = m.dim
    for t in range(min(m.num_cells, 40)):
        for j in range(n + 1):
            f = m.cell_to_facets[t, j]
            xm = m.facet_coords[f].mean(axis=0)
            rows = A[t] + d[t][:, None] * xm[None, :]
            flux = rows @ m.normals[f] * m.facet_measures[f]
            # normal component is constant on a facet, so the midpoint value is the mean
            assert np.allclose(flux, coeffs[np.arange(n) * m.num_facets + f], atol=1e-12)


@pytest.mark.parametrize("name,levels", MESHES)
def test_normal_continuity(name, levels):
    m = refined(name, levels)
    rt = RtTensorSpace(m)
    rng = np.random.default_rng(1)
    A, d = rt.affine_coefficients(rng.standard_normal(rt.num_dofs))
    inner = m.interior_facets[:100]
    for f in inner:
        lam = rng.dirichlet(np.ones(m.dim))
        x = lam @ m.facet_coords[f]
        t0, t1 = m.facet_to_cells[f]
        v0 = (A[t0] + d[t0][:, None] * x) @ m.normals[f]
        v1 = (A[t1] + d[t1][:, None] * x) @ m.normals[f]
        assert np.allclose(v0, v1, atol=1e-12)


def test_rt_reproduces_affine_rows():
    m = refined("lshape2d", 1)
    rt = RtTensorSpace(m)
    a = np.array([[1.0, -2.0], [0.5, 3.0]])
    c = np.array([0.7, -1.1])
    coeffs = interpolate_rt(rt, lambda x: a + c[:, None] * x[..., None, :])
    A, d = rt.affine_coefficients(coeffs)
    assert np.allclose(A, a, atol=1e-12)
    assert np.allclose(d, c, atol=1e-12)


def test_divergence_matches_affine_form():
    m = refined("unit_cube", 1)
    rt = RtTensorSpace(m)
    coeffs = np.random.default_rng(2).standard_normal(rt.num_dofs)
    _, d = rt.affine_coefficients(coeffs)
    assert np.allclose(rt.divergence(coeffs), m.dim * d, atol=1e-10)


def test_project_p0():
    m = refined("lshape2d", 1)
    p0 = P0VectorSpace(m)
    const = p0.to_cellwise(project_p0(p0, lambda x: np.broadcast_to([2.0, -1.0], x.shape)))
    assert np.allclose(const, [2.0, -1.0])
    lin = p0.to_cellwise(project_p0(p0, lambda x: np.stack([x[..., 0] + 2 * x[..., 1], -x[..., 0]], -1)))
    c = m.centroids
    assert np.allclose(lin, np.column_stack([c[:, 0] + 2 * c[:, 1], -c[:, 0]]))


def test_projection_error_is_first_order():
    g = lambda x: np.stack([np.sin(3 * x[..., 0]), np.cos(2 * x[..., 1])], -1)
    errs, hs = [], []
    m = preset_mesh("unit_square")
    for _ in range(4):
        m = m.uniform_refine().uniform_refine()
        p0 = P0VectorSpace(m)
        means = p0.to_cellwise(project_p0(p0, g, degree=8))
        bary, w = cell_rule(2, 8)
        x = physical_points(m.cell_coords, bary)
        err = np.sqrt(np.sum(m.volumes * np.einsum("cqi,q->c", (g(x) - means[:, None]) ** 2, w)))
        errs.append(err)
        hs.append(m.diameters.max())
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 0.9 < slope < 1.1


@pytest.mark.parametrize("name,levels", [("unit_square", 3), ("lshape2d", 2), ("unit_cube", 1)])
def test_commuting_polynomials(name, levels):
    m = refined(name, levels)
    rng = np.random.default_rng(5)
    for f, div_f in _polynomial_tensors(m.dim, rng):
        res, norm = check_commuting(RtTensorSpace(m), P0VectorSpace(m), f, div_f)
        assert res <= 1e-10 * norm


def test_commuting_rt_field_and_constant_divergence():
    m = refined("lshape2d", 2)
    rt, p0 = RtTensorSpace(m), P0VectorSpace(m)
    a = np.array([[1.0, 2.0], [-1.0, 0.5]])
    c = np.array([0.3, -0.8])
    f = lambda x: a + c[:, None] * x[..., None, :]
    res, norm = check_commuting(rt, p0, f, lambda x: np.broadcast_to(2 * c, x.shape))
    assert res <= 1e-12 * max(norm, 1)


def test_commuting_trig_field():
    m = refined("unit_square", 6)
    assert m.diameters.max() <= np.sqrt(2) / 8 + 1e-12

    def f(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([np.stack([np.sin(X), np.cos(Y)], -1), np.stack([X * Y, np.exp(X)], -1)], -2)

    def div_f(x):
        X, Y = x[..., 0], x[..., 1]
        return np.stack([np.cos(X) - np.sin(Y), Y], -1)

    res, norm = check_commuting(RtTensorSpace(m), P0VectorSpace(m), f, div_f)
    assert res <= 1e-8


def test_eval_identity_field():
    m = preset_mesh("unit_square")
    rt = RtTensorSpace(m)
    coeffs = interpolate_rt(rt, lambda x: np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)))
    c, mu = 0.4, 0.37
    ev = eval_tensor_field(rt, coeffs, 0, m.centroids[0], c, mu)
    assert np.allclose(ev.value, (1 - 2 * c) / mu * np.eye(2))
    assert np.allclose(ev.rot, 0)


def test_eval_rot_of_bubble_coefficients():
    # rows (c_i x): row 1 = c1 x, row 2 = c2 x; chi = (rho - c tr(rho) I)/mu
    m = preset_mesh("unit_square")
    rt = RtTensorSpace(m)
    cvec = np.array([0.9, -0.4])
    coeffs = interpolate_rt(rt, lambda x: cvec[:, None] * x[..., None, :])
    c, mu = 0.45, 0.8
    ev = eval_tensor_field(rt, coeffs, 1, m.centroids[1], c, mu)
    assert np.allclose(ev.rot, [c / mu * cvec[1], -c / mu * cvec[0]])


@settings(max_examples=20, deadline=None)
@given(dim=st.sampled_from([2, 3]), seed=st.integers(0, 10**6))
def test_eval_matches_finite_differences(dim, seed):
    rng = np.random.default_rng(seed)
    m = refined("unit_square" if dim == 2 else "unit_cube", 1)
    rt = RtTensorSpace(m)
    coeffs = rng.standard_normal(rt.num_dofs)
    c, mu = 0.4, 1.3
    t = int(rng.integers(m.num_cells))
    x = rng.dirichlet(np.ones(dim + 1)) @ m.cell_coords[t]
    ev = eval_tensor_field(rt, coeffs, t, x, c, mu)
    assert abs(np.trace(ev.deviator)) <= 1e-14 * max(1, np.abs(ev.value).max())
    assert np.allclose(ev.value, ev.deviator + ev.trace / dim * np.eye(dim), atol=1e-14)
    h = 1e-3 * m.diameters[t]
    inside = 0.9 * x + 0.1 * m.centroids[t]
    jac = np.zeros((dim, dim, dim))
    for l in range(dim):
        e = np.zeros(dim)
        e[l] = h
        jac[..., l] = (
            eval_tensor_field(rt, coeffs, t, inside + e, c, mu).value
            - eval_tensor_field(rt, coeffs, t, inside - e, c, mu).value
        ) / (2 * h)
    if dim == 2:
        fd = np.array([jac[r, 1, 0] - jac[r, 0, 1] for r in range(2)])
    else:
        fd = np.array(
            [[jac[r, 2, 1] - jac[r, 1, 2], jac[r, 0, 2] - jac[r, 2, 0], jac[r, 1, 0] - jac[r, 0, 1]] for r in range(3)]
        )
    assert np.allclose(ev.rot, fd, rtol=1e-6, atol=1e-6 * np.abs(ev.rot).max())
