"""Quadrature rules on simplices, stored in barycentric form.

Every rule is a pair ``(bary, weights)`` where ``bary`` has shape
``(q, n + 1)`` and ``weights`` sum to one, so that

    integral over T of f  ~=  |T| * sum_k weights[k] * f(sum_a bary[k, a] * p_a)

for a simplex with vertices ``p_0, ..., p_n``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


def _perms(*coords):
    out = set()
    import itertools

    for p in itertools.permutations(coords):
        out.add(p)
    return sorted(out)


def _symmetric(orbits):
    pts, wts = [], []
    for coords, w in orbits:
        for p in _perms(*coords):
            pts.append(p)
            wts.append(w)
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


@lru_cache(maxsize=None)
def segment_rule(degree):
    """Gauss-Legendre rule on a segment, exact to ``degree``."""
    m = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(m)
    t = 0.5 * (x + 1.0)
    bary = np.stack([1.0 - t, t], axis=1)
    return bary, 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    if degree <= 1:
        return np.full((1, 3), 1.0 / 3.0), np.ones(1)
    if degree <= 4:
        # 6-point Dunavant rule
        a, b = 0.445948490915965, 0.091576213509771
        return _symmetric(
            [((a, a, 1 - 2 * a), 0.223381589678011), ((b, b, 1 - 2 * b), 0.109951743655322)]
        )
    if degree == 5:
        # 7-point Dunavant rule
        a1, b1 = 0.059715871789770, 0.470142064105115
        a2, b2 = 0.797426985353087, 0.101286507323456
        return _symmetric(
            [
                ((1 / 3, 1 / 3, 1 / 3), 0.225),
                ((a1, b1, b1), 0.132394152788506),
                ((a2, b2, b2), 0.125939180544827),
            ]
        )
    return conical_rule(2, degree)


@lru_cache(maxsize=None)
def tetrahedron_rule(degree):
    if degree <= 1:
        return np.full((1, 4), 0.25), np.ones(1)
    if degree <= 4:
        # 11-point Keast rule (one negative weight), weights scaled to sum 1
        a, b = 0.0714285714285714285, 0.785714285714285714
        c, d = 0.399403576166799219, 0.100596423833200785
        pts, wts = _symmetric(
            [
                ((0.25, 0.25, 0.25, 0.25), -0.0789333333333333333),
                ((a, a, a, b), 0.0457333333333333333),
                ((c, c, d, d), 0.149333333333333333),
            ]
        )
        return pts, wts
    return conical_rule(3, degree)


@lru_cache(maxsize=None)
def conical_rule(dim, degree):
    """Collapsed-coordinate (conical product) rule of arbitrary degree."""
    m = max(1, (degree + 2) // 2)
    axes = []
    for k in range(dim):
        alpha = dim - 1 - k
        x, w = roots_jacobi(m, alpha, 0.0)
        axes.append((0.5 * (x + 1.0), w / 2.0 ** (alpha + 1)))
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrid = np.ones_like(grids[0])
    for k, g in enumerate(np.meshgrid(*[a[1] for a in axes], indexing="ij")):
        wgrid = wgrid * g
    xi = [g.ravel() for g in grids]
    coords = np.zeros((xi[0].size, dim))
    scale = np.ones(xi[0].size)
    for k in range(dim):
        coords[:, k] = xi[k] * scale
        scale = scale * (1.0 - xi[k])
    w = wgrid.ravel()
    w = w / w.sum()
    bary = np.column_stack([1.0 - coords.sum(axis=1), coords])
    return bary, w


def cell_rule(dim, degree=4):
    return triangle_rule(degree) if dim == 2 else tetrahedron_rule(degree)


def facet_rule(dim, degree=5):
    return segment_rule(degree) if dim == 2 else triangle_rule(degree)
