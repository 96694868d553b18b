import math

import numpy as np
import pytest

from elastic_afem.quadrature import conical_rule, segment_rule, tetrahedron_rule, triangle_rule


def monomial_integral(powers):
    """Integral of prod lam_i^k_i over the unit reference simplex divided by its volume."""
    n = len(powers) - 1
    return math.factorial(n) * math.prod(math.factorial(k) for k in powers) / math.factorial(n + sum(powers))


def exponents(n, degree):
    if n == 0:
        yield (degree,)
        return
    for k in range(degree + 1):
        for rest in exponents(n - 1, degree - k):
            yield (k,) + rest


@pytest.mark.parametrize(
    "rule,n,degree",
    [
        (segment_rule(5), 1, 5),
        (triangle_rule(4), 2, 4),
        (triangle_rule(5), 2, 5),
        (triangle_rule(8), 2, 8),
        (tetrahedron_rule(4), 3, 4),
        (conical_rule(3, 7), 3, 7),
        (conical_rule(2, 10), 2, 10),
    ],
)
def test_rules_exact_on_barycentric_monomials(rule, n, degree):
    bary, w = rule
    assert np.isclose(w.sum(), 1.0, atol=1e-14)
    for d in range(degree + 1):
        for k in exponents(n, d):
            approx = np.sum(w * np.prod(bary ** np.array(k), axis=1))
            assert abs(approx - monomial_integral(k)) < 1e-13


def test_points_lie_in_simplex():
    for bary, _ in (triangle_rule(5), tetrahedron_rule(4), conical_rule(3, 9)):
        assert np.all(bary >= -1e-15)
        assert np.allclose(bary.sum(axis=1), 1.0)
