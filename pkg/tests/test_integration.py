"""root/tests/
Exact interior and boundary integrals, PL products, and the adaptive quadrature.

    Exact values are compared with ==; quadrature values against closed forms with a tolerance.
"""
import math
import random
from fractions import Fraction as F

import numpy as np
import pytest

from polystab.errors import DimensionMismatch, EvaluatorFailure, ToleranceNotReached
from polystab.models.algebra import AffineFunction, PLConvexFunction, Polynomial, det
from polystab.models.polytope import LatticeMap, build_labeled_polytope, is_delzant, standard_simplex
from polystab.services.integration import (
    boundary_chart,
    dirichlet_moment,
    grundmann_moeller_rule,
    integrate_boundary,
    integrate_over_simplex,
    integrate_pl_product,
    integrate_polynomial,
    quad_adaptive,
    simplex_vertex_moments,
    unimodular_completion,
)

INTERVAL = standard_simplex(1)
TRIANGLE = standard_simplex(2)
x1 = Polynomial.coordinate(1, 0)
x, y = Polynomial.coordinate(2, 0), Polynomial.coordinate(2, 1)
ONE2 = Polynomial.constant(2, 1)


def ramp() -> PLConvexFunction:
    return PLConvexFunction((AffineFunction((F(0),), 0), AffineFunction((F(2),), F(-1))))


@pytest.mark.parametrize("q, expected", [
    (ONE2, F(1, 2)),
    (x, F(1, 6)),
    (x * y, F(1, 24)),
    (x * x, F(1, 12)),
    ]
)
def test_integrate_polynomial_triangle(q, expected):
    assert integrate_polynomial(TRIANGLE, q) == expected


def test_dirichlet_moment():
    assert dirichlet_moment([0, 0, 0]) == F(1, 2)
    assert dirichlet_moment([1, 0, 0]) == F(1, 6)
    assert integrate_over_simplex(((0, 0), (2, 0), (0, 2)), ONE2) == 2


def test_vertex_moments_sum_to_integral():
    verts = ((F(0), F(0)), (F(1), F(0)), (F(0), F(1)))
    q = x * 3 + y * y
    assert sum(simplex_vertex_moments(verts, q)) == integrate_over_simplex(verts, q)


def test_boundary_measure():
    b = integrate_boundary(TRIANGLE, ONE2)
    assert b.total == 3
    assert b.per_facet == (1, 1, 1)
    assert integrate_boundary(INTERVAL, Polynomial.constant(1, 1)).total == 2
    square = build_labeled_polytope([
        AffineFunction((F(1), F(0)), 0), AffineFunction((F(0), F(1)), 0),
        AffineFunction((F(-1), F(0)), 2), AffineFunction((F(0), F(-1)), 2),
    ])
    assert integrate_polynomial(square, ONE2) == 4
    assert integrate_boundary(square, ONE2).total == 8
    # the hypotenuse x + y = 1 has lattice length 1; x vanishes at one end
    assert integrate_boundary(TRIANGLE, x).per_facet == (F(1, 2), 0, F(1, 2))


def test_boundary_chart_is_lattice_frame():
    P = build_labeled_polytope([
        AffineFunction((F(1), F(0)), 0), AffineFunction((F(0), F(1)), 0), AffineFunction((F(-1), F(-2)), 2),
    ])
    for i, L in enumerate(P.labels):
        chart = boundary_chart(P, i)
        assert sum(a * q for a, q in zip(L.linear, chart.transversal)) == -1
        assert all(sum(a * e for a, e in zip(L.linear, v)) == 0 for v in chart.frame)
        assert chart.sigma_jacobian == 1


@pytest.mark.parametrize("normal", [[1, 0, 0], [2, 3], [-1, -2], [3, 5, 7], [0, 0, -1]])
def test_unimodular_completion(normal):
    U = unimodular_completion(normal)
    n = len(normal)
    cols = [[U[r][c] for r in range(n)] for c in range(n)]
    assert sum(a * b for a, b in zip(normal, cols[0])) == 1
    assert all(sum(a * b for a, b in zip(normal, c)) == 0 for c in cols[1:])
    assert abs(det(U)) == 1


def test_pl_products():
    f = ramp()
    one = Polynomial.constant(1, 1)
    assert integrate_pl_product(INTERVAL, f, one) == F(1, 4)
    assert integrate_pl_product(INTERVAL, f, x1) == F(5, 24)
    assert integrate_pl_product(INTERVAL, f, one, "boundary") == 1
    per = integrate_pl_product(INTERVAL, f, one, "boundary", per_facet=True)
    assert per.total == 1
    with pytest.raises(ValueError):
        integrate_pl_product(INTERVAL, f, one, "edges")
    with pytest.raises(DimensionMismatch):
        integrate_pl_product(TRIANGLE, f, ONE2)


def test_pl_product_on_triangle():
    # max(0, x - y) integrates to the volume of the half triangle times its mean
    f = PLConvexFunction((AffineFunction((F(0), F(0)), 0), AffineFunction((F(1), F(-1)), 0)))
    assert integrate_pl_product(TRIANGLE, f, ONE2) == F(1, 12)


def test_grundmann_moeller_weights():
    for m in (1, 2, 3):
        nodes, weights = grundmann_moeller_rule(m, 3)
        assert math.isclose(weights.sum(), 1.0, rel_tol=1e-12)
        assert np.allclose(nodes.sum(axis=1), 1.0)


def test_quad_adaptive_smooth_and_boundary():
    res = quad_adaptive(TRIANGLE, lambda p: np.exp(p[:, 0]), 1e-10)
    assert res.converged
    assert math.isclose(res.value, math.e - 2, rel_tol=1e-9)
    edge = quad_adaptive(TRIANGLE, lambda p: p[:, 0], 1e-10, region="boundary")
    assert math.isclose(edge.require(), 1.0, rel_tol=1e-10)


def test_quad_adaptive_log_singularity():
    # int_0^1 log(x (1 + x)) dx = -2 + 2 log 2
    res = quad_adaptive(INTERVAL, lambda p: np.log(p[:, 0] * (1 + p[:, 0])), 1e-8)
    assert abs(res.require() - (-2 + 2 * math.log(2))) < 1e-6


def test_quad_adaptive_failures():
    stalled = quad_adaptive(INTERVAL, lambda p: np.abs(p[:, 0] - 1 / math.pi) ** 0.1, 1e-14, max_simplices=4)
    assert not stalled.converged
    with pytest.raises(ToleranceNotReached) as exc:
        stalled.require()
    assert exc.value.value == stalled.value
    with pytest.raises(EvaluatorFailure):
        quad_adaptive(INTERVAL, lambda p: np.full(len(p), np.nan), 1e-6)
    with pytest.raises(ValueError):
        quad_adaptive(INTERVAL, lambda p: p[:, 0], 0)


#####################################################################
#          lattice invariance battery (seeded)
#####################################################################

def _random_lattice_map(rng: random.Random, dim: int) -> LatticeMap:
    """
    Product of integer shears, so the determinant is 1.
    """
    M = [[int(i == j) for j in range(dim)] for i in range(dim)]
    for _ in range(4):
        i, j = rng.sample(range(dim), 2)
        k = rng.randint(-2, 2)
        M[i] = [a + k * b for a, b in zip(M[i], M[j])]
    return LatticeMap(tuple(tuple(row) for row in M), tuple(rng.randint(-3, 3) for _ in range(dim)))


@pytest.mark.parametrize("seed", range(25))
def test_integrals_are_lattice_invariant(seed):
    rng = random.Random(seed)
    P = build_labeled_polytope([
        AffineFunction((F(1), F(0)), 0), AffineFunction((F(0), F(1)), 0),
        AffineFunction((F(-1), F(0)), 2), AffineFunction((F(0), F(-1)), 2),
        AffineFunction((F(-1), F(-1)), 3),
    ])
    monomials = [ONE2, x, y, x * x, x * y, y * y]
    q = Polynomial.zero(2)
    for m in monomials:
        q = q + m * rng.randint(-3, 3)
    M = _random_lattice_map(rng, 2)
    image = M.push_polytope(P)
    pushed = M.push_polynomial(q)
    assert image.volume() == P.volume()
    assert integrate_polynomial(image, pushed) == integrate_polynomial(P, q)
    assert integrate_boundary(image, pushed).per_facet == integrate_boundary(P, q).per_facet
    assert is_delzant(image).delzant == is_delzant(P).delzant


@pytest.mark.parametrize("seed", range(100))
def test_quad_adaptive_matches_exact_integrals(seed):
    rng = random.Random(seed)
    dim = rng.randint(1, 4)
    P = standard_simplex(dim)
    q = Polynomial.zero(dim)
    for _ in range(4):
        term = Polynomial.constant(dim, F(rng.randint(-5, 5), rng.randint(1, 3)))
        for _ in range(rng.randint(0, 6)):
            term = term * Polynomial.coordinate(dim, rng.randrange(dim))
        q = q + term
    exact = integrate_polynomial(P, q)
    numeric = quad_adaptive(P, q.evaluate_float, 1e-9, abs_tol=1e-12).require()
    assert abs(numeric - float(exact)) <= 1e-9 * max(1.0, abs(float(exact)))
