"""root/tests/
Donaldson-Futaki functional, F-plus, normalisation, L1 and J norms, non-Archimedean scaling.

    The interval examples use f = max(0, 2x - 1) on [0, 1]; every value is exact.
"""
import random
from fractions import Fraction as F

import numpy as np
import pytest

from polystab.errors import BasePointOnBoundary, LPUnbounded, PoleNotCancelled, PolystabError
from polystab.models.algebra import AffineFunction, PLConvexFunction, Polynomial
from polystab.models.domain import FunctionalValue, WeightExpr
from polystab.models.polytope import standard_simplex
from polystab.services.functionals import (
    fplus,
    futaki,
    j_norm,
    j_norm_detail,
    l1_norm,
    na_convert,
    norm_sandwich,
    normalize_star,
)
from polystab.services.weights import fiber_weights

INTERVAL = standard_simplex(1)
TRIANGLE = standard_simplex(2)
ONE = Polynomial.constant(1, 1)


def ramp(scale=1) -> PLConvexFunction:
    return PLConvexFunction((AffineFunction((F(0),), 0), AffineFunction((F(2),), F(-1)))).scale(scale)


def test_futaki_interval():
    assert futaki(INTERVAL, 1, 4, ramp()) == 1
    # F vanishes on affine functions for the extremal weight
    assert futaki(INTERVAL, 1, 4, AffineFunction((F(3),), F(-2))) == 0
    assert futaki(TRIANGLE, 1, 12, AffineFunction((F(1), F(-5)), F(7))) == 0


def test_futaki_polynomial_argument():
    x = Polynomial.coordinate(1, 0)
    # 2 (0 + 1) - 4 * 1/3
    assert futaki(INTERVAL, 1, 4, x * x) == F(2, 3)


def test_futaki_with_fibre_poles():
    density, template = fiber_weights([2, 2])
    weight = template.fill_slot(24)
    assert futaki(INTERVAL, density, weight, ramp()) == F(1, 4)
    assert futaki(INTERVAL, density, weight, AffineFunction((F(1),), 0)) == 0


def test_futaki_pole_must_cancel():
    pole = WeightExpr(1, Polynomial.zero(1), (), slot_open=True)
    with pytest.raises(PoleNotCancelled):
        futaki(INTERVAL, 1, pole, ramp())


def test_futaki_opaque_weight_is_numerical():
    weight = WeightExpr(1, Polynomial.constant(1, 2), (), opaque=lambda p: np.full(len(p), 2.0))
    value = futaki(INTERVAL, 1, weight, ramp())
    assert isinstance(value, float)
    assert abs(value - 1.0) < 1e-8


def test_fplus():
    density, _ = fiber_weights([2, 2])
    assert fplus(INTERVAL, density, [2, 2], ramp()) == 1
    assert fplus(INTERVAL, ONE, [1, 1], ramp()) == 2


@pytest.mark.parametrize("x0, piece", [
    ((F(1, 2),), AffineFunction((F(0),), 0)),
    ((F(3, 4),), AffineFunction((F(2),), F(-1))),
    ((F(1, 4),), AffineFunction((F(0),), 0)),
    ]
)
def test_normalize_star(x0, piece):
    star = normalize_star(ramp(), x0, INTERVAL)
    assert star.removed_affine == piece
    assert star.f_star(x0) == 0
    assert all(star.f_star((F(k, 8),)) >= 0 for k in range(9))


def test_normalize_star_needs_interior_point():
    with pytest.raises(BasePointOnBoundary):
        normalize_star(ramp(), (0,), INTERVAL)


def test_l1_norm():
    assert l1_norm(INTERVAL, ONE, AffineFunction((F(2),), F(-1))) == F(1, 2)
    assert l1_norm(INTERVAL, ONE, ramp()) == F(1, 4)
    assert l1_norm(INTERVAL, Polynomial.coordinate(1, 0), ramp()) == F(5, 24)


def test_j_norm():
    assert j_norm(INTERVAL, ONE, ramp()) == F(1, 4)
    assert j_norm(INTERVAL, ONE, ramp(2)) == F(1, 2)
    assert j_norm(INTERVAL, ONE, AffineFunction((F(5),), F(1))) == 0
    detail = j_norm_detail(INTERVAL, ONE, ramp())
    assert detail.xi.constant == 0


def test_j_norm_twist_invariant():
    f = ramp()
    twisted = f + AffineFunction((F(-1),), F(3))
    assert j_norm(INTERVAL, ONE, twisted) == j_norm(INTERVAL, ONE, f)


def test_j_norm_needs_positive_mass():
    with pytest.raises(LPUnbounded):
        j_norm(INTERVAL, Polynomial.zero(1), ramp())


def test_norm_sandwich():
    s = norm_sandwich(INTERVAL, ONE, ramp())
    assert s.j == F(1, 4)
    assert s.l1_star == F(1, 4)
    assert s.ratio == 1
    assert norm_sandwich(INTERVAL, ONE, AffineFunction((F(1),), 0)).ratio is None


def test_na_convert():
    assert na_convert(1, "toric", 1) == FunctionalValue(F(1), 2)
    assert na_convert(F(1, 4), "toric", 1, volume=1, functional="j") == FunctionalValue(F(1, 4), 2)
    assert na_convert(F(1, 4), "compatible", 2, volume=2, vol_B=F(1, 2), functional="j") == FunctionalValue(F(1, 16), 3)


@pytest.mark.parametrize("kwargs", [
    {"kind": "weird"},
    {"functional": "mabuchi"},
    {"volume": 0},
    {"vol_B": -1},
    ]
)
def test_na_convert_rejects(kwargs):
    args = {"kind": "toric", "n": 1, **kwargs}
    with pytest.raises(PolystabError):
        na_convert(1, **args)


def _random_pl(rng: random.Random, dim: int) -> PLConvexFunction:
    return PLConvexFunction(tuple(
        AffineFunction(tuple(F(rng.randint(-3, 3)) for _ in range(dim)), F(rng.randint(-2, 2)))
        for _ in range(rng.randint(2, 3))
    ))


@pytest.mark.parametrize("seed", range(50))
def test_j_norm_twist_and_scale_battery(seed):
    rng = random.Random(seed)
    P = INTERVAL if seed % 2 else TRIANGLE
    one = Polynomial.constant(P.dim, 1)
    f = _random_pl(rng, P.dim)
    xi = AffineFunction(tuple(F(rng.randint(-3, 3)) for _ in range(P.dim)), F(rng.randint(-2, 2)))
    lam = F(rng.randint(1, 5), rng.randint(1, 3))
    base = j_norm(P, one, f)
    assert base >= 0
    assert j_norm(P, one, f + xi) == base
    assert j_norm(P, one, f.scale(lam)) == lam * base
