"""root/tests/
Symplectic potentials, Guillemin integrals, Mabuchi energies and the Delta-hat lift check.

    Closed forms on [0, 1]:
        Hess u0 = 1 / (2 x (1 - x)), so det Hess u0 * x (1 - x) = 1/2
        u = u0 + x^2 has entropy -int log(1 + 4 x (1 - x)) = 2 - 2 sqrt(2) log(1 + sqrt(2))
"""
import math
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.special import xlogy

from polystab.errors import NotConvex
from polystab.models.algebra import Polynomial
from polystab.models.domain import SymplecticPotential
from polystab.models.polytope import standard_simplex
from polystab.services.fibration import build_fiber_model
from polystab.services.integration import quad_adaptive
from polystab.services.mabuchi import (
    DetSample,
    LiftReport,
    boundary_condition_probe,
    check_convex,
    coercivity_probe,
    compatible_lift_check,
    entropy,
    guillemin_hessian,
    guillemin_integrals,
    linear_term,
    mabuchi_energy,
    potential_gradient,
)

INTERVAL = standard_simplex(1)
x = Polynomial.coordinate(1, 0)


def test_guillemin_hessian_closed_form():
    pts = np.array([[0.25], [0.5]])
    H = guillemin_hessian(INTERVAL, pts)
    assert np.allclose(H[:, 0, 0], [1 / (2 * 0.25 * 0.75), 2.0])


def test_potential_gradient():
    u = SymplecticPotential(INTERVAL, x * x)
    grad = potential_gradient(u, np.array([[0.5]]))
    # 1/2 (log(1 - x) + 1)(-1) + 1/2 (log x + 1) + 2x vanishes in the log part at 1/2
    assert math.isclose(grad[0, 0], 1.0)


def test_check_convex():
    assert check_convex(SymplecticPotential.guillemin(standard_simplex(2)))
    with pytest.raises(NotConvex):
        check_convex(SymplecticPotential(INTERVAL, x * x * -10))


def test_boundary_condition_probe():
    samples = boundary_condition_probe(SymplecticPotential.guillemin(INTERVAL), 1)
    assert [k for k, _ in samples] == [2, 3, 4, 5, 6]
    for _, value in samples:
        assert math.isclose(value, 0.5, rel_tol=1e-9)


@pytest.mark.parametrize("q, expected", [
    (Polynomial.constant(1, 1), F(-1, 4)),
    (x, F(-1, 8)),
    ]
)
def test_guillemin_integrals_exact(q, expected):
    assert guillemin_integrals(INTERVAL, q) == expected


def test_guillemin_integrals_boundary_vanish_on_simplex():
    assert guillemin_integrals(INTERVAL, 1, "boundary") == 0
    with pytest.raises(ValueError):
        guillemin_integrals(INTERVAL, 1, "edges")


def test_guillemin_integrals_triangle_matches_quadrature():
    P = standard_simplex(2)
    exact = guillemin_integrals(P, 1)
    assert isinstance(exact, F)

    def integrand(points):
        L = np.column_stack([1 - points.sum(axis=1), points[:, 0], points[:, 1]])
        return 0.5 * xlogy(L, L).sum(axis=1)

    numeric = quad_adaptive(P, integrand, 1e-8).require()
    assert math.isclose(float(exact), numeric, rel_tol=1e-6)


def test_entropy():
    assert entropy(SymplecticPotential(INTERVAL, x * 3), 1) == (0.0, 0.0)
    value, error = entropy(SymplecticPotential(INTERVAL, x * x), 1)
    expected = 2 - 2 * math.sqrt(2) * math.log(1 + math.sqrt(2))
    assert abs(value - expected) < 1e-7
    assert error >= 0


def test_linear_term_and_energy():
    u0 = SymplecticPotential.guillemin(INTERVAL)
    assert linear_term(u0, 1, 4) == 1
    u = SymplecticPotential(INTERVAL, x * x)
    assert linear_term(u, 1, 4) == F(5, 3)
    energy = mabuchi_energy(u, 1, 4)
    expected = 2 - 2 * math.sqrt(2) * math.log(1 + math.sqrt(2)) + 5 / 3
    assert abs(energy.total - expected) < 1e-7
    assert energy.to_json()["linear"] == "5/3"


def test_coercivity_probe():
    report = coercivity_probe(INTERVAL, [Polynomial.zero(1), x * x, x * x * 2], 1, 4)
    assert len(report.samples) == 3
    assert report.slope is not None
    assert all(math.isfinite(a) and math.isfinite(b) for a, b in report.samples)


@pytest.mark.parametrize("diffs, det_fd, passed", [
    ((0.5, 0.5, 0.5), 2.0, True),
    ((0.5, 0.6, 0.5), 2.0, False),
    ((0.5, 0.5, 0.5), 2.1, False),
    # the differences agree with each other but sit away from the constant
    ((5.0, 5.0, 5.0), 2.0, False),
    ((0.5 + 1e-7, 0.5, 0.5 - 1e-7), 2.0, True),
    ]
)
def test_lift_report_passed(diffs, det_fd, passed):
    report = LiftReport((DetSample((0.5,), det_fd, 2.0),), diffs, F(1, 2), 0.5)
    assert report.passed is passed
    assert report.to_json()["passed"] is passed


def test_lift_report_offset_from_zero_constant():
    report = LiftReport((), (5.0, 5.0, 5.0), F(0), 0.0)
    assert report.mean_difference == 5.0
    assert not report.passed


def test_compatible_lift_check_interval_over_interval():
    model = build_fiber_model([2, 1])
    u = SymplecticPotential.guillemin(model.base)
    report = compatible_lift_check(u, model, sample_count=3, rel_tol=1e-8)
    assert len(report.det_samples) == 3
    assert len(report.mabuchi_differences) == 3
    assert report.passed, report.to_json()
