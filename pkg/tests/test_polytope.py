"""root/tests/
Labeled polytopes: validation order, vertices, volume, centroid, Delzant verdicts, lattice maps
and the crease-compatible triangulation.
"""
from fractions import Fraction as F

import pytest

from polystab.errors import (
    DegenerateHyperplane,
    EmptyOrLowerDimensional,
    InactiveLabel,
    NonPrimitiveNormal,
    PolystabError,
    UnboundedPolytope,
)
from polystab.models.algebra import AffineFunction
from polystab.models.polytope import (
    LabeledPolytope,
    LatticeMap,
    build_labeled_polytope,
    is_delzant,
    standard_simplex,
    transform_polytope,
    triangulate_with_creases,
)


def A(*coeffs):
    """
    A(a_1, ..., a_l, b) = a . x + b
    """
    return AffineFunction(tuple(F(a) for a in coeffs[:-1]), F(coeffs[-1]))


def square_pyramid() -> LabeledPolytope:
    # base [0, 2]^2 at z = 0, apex (1, 1, 1) on four facets
    return build_labeled_polytope([
        A(0, 0, 1, 0), A(1, 0, -1, 0), A(0, 1, -1, 0), A(-1, 0, -1, 2), A(0, -1, -1, 2),
    ])


def test_standard_simplex():
    P = standard_simplex(2)
    assert P.labels[0] == A(-1, -1, 1)
    assert P.vertices == ((0, 0), (0, 1), (1, 0))
    assert P.volume() == F(1, 2)
    assert P.centroid() == (F(1, 3), F(1, 3))
    assert P.is_simplex
    assert P.opposite_vertex(0) == (0, 0)
    assert P.facet_vertices(1) == ((0, 0), (0, 1))


def test_interval_and_square():
    interval = build_labeled_polytope([A(1, 0), A(-1, 1)])
    assert interval.vertices == ((0,), (1,))
    assert interval.centroid() == (F(1, 2),)
    square = build_labeled_polytope([A(1, 0, 0), A(0, 1, 0), A(-1, 0, 2), A(0, -1, 2)])
    assert square.volume() == 4
    assert not square.is_simplex
    with pytest.raises(PolystabError):
        square.opposite_vertex(0)


def test_containment():
    P = standard_simplex(2)
    assert P.contains((F(1, 2), F(1, 2)))
    assert not P.interior_contains((F(1, 2), F(1, 2)))
    assert P.interior_contains((F(1, 4), F(1, 4)))
    assert P.incidence((0, 0)) == frozenset({1, 2})


@pytest.mark.parametrize("labels, error", [
    ([A(1, 0), A(1, -1)], UnboundedPolytope),
    ([A(1, 0), A(-1, -1)], EmptyOrLowerDimensional),
    ([A(1, 0), A(-1, 0)], EmptyOrLowerDimensional),
    ([A(2, 0), A(-1, 1)], NonPrimitiveNormal),
    ([A(F(1, 2), 0), A(-1, 1)], NonPrimitiveNormal),
    ([A(1, 0), A(-1, 1), A(-1, 2)], InactiveLabel),
    ([], EmptyOrLowerDimensional),
    ]
)
def test_build_rejects(labels, error):
    with pytest.raises(error):
        build_labeled_polytope(labels)


def test_inactive_label_carries_index():
    with pytest.raises(InactiveLabel) as exc:
        build_labeled_polytope([A(1, 0), A(-1, 1), A(-1, 2)])
    assert exc.value.index == 2


def test_pyramid_volume_by_flags():
    P = square_pyramid()
    assert len(P.vertices) == 5
    assert P.volume() == F(4, 3)
    assert triangulate_with_creases(P).volume() == F(4, 3)


def test_delzant_simplex_and_square():
    assert is_delzant(standard_simplex(3)).delzant
    square = build_labeled_polytope([A(1, 0, 0), A(0, 1, 0), A(-1, 0, 1), A(0, -1, 1)])
    assert is_delzant(square).delzant


def test_delzant_not_integral():
    # normals (1, 0), (0, 1), (-1, -2); the vertex (0, 1) has det -2
    P = build_labeled_polytope([A(1, 0, 0), A(0, 1, 0), A(-1, -2, 2)])
    verdict = is_delzant(P)
    assert verdict.simple and not verdict.integral
    assert [v.point for v in verdict.failing_vertices] == [(0, 1)]
    assert verdict.failing_vertices[0].determinant == -2
    assert verdict.to_json()["failing_vertices"][0]["determinant"] == "-2/1"


def test_delzant_not_simple():
    verdict = is_delzant(square_pyramid())
    assert not verdict.simple and not verdict.delzant
    apex = [v for v in verdict.failing_vertices if v.point == (1, 1, 1)]
    assert apex and apex[0].determinant is None and len(apex[0].active) == 4


def test_lattice_map_round_trip():
    M = LatticeMap(((1, 1), (0, 1)), (2, -1))
    P = standard_simplex(2)
    image = M.push_polytope(P)
    assert image.volume() == P.volume()
    assert set(image.vertices) == {M.apply(v) for v in P.vertices}
    assert is_delzant(image).delzant
    q = M.push_polynomial(M.pull_polynomial(P.labels[0].to_polynomial()))
    assert q == P.labels[0].to_polynomial()
    assert transform_polytope(P, ((1, 1), (0, 1)), (2, -1)).labels == image.labels


def test_lattice_map_rejects_non_unimodular():
    with pytest.raises(PolystabError):
        LatticeMap(((2, 0), (0, 1)), (0, 0))
    assert LatticeMap.identity(3).apply((1, 2, 3)) == (1, 2, 3)


def test_triangulate_with_creases():
    P = standard_simplex(2)
    crease = A(1, -1, 0)
    sub = triangulate_with_creases(P, [crease, A(0, 0, 5)])
    assert sub.volume() == F(1, 2)
    assert sub.compatible_hyperplanes == (crease,)
    for s in sub.simplices:
        values = [crease(v) for v in s]
        assert all(x >= 0 for x in values) or all(x <= 0 for x in values)
    faces = sub.boundary_faces(P)
    assert {label for label, _, _ in faces} == {0, 1, 2}


def test_triangulate_rejects_zero_hyperplane():
    with pytest.raises(DegenerateHyperplane):
        triangulate_with_creases(standard_simplex(1), [A(0, 0)])
