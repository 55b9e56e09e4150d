"""~/models/
labeled polytopes, Delzant verdicts and crease-aware triangulations

Everything here is exact: vertices, volumes and subdivisions are computed over Fractions.

    LabeledPolytope: {x : L_i(x) >= 0} with primitive integer inward normals
    SimplicialSubdivision: simplices tiling a polytope, compatible with a list of hyperplanes
    DelzantVerdict / FailingVertex: result of is_delzant
    LatticeMap: unimodular affine change of lattice coordinates Y = A X + b

    build_labeled_polytope, is_delzant, triangulate_with_creases, enumerate_vertices
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from polystab.errors import (
    DegenerateHyperplane,
    DimensionMismatch,
    EmptyOrLowerDimensional,
    InactiveLabel,
    NonPrimitiveNormal,
    PolystabError,
    UnboundedPolytope,
)
from polystab.models.algebra import AffineFunction, Point, Polynomial, det, format_rational, rank, solve, to_point
from polystab.services.lp import LinearProgram, is_feasible, solve_lp

logger = logging.getLogger(__name__)

Simplex = tuple[Point, ...]


def affine_dimension(points: Sequence[Point]) -> int:
    if not points:
        return -1
    base = points[0]
    diffs = [[a - b for a, b in zip(p, base)] for p in points[1:]]
    return rank(diffs) if diffs else 0


def simplex_volume(vertices: Sequence[Point]) -> Fraction:
    m = len(vertices) - 1
    base = vertices[0]
    rows = [[a - b for a, b in zip(v, base)] for v in vertices[1:]]
    return abs(det(rows)) / math.factorial(m)


def enumerate_vertices(dim: int, constraints: Sequence[AffineFunction]) -> list[Point]:
    """
    All points solving some dim-subset of constraints with equality and satisfying every constraint.
    Returned sorted lexicographically.
    """
    found: set[Point] = set()
    for subset in combinations(range(len(constraints)), dim):
        rows = [constraints[i].linear for i in subset]
        x = solve(rows, [-constraints[i].constant for i in subset])
        if x is None:
            continue
        point = tuple(x)
        if point not in found and all(c(point) >= 0 for c in constraints):
            found.add(point)
    return sorted(found)


@dataclass(frozen=True)
class LabeledPolytope:
    """
    Compact full-dimensional polytope {x : L_i(x) >= 0}. Build through build_labeled_polytope.

    param - dim: ambient dimension l
          - labels: affine labels with primitive integer linear parts, every one active
          - vertices: lexicographically sorted vertex list
    """
    dim: int
    labels: tuple[AffineFunction, ...]
    vertices: tuple[Point, ...]

    def incidence(self, point: Sequence) -> frozenset[int]:
        return frozenset(i for i, L in enumerate(self.labels) if L(point) == 0)

    def facet_vertices(self, index: int) -> tuple[Point, ...]:
        return tuple(v for v in self.vertices if self.labels[index](v) == 0)

    def contains(self, point: Sequence) -> bool:
        return all(L(point) >= 0 for L in self.labels)

    def interior_contains(self, point: Sequence) -> bool:
        return all(L(point) > 0 for L in self.labels)

    @property
    def is_simplex(self) -> bool:
        return len(self.labels) == self.dim + 1 and len(self.vertices) == self.dim + 1

    def opposite_vertex(self, index: int) -> Point:
        """
        For a simplex: the unique vertex off facet index.
        """
        off = [v for v in self.vertices if self.labels[index](v) != 0]
        if len(off) != 1:
            raise PolystabError("opposite vertices are only defined for simplices")
        return off[0]

    def _subfaces(self, face: frozenset[int], k: int, cache: dict) -> list[frozenset[int]]:
        """
        Faces of dimension k-1 of the k-dimensional face given by vertex indices.
        """
        if face in cache:
            return cache[face]
        out: set[frozenset[int]] = set()
        for L in self.labels:
            sub = frozenset(i for i in face if L(self.vertices[i]) == 0)
            if sub and sub != face and affine_dimension([self.vertices[i] for i in sorted(sub)]) == k - 1:
                out.add(sub)
        result = sorted(out, key=sorted)
        cache[face] = result
        return result

    def _centroid_of(self, face: frozenset[int]) -> Point:
        n = len(face)
        return tuple(
            sum((self.vertices[i][c] for i in face), Fraction(0)) / n for c in range(self.dim)
        )

    def _flags(self, face: frozenset[int], k: int, cache: dict) -> Iterable[list[Point]]:
        if k == 0:
            yield [self.vertices[next(iter(face))]]
            return
        top = self._centroid_of(face)
        for sub in self._subfaces(face, k, cache):
            for chain in self._flags(sub, k - 1, cache):
                yield chain + [top]

    def volume(self) -> Fraction:
        """
        Exact volume from the flag (barycentric) subdivision of the face lattice.
        Independent of triangulate_with_creases.
        """
        whole = frozenset(range(len(self.vertices)))
        flags = self._flags(whole, self.dim, {})
        return sum((simplex_volume(chain) for chain in flags), Fraction(0))

    def centroid(self) -> Point:
        sub = triangulate_with_creases(self)
        total = Fraction(0)
        acc = [Fraction(0)] * self.dim
        for s in sub.simplices:
            vol = simplex_volume(s)
            total += vol
            for c in range(self.dim):
                acc[c] += vol * sum((v[c] for v in s), Fraction(0)) / len(s)
        return tuple(a / total for a in acc)

    def to_json(self) -> dict:
        return {"dim": self.dim, "labels": [L.to_json() for L in self.labels]}

    @classmethod
    def from_json(cls, data: Mapping) -> LabeledPolytope:
        labels = [AffineFunction.from_json(L) for L in data.get("labels", [])]
        if "dim" in data and labels and labels[0].dim != int(data["dim"]):
            raise DimensionMismatch(f"labels of dim {labels[0].dim} in a polytope of dim {data['dim']}")
        return build_labeled_polytope(labels)


def build_labeled_polytope(labels: Sequence[AffineFunction]) -> LabeledPolytope:
    """
    Validate labels and enumerate vertices.
    Checks run in order: primitive normals, full-dimensional interior, boundedness, active labels.
    """
    labels = tuple(labels)
    if not labels:
        raise EmptyOrLowerDimensional("no labels given")
    dim = labels[0].dim
    if any(L.dim != dim for L in labels):
        raise DimensionMismatch("labels of different dimensions")
    for i, L in enumerate(labels):
        if not L.is_primitive():
            raise NonPrimitiveNormal(i)

    # maximize s subject to L_i(x) >= s, s <= 1; variables (x, s) all free
    lp = LinearProgram(dim + 1, free=set(range(dim + 1)))
    lp.maximize([0] * dim + [1])
    for L in labels:
        lp.add(list(L.linear) + [-1], ">=", -L.constant)
    lp.add([0] * dim + [1], "<=", 1)
    res = solve_lp(lp)
    if not res.optimal or -res.value <= 0:
        raise EmptyOrLowerDimensional("the labels do not cut out a full-dimensional polytope")

    normals = [list(L.linear) for L in labels]
    if rank(normals) < dim:
        raise UnboundedPolytope("the normals do not span the dual space")
    ray = LinearProgram(dim, free=set(range(dim)))
    for n in normals:
        ray.add(n, ">=", 0)
    ray.add([sum(n[k] for n in normals) for k in range(dim)], "==", 1)
    if is_feasible(ray):
        raise UnboundedPolytope("the polytope contains a ray")

    vertices = tuple(enumerate_vertices(dim, labels))
    for i, L in enumerate(labels):
        on = [v for v in vertices if L(v) == 0]
        if affine_dimension(on) != dim - 1:
            raise InactiveLabel(i)
    return LabeledPolytope(dim, labels, vertices)


##########
#               Delzant verdicts
##########

@dataclass(frozen=True)
class FailingVertex:
    """
    param - point: the vertex
          - active: indices of labels vanishing there
          - determinant: det of the adjacent normals when the vertex is simple, else None
          - simple / integral: which of the two conditions failed
    """
    point: Point
    active: tuple[int, ...]
    determinant: Fraction | None
    simple: bool
    integral: bool

    def to_json(self) -> dict:
        return {
            "point": [format_rational(c) for c in self.point],
            "active_labels": list(self.active),
            "determinant": None if self.determinant is None else format_rational(self.determinant),
            "simple": self.simple,
            "integral": self.integral,
        }


@dataclass(frozen=True)
class DelzantVerdict:
    simple: bool
    integral: bool
    failing_vertices: tuple[FailingVertex, ...]

    @property
    def delzant(self) -> bool:
        return self.simple and self.integral

    def to_json(self) -> dict:
        return {
            "simple": self.simple,
            "integral": self.integral,
            "failing_vertices": [v.to_json() for v in self.failing_vertices],
        }


def _minor_gcd(normals: list[tuple[Fraction, ...]], dim: int) -> int:
    g = 0
    for rows in combinations(normals, dim):
        g = math.gcd(g, abs(int(det(rows))))
        if g == 1:
            break
    return g


def is_delzant(P: LabeledPolytope) -> DelzantVerdict:
    """
    simple: every vertex lies on exactly l facets.
    integral: the adjacent normals span the lattice (det +-1 at simple vertices,
    gcd of maximal minors 1 otherwise).
    """
    failing = []
    simple_all = integral_all = True
    for v in P.vertices:
        active = tuple(sorted(P.incidence(v)))
        normals = [P.labels[i].linear for i in active]
        simple = len(active) == P.dim
        if simple:
            d = det(normals)
            integral = abs(d) == 1
        else:
            d = None
            integral = _minor_gcd(normals, P.dim) == 1
        if not (simple and integral):
            failing.append(FailingVertex(v, active, d, simple, integral))
        simple_all &= simple
        integral_all &= integral
    return DelzantVerdict(simple_all, integral_all, tuple(failing))


##########
#               lattice maps
##########

@dataclass(frozen=True)
class LatticeMap:
    """
    Y = matrix . X + shift with an integer matrix of determinant +-1.
    """
    matrix: tuple[tuple[Fraction, ...], ...]
    shift: tuple[Fraction, ...]

    def __post_init__(self):
        m = tuple(to_point(row) for row in self.matrix)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "shift", to_point(self.shift))
        if any(a.denominator != 1 for row in m for a in row) or abs(det(m)) != 1:
            raise PolystabError("lattice maps need an integer matrix with determinant +-1")

    @classmethod
    def identity(cls, dim: int) -> LatticeMap:
        return cls(
            tuple(tuple(Fraction(int(i == j)) for j in range(dim)) for i in range(dim)),
            (Fraction(0),) * dim,
        )

    @property
    def dim(self) -> int:
        return len(self.shift)

    def apply(self, x: Sequence) -> Point:
        return tuple(
            sum((a * xi for a, xi in zip(row, x)), Fraction(0)) + b for row, b in zip(self.matrix, self.shift)
        )

    @property
    def forward_coordinates(self) -> tuple[AffineFunction, ...]:
        """
        Y_i as affine functions of X.
        """
        return tuple(AffineFunction(row, b) for row, b in zip(self.matrix, self.shift))

    def pull_polynomial(self, q: Polynomial) -> Polynomial:
        """
        q o map, a polynomial in X.
        """
        return q.compose_affine(self.forward_coordinates)

    @cached_property
    def inverse_coordinates(self) -> tuple[AffineFunction, ...]:
        """
        X_i as affine functions of Y.
        """
        n = self.dim
        cols = []
        for j in range(n):
            cols.append(solve(self.matrix, [Fraction(int(i == j)) for i in range(n)]))
        inv = [[cols[j][i] for j in range(n)] for i in range(n)]
        return tuple(
            AffineFunction(tuple(inv[i]), -sum((inv[i][j] * self.shift[j] for j in range(n)), Fraction(0)))
            for i in range(n)
        )

    def push_function(self, L: AffineFunction) -> AffineFunction:
        out = AffineFunction.constant_function(self.dim, L.constant)
        for a, xi in zip(L.linear, self.inverse_coordinates):
            out = out + xi * a
        return out

    def push_polynomial(self, q: Polynomial) -> Polynomial:
        return q.compose_affine(self.inverse_coordinates)

    def push_polytope(self, P: LabeledPolytope) -> LabeledPolytope:
        return build_labeled_polytope([self.push_function(L) for L in P.labels])


def transform_polytope(P: LabeledPolytope, A: Sequence[Sequence], b: Sequence) -> LabeledPolytope:
    """
    Image of P under Y = A X + b; labels keep their order.
    """
    return LatticeMap(tuple(tuple(row) for row in A), tuple(b)).push_polytope(P)


##########
#               triangulation
##########

@dataclass(frozen=True)
class SimplicialSubdivision:
    """
    param - simplices: (l+1)-tuples of points, interiors pairwise disjoint, union the polytope
          - compatible_hyperplanes: hyperplanes with constant sign on every simplex
    """
    simplices: tuple[Simplex, ...]
    compatible_hyperplanes: tuple[AffineFunction, ...]

    def volume(self) -> Fraction:
        return sum((simplex_volume(s) for s in self.simplices), Fraction(0))

    def boundary_faces(self, P: LabeledPolytope) -> list[tuple[int, Simplex, int]]:
        """
        (label index, facet simplex, parent simplex index) for every simplex face on the boundary.
        """
        out = []
        for k, s in enumerate(self.simplices):
            for i, L in enumerate(P.labels):
                face = tuple(v for v in s if L(v) == 0)
                if len(face) == P.dim:
                    out.append((i, face, k))
        return out


def _pull(vertices: list[Point], constraints: Sequence[AffineFunction], k: int) -> list[Simplex]:
    """
    Pulling triangulation of the k-dimensional face spanned by vertices, coning from its
    lexicographically lowest vertex over the facets that avoid it.
    """
    if len(vertices) == k + 1:
        return [tuple(vertices)]
    apex = vertices[0]
    facets: dict[tuple[Point, ...], None] = {}
    for h in constraints:
        face = tuple(v for v in vertices if h(v) == 0)
        if not face or apex in face or len(face) == len(vertices):
            continue
        if affine_dimension(face) == k - 1:
            facets.setdefault(face, None)
    out: list[Simplex] = []
    for face in sorted(facets):
        for s in _pull(list(face), constraints, k - 1):
            out.append((apex,) + s)
    return out


def triangulate_with_creases(
    P: LabeledPolytope, hyperplanes: Sequence[AffineFunction] = ()
) -> SimplicialSubdivision:
    """
    Split P along every hyperplane, then triangulate each cell by pulling from its lowest vertex.
    Hyperplanes with zero linear part are globally signed and skipped, unless identically zero.
    """
    cells: list[tuple[list[AffineFunction], list[Point]]] = [(list(P.labels), list(P.vertices))]
    kept: list[AffineFunction] = []
    for h in hyperplanes:
        if h.dim != P.dim:
            raise DimensionMismatch(f"hyperplane of dim {h.dim} on a polytope of dim {P.dim}")
        if h.is_constant():
            if h.constant == 0:
                raise DegenerateHyperplane("the zero function does not define a hyperplane")
            continue
        kept.append(h)
        split: list[tuple[list[AffineFunction], list[Point]]] = []
        for cons, verts in cells:
            values = [h(v) for v in verts]
            if all(x >= 0 for x in values) or all(x <= 0 for x in values):
                split.append((cons, verts))
                continue
            for side in (h, -h):
                sub = cons + [side]
                sub_verts = enumerate_vertices(P.dim, sub)
                if affine_dimension(sub_verts) == P.dim:
                    split.append((sub, sub_verts))
        cells = split
    simplices: list[Simplex] = []
    for cons, verts in cells:
        simplices.extend(_pull(sorted(verts), cons, P.dim))
    logger.debug("subdivision: %d cells, %d simplices", len(cells), len(simplices))
    return SimplicialSubdivision(tuple(simplices), tuple(kept))


def standard_simplex(dim: int) -> LabeledPolytope:
    """
    Standard simplex with labels ordered L_0 = 1 - sum x_k, then L_k = x_k.
    """
    labels = [AffineFunction(tuple(Fraction(-1) for _ in range(dim)), Fraction(1))]
    labels += [AffineFunction.coordinate(dim, k) for k in range(dim)]
    return build_labeled_polytope(labels)
