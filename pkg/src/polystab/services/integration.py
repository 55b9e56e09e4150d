"""~/services/
integration over labeled polytopes

Exact rules for polynomial and PL x polynomial integrands (interior dx and lattice boundary
measure dsigma), and a global adaptive simplex quadrature for integrands such as log-det ratios.

    BoundaryChart: lattice frame of one facet (dL_i(transversal) = -1)
    BoundaryIntegral: total boundary integral with the per-facet breakdown
    QuadResult: value / error estimate / convergence flag of quad_adaptive

    integrate_polynomial, integrate_boundary, integrate_pl_product, quad_adaptive
"""
from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from polystab.errors import DimensionMismatch, EvaluatorFailure, ToleranceNotReached
from polystab.models.algebra import AffineFunction, PLConvexFunction, Point, Polynomial, det
from polystab.models.polytope import (
    LabeledPolytope,
    Simplex,
    SimplicialSubdivision,
    simplex_volume,
    triangulate_with_creases,
)

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


##########
#               exact simplex kernels
##########

def dirichlet_moment(exps: Sequence[int]) -> Fraction:
    """
    prod(a_k!) / (m + sum a_k)!  with m = len(exps) - 1: the integral of lambda^a over a simplex
    divided by m! times its volume.
    """
    m = len(exps) - 1
    num = 1
    for a in exps:
        num *= math.factorial(a)
    return Fraction(num, math.factorial(m + sum(exps)))


def barycentric_pullback(q: Polynomial, vertices: Sequence[Point]) -> Polynomial:
    """
    q(sum_k lambda_k V_k) as a polynomial in the len(vertices) barycentric variables.
    """
    if q.dim != len(vertices[0]):
        raise DimensionMismatch(f"polynomial of dim {q.dim} on points of dim {len(vertices[0])}")
    nb = len(vertices)
    images = [
        Polynomial(nb, {tuple(int(j == k) for j in range(nb)): vertices[k][i] for k in range(nb)})
        for i in range(q.dim)
    ]
    return q.compose(images)


def moment_sum(qb: Polynomial, bump: int | None = None) -> Fraction:
    total = Fraction(0)
    for exp, c in qb.terms.items():
        if bump is not None:
            exp = exp[:bump] + (exp[bump] + 1,) + exp[bump + 1:]
        total += c * dirichlet_moment(exp)
    return total


def simplex_jacobian(vertices: Sequence[Point]) -> Fraction:
    base = vertices[0]
    return abs(det([[a - b for a, b in zip(v, base)] for v in vertices[1:]]))


def facet_jacobian(face: Sequence[Point], transversal: Sequence[int]) -> Fraction:
    """
    |det[w_1 - w_0, ..., w_{l-1} - w_0, q]|, which is (l-1)! times the dsigma-volume of the face.
    """
    base = face[0]
    rows = [[a - b for a, b in zip(w, base)] for w in face[1:]]
    rows.append([Fraction(c) for c in transversal])
    return abs(det(rows))


def integrate_over_simplex(vertices: Sequence[Point], q: Polynomial) -> Fraction:
    if len(vertices) != q.dim + 1:
        raise DimensionMismatch("integrate_over_simplex needs a full-dimensional simplex")
    return simplex_jacobian(vertices) * moment_sum(barycentric_pullback(q, vertices))


def simplex_vertex_moments(vertices: Sequence[Point], q: Polynomial) -> list[Fraction]:
    """
    [integral of lambda_i * q over the simplex for each vertex i].
    """
    qb = barycentric_pullback(q, vertices)
    jac = simplex_jacobian(vertices)
    return [jac * moment_sum(qb, bump=i) for i in range(len(vertices))]


def integrate_over_facet_simplex(face: Sequence[Point], transversal: Sequence[int], q: Polynomial) -> Fraction:
    return facet_jacobian(face, transversal) * moment_sum(barycentric_pullback(q, face))


def facet_vertex_moments(face: Sequence[Point], transversal: Sequence[int], q: Polynomial) -> list[Fraction]:
    qb = barycentric_pullback(q, face)
    jac = facet_jacobian(face, transversal)
    return [jac * moment_sum(qb, bump=i) for i in range(len(face))]


##########
#               boundary charts
##########

def _xgcd(a: int, b: int) -> tuple[int, int, int]:
    """
    (g, s, t) with s*a + t*b = g = gcd(a, b) >= 0.
    """
    old_r, r, old_s, s, old_t, t = a, b, 1, 0, 0, 1
    while r:
        quo = old_r // r
        old_r, r = r, old_r - quo * r
        old_s, s = s, old_s - quo * s
        old_t, t = t, old_t - quo * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def unimodular_completion(normal: Sequence[int]) -> list[list[int]]:
    """
    Integer matrix U with det +-1, <normal, U[:,0]> = 1 and <normal, U[:,k]> = 0 for k >= 1.
    normal must be primitive.
    """
    n = len(normal)
    r = [int(a) for a in normal]
    U = [[int(i == j) for j in range(n)] for i in range(n)]
    for k in range(n - 1, 0, -1):
        a, b = r[k - 1], r[k]
        if b == 0:
            continue
        g, s, t = _xgcd(a, b)
        for row in U:
            c1, c2 = row[k - 1], row[k]
            row[k - 1] = s * c1 + t * c2
            row[k] = (-b // g) * c1 + (a // g) * c2
        r[k - 1], r[k] = g, 0
    if r[0] == -1:
        for row in U:
            row[0] = -row[0]
    return U


@dataclass(frozen=True)
class BoundaryChart:
    """
    Lattice chart of facet L_i = 0.

    param - facet_label_index: i
          - base_point: a vertex of the facet
          - frame: l-1 integer vectors spanning the lattice of the facet direction
          - transversal: integer q with dL_i(q) = -1
          - sigma_jacobian: |det[frame, transversal]|, the dsigma density in frame coordinates
    """
    facet_label_index: int
    base_point: Point
    frame: tuple[tuple[int, ...], ...]
    transversal: tuple[int, ...]
    sigma_jacobian: Fraction


def boundary_chart(P: LabeledPolytope, index: int) -> BoundaryChart:
    normal = [int(a) for a in P.labels[index].linear]
    U = unimodular_completion(normal)
    cols = [tuple(U[r][c] for r in range(P.dim)) for c in range(P.dim)]
    transversal = tuple(-a for a in cols[0])
    frame = tuple(cols[1:])
    jac = abs(det([list(v) for v in frame] + [list(transversal)]))
    return BoundaryChart(index, P.facet_vertices(index)[0], frame, transversal, Fraction(jac))


##########
#               exact integrals over polytopes
##########

@dataclass(frozen=True)
class BoundaryIntegral:
    total: Fraction
    per_facet: tuple[Fraction, ...]


def _check_dim(P: LabeledPolytope, q: Polynomial) -> None:
    if q.dim != P.dim:
        raise DimensionMismatch(f"polynomial of dim {q.dim} on a polytope of dim {P.dim}")


def integrate_polynomial(P: LabeledPolytope, q: Polynomial, subdivision: SimplicialSubdivision | None = None) -> Fraction:
    _check_dim(P, q)
    sub = subdivision or triangulate_with_creases(P)
    return sum((integrate_over_simplex(s, q) for s in sub.simplices), Fraction(0))


def integrate_boundary(P: LabeledPolytope, q: Polynomial, subdivision: SimplicialSubdivision | None = None) -> BoundaryIntegral:
    _check_dim(P, q)
    sub = subdivision or triangulate_with_creases(P)
    charts = [boundary_chart(P, i) for i in range(len(P.labels))]
    per = [Fraction(0)] * len(P.labels)
    for i, face, _ in sub.boundary_faces(P):
        per[i] += integrate_over_facet_simplex(face, charts[i].transversal, q)
    return BoundaryIntegral(sum(per, Fraction(0)), tuple(per))


def _centroid(simplex: Simplex) -> Point:
    n = len(simplex)
    return tuple(sum((v[c] for v in simplex), Fraction(0)) / n for c in range(len(simplex[0])))


def integrate_pl_product(
    P: LabeledPolytope,
    f: PLConvexFunction | AffineFunction,
    q: Polynomial,
    region: str = "interior",
    per_facet: bool = False,
):
    """
    Exact integral of f*q over the interior (dx) or the boundary (dsigma) of P.
    The subdivision follows f's creases, so f is a single affine piece on every simplex.
    With per_facet=True and region="boundary" the BoundaryIntegral breakdown is returned.
    """
    _check_dim(P, q)
    f = PLConvexFunction.of(f)
    if f.dim != P.dim:
        raise DimensionMismatch(f"PL function of dim {f.dim} on a polytope of dim {P.dim}")
    sub = triangulate_with_creases(P, f.creases)
    pieces = [f.piece_at(_centroid(s)).to_polynomial() for s in sub.simplices]
    if region == "interior":
        return sum(
            (integrate_over_simplex(s, piece * q) for s, piece in zip(sub.simplices, pieces)), Fraction(0)
        )
    if region != "boundary":
        raise ValueError(f"region must be 'interior' or 'boundary', not {region!r}")
    charts = [boundary_chart(P, i) for i in range(len(P.labels))]
    per = [Fraction(0)] * len(P.labels)
    for i, face, parent in sub.boundary_faces(P):
        per[i] += integrate_over_facet_simplex(face, charts[i].transversal, pieces[parent] * q)
    if per_facet:
        return BoundaryIntegral(sum(per, Fraction(0)), tuple(per))
    return sum(per, Fraction(0))


##########
#               adaptive quadrature
##########

def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def grundmann_moeller_rule(m: int, s: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Barycentric nodes (k, m+1) and weights summing to 1 of the Grundmann-Moeller rule of
    index s on an m-simplex; exact for polynomials of degree 2s+1.
    """
    if m == 0:
        return np.ones((1, 1)), np.ones(1)
    d = 2 * s + 1
    nodes, weights = [], []
    for i in range(s + 1):
        w = Fraction((-1) ** i * (d + m - 2 * i) ** d, 2 ** (2 * s) * math.factorial(i) * math.factorial(d + m - i))
        w *= math.factorial(m)
        for beta in _compositions(s - i, m + 1):
            nodes.append([(2 * b + 1) / (d + m - 2 * i) for b in beta])
            weights.append(float(w))
    return np.array(nodes), np.array(weights)


@dataclass(frozen=True)
class QuadResult:
    """
    param - value: best integral estimate
          - error: summed local error estimate
          - converged: error <= max(rel_tol * |value|, abs_tol)
          - simplices: number of simplices in the final partition
    """
    value: float
    error: float
    converged: bool
    simplices: int

    def require(self) -> float:
        if not self.converged:
            raise ToleranceNotReached(
                f"quadrature stopped at error {self.error:.3e} for value {self.value:.12g}",
                value=self.value,
                error=self.error,
            )
        return self.value


def _apply_rule(evaluator: Evaluator, verts: np.ndarray, vol: float, nodes: np.ndarray, weights: np.ndarray) -> float:
    pts = nodes @ verts
    vals = np.asarray(evaluator(pts), dtype=float)
    if np.all(np.isfinite(vals)):
        return vol * float(weights @ vals)
    center = verts.mean(axis=0)
    for k in range(10, 0, -1):
        shrink = 1.0 - 2.0 ** (-k)
        vals = np.asarray(evaluator(center + shrink * (pts - center)), dtype=float)
        if np.all(np.isfinite(vals)):
            return vol * float(weights @ vals)
    bad = pts[~np.isfinite(np.asarray(evaluator(pts), dtype=float))][0]
    raise EvaluatorFailure(bad)


def _estimate(evaluator: Evaluator, verts: np.ndarray, vol: float) -> tuple[float, float]:
    m = verts.shape[0] - 1
    hi = _apply_rule(evaluator, verts, vol, *grundmann_moeller_rule(m, 3))
    if m == 0:
        return hi, 0.0
    lo = _apply_rule(evaluator, verts, vol, *grundmann_moeller_rule(m, 2))
    return hi, abs(hi - lo)


def _bisect(verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = verts.shape[0]
    best, bi, bj = -1.0, 0, 1
    for i in range(n):
        for j in range(i + 1, n):
            d = float(np.sum((verts[i] - verts[j]) ** 2))
            if d > best:
                best, bi, bj = d, i, j
    mid = 0.5 * (verts[bi] + verts[bj])
    a, b = verts.copy(), verts.copy()
    a[bi] = mid
    b[bj] = mid
    return a, b


def quad_adaptive(
    P: LabeledPolytope,
    evaluator: Evaluator,
    rel_tol: float,
    region: str = "interior",
    abs_tol: float = 1e-14,
    max_simplices: int = 200_000,
) -> QuadResult:
    """
    Global adaptive quadrature of evaluator over P (dx) or over its boundary (dsigma).

    param - evaluator: maps an (k, l) array of interior points to k values
          - rel_tol: target relative error; refinement bisects the worst simplex's longest edge
    Degree-7 Grundmann-Moeller nodes give the value, degree-5 nodes the error estimate.
    Non-finite values trigger re-evaluation at nodes shrunk toward the simplex centroid.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    sub = triangulate_with_creases(P)
    start: list[tuple[np.ndarray, float]] = []
    if region == "interior":
        for s in sub.simplices:
            start.append((np.array(s, dtype=float), float(simplex_volume(s))))
    elif region == "boundary":
        charts = [boundary_chart(P, i) for i in range(len(P.labels))]
        fact = math.factorial(P.dim - 1)
        for i, face, _ in sub.boundary_faces(P):
            vol = facet_jacobian(face, charts[i].transversal) / fact
            start.append((np.array(face, dtype=float), float(vol)))
    else:
        raise ValueError(f"region must be 'interior' or 'boundary', not {region!r}")

    heap: list[tuple[float, int, np.ndarray, float, float, float]] = []
    counter = 0
    for verts, vol in start:
        val, err = _estimate(evaluator, verts, vol)
        heapq.heappush(heap, (-err, counter, verts, vol, val, err))
        counter += 1

    def totals() -> tuple[float, float]:
        return math.fsum(h[4] for h in heap), math.fsum(h[5] for h in heap)

    value, error = totals()
    steps = 0
    while error > max(rel_tol * abs(value), abs_tol) and len(heap) < max_simplices:
        _, _, verts, vol, val, err = heapq.heappop(heap)
        value -= val
        error -= err
        for child in _bisect(verts):
            cval, cerr = _estimate(evaluator, child, 0.5 * vol)
            heapq.heappush(heap, (-cerr, counter, child, 0.5 * vol, cval, cerr))
            counter += 1
            value += cval
            error += cerr
        steps += 1
        if steps % 256 == 0:
            value, error = totals()
    value, error = totals()
    converged = error <= max(rel_tol * abs(value), abs_tol)
    if not converged:
        logger.warning("quad_adaptive: tolerance %g not reached (error %.3e)", rel_tol, error)
    logger.debug("quad_adaptive: %d simplices, value %.15g, error %.3e", len(heap), value, error)
    return QuadResult(value, error, converged, len(heap))
