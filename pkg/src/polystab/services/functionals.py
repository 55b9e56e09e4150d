"""~/services/
Donaldson-Futaki functional, the F-plus functional, normalisation and norms

    futaki: F_{v,w}(f) = 2 int_boundary f v dsigma - int f w v dx
    fplus: 2 int_boundary f density dsigma + sum_j int 2 d_j (d_j-1) / L_j f density dx
    normalize_star: f* = f - subtangent at x0
    l1_norm / j_norm / j_norm_detail / norm_sandwich: weighted norms modulo affine functions
    na_convert: non-Archimedean scaling of F and J values with their (2 pi) tags
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from polystab.errors import BasePointOnBoundary, LPInfeasible, LPUnbounded, PoleNotCancelled, PolystabError
from polystab.models.algebra import AffineFunction, PLConvexFunction, Point, Polynomial, to_point, to_rational
from polystab.models.domain import FunctionalValue, NormalizedPL, WeightExpr
from polystab.models.polytope import LabeledPolytope, triangulate_with_creases
from polystab.services.integration import (
    integrate_boundary,
    integrate_over_simplex,
    integrate_pl_product,
    integrate_polynomial,
    quad_adaptive,
)
from polystab.services.lp import LinearProgram, solve_lp
from polystab.services.weights import block_data

logger = logging.getLogger(__name__)


def _as_polynomial(v, dim: int) -> Polynomial | None:
    """
    A density given as a polynomial, affine function, constant or pole-free WeightExpr.
    """
    if isinstance(v, WeightExpr):
        if v.pole_terms or v.opaque is not None or v.slot_open:
            return None
        return v.poly
    return Polynomial.coerce(v, dim)


def _integrate_against(P: LabeledPolytope, f, q: Polynomial, region: str) -> Fraction:
    if isinstance(f, Polynomial):
        if region == "boundary":
            return integrate_boundary(P, f * q).total
        return integrate_polynomial(P, f * q)
    return integrate_pl_product(P, f, q, region)


def futaki(P: LabeledPolytope, v, w, f, rel_tol: float = 1e-10) -> Fraction | float:
    """
    Weighted Donaldson-Futaki functional of f (PL convex, affine or polynomial).

    param - v: density (Polynomial, constant or pole-free WeightExpr)
          - w: weight; its poles must cancel against v
    Exact whenever w*v is a polynomial. A weight carrying an opaque term is integrated by
    quad_adaptive and a float comes back.
    """
    dim = P.dim
    v_poly = _as_polynomial(v, dim)
    if v_poly is None:
        raise PoleNotCancelled("the density v must be a polynomial")
    weight = WeightExpr.of(w, dim)
    boundary = _integrate_against(P, f, v_poly, "boundary")
    try:
        wv = weight.times(v_poly)
    except PoleNotCancelled:
        if weight.opaque is None or weight.slot_open:
            raise
        wv = None
    if wv is not None:
        return 2 * boundary - _integrate_against(P, f, wv, "interior")

    logger.info("futaki: opaque weight, integrating the interior term numerically")
    f_eval = f.evaluate_float

    def integrand(points):
        return f_eval(points) * v_poly.evaluate_float(points) * weight.evaluate_float(points)

    interior = quad_adaptive(P, integrand, rel_tol).require()
    return 2 * float(boundary) - interior


def fplus(P: LabeledPolytope, density: Polynomial, blocks: Sequence, f) -> Fraction:
    """
    F-plus positivity functional; blocks are ranks or (rank, degree) pairs matched to P's labels.
    """
    bd = block_data(blocks, P)
    interior = Polynomial.zero(P.dim)
    for b in bd:
        if b.rank >= 2:
            interior = interior + density.divide_by_affine(b.label) * b.pole_coefficient
    return 2 * _integrate_against(P, f, density, "boundary") + _integrate_against(P, f, interior, "interior")


def normalize_star(f, x0: Sequence, P: LabeledPolytope) -> NormalizedPL:
    """
    Subtract the active piece at x0 with lexicographically smallest gradient, so f* >= f*(x0) = 0.
    """
    point = to_point(x0)
    if not P.interior_contains(point):
        raise BasePointOnBoundary(f"{tuple(str(c) for c in point)} is not an interior point")
    f = PLConvexFunction.of(f)
    piece = min((f.pieces[i] for i in f.active_indices(point)), key=lambda p: p.linear)
    f_star = PLConvexFunction(tuple(p - piece for p in f.pieces))
    return NormalizedPL(f_star, point, piece)


def l1_norm(P: LabeledPolytope, v: Polynomial, f) -> Fraction:
    """
    int |f| v dx, exact. The zero sets of the pieces are added to the creases so the sign of f
    is constant on every simplex.
    """
    f = PLConvexFunction.of(f)
    v = Polynomial.coerce(v, P.dim)
    sub = triangulate_with_creases(P, tuple(f.creases) + tuple(p for p in f.pieces if not p.is_constant()))
    total = Fraction(0)
    for s in sub.simplices:
        center = tuple(sum((x[c] for x in s), Fraction(0)) / len(s) for c in range(P.dim))
        piece = f.piece_at(center)
        value = integrate_over_simplex(s, piece.to_polynomial() * v)
        total += value if piece(center) >= 0 else -value
    return total


@dataclass(frozen=True)
class JNorm:
    """
    param - value: the weighted J-norm
          - xi: an optimal twist (its constant term is irrelevant and set to 0)
          - t: inf over Delta of f + xi at the optimum
    """
    value: Fraction
    xi: AffineFunction
    t: Fraction


def j_norm_detail(P: LabeledPolytope, v, f) -> JNorm:
    """
    inf over affine xi of int (f + xi - inf(f + xi)) v dx, as one exact LP in (xi linear part, t).
    The inf over Delta is a min over the vertices of f's crease subdivision.
    """
    f = PLConvexFunction.of(f)
    v = Polynomial.coerce(v, P.dim)
    dim = P.dim
    volume = integrate_polynomial(P, v)
    if volume <= 0:
        raise LPUnbounded("the density has nonpositive total mass")
    moments = [integrate_polynomial(P, Polynomial.coordinate(dim, k) * v) for k in range(dim)]
    base = integrate_pl_product(P, f, v)
    sub = triangulate_with_creases(P, f.creases)
    nodes = sorted({x for s in sub.simplices for x in s})

    lp = LinearProgram(dim + 1, moments + [-volume], free=set(range(dim + 1)))
    for z in nodes:
        lp.add([-c for c in z] + [1], "<=", f(z))
    res = solve_lp(lp)
    if res.status == "unbounded":
        raise LPUnbounded("the J-norm LP is unbounded")
    if res.status == "infeasible":
        raise LPInfeasible("the J-norm LP is infeasible")
    a, t = res.solution[:dim], res.solution[dim]
    return JNorm(base + res.value, AffineFunction(tuple(a), Fraction(0)), t)


def j_norm(P: LabeledPolytope, v, f) -> Fraction:
    return j_norm_detail(P, v, f).value


@dataclass(frozen=True)
class NormSandwich:
    j: Fraction
    l1_star: Fraction

    @property
    def ratio(self) -> Fraction | None:
        return None if self.j == 0 else self.l1_star / self.j


def norm_sandwich(P: LabeledPolytope, v, f, x0: Point | None = None) -> NormSandwich:
    """
    J-norm next to the L1 norm of the normalised function; the ratio is reported, never asserted.
    """
    x0 = x0 if x0 is not None else P.centroid()
    star = normalize_star(f, x0, P)
    return NormSandwich(j_norm(P, v, f), l1_norm(P, v, star.f_star))


def na_convert(value, kind: str, n: int, volume=1, vol_B=1, functional: str = "df") -> FunctionalValue:
    """
    Non-Archimedean scaling of a polytope-level value.

    param - kind: "toric" or "compatible" (the latter multiplies by Vol(Delta_B))
          - n: complex dimension of the fibre
          - volume: Vol of the polytope (or of Delta-hat); only used for functional="j"
          - functional: "df" (DF = (2 pi)^{n+1} F) or "j" (J = (2 pi)^{n+1} j / Vol)
    """
    q = to_rational(value)
    volume = to_rational(volume)
    vol_B = to_rational(vol_B)
    if volume <= 0 or vol_B <= 0:
        raise PolystabError("volumes must be positive")
    if kind not in ("toric", "compatible"):
        raise PolystabError(f"unknown kind {kind!r}")
    if functional not in ("df", "j"):
        raise PolystabError(f"unknown functional {functional!r}")
    if kind == "compatible":
        q *= vol_B
    if functional == "j":
        q /= volume
    return FunctionalValue(q, n + 1)
