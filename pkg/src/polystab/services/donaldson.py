"""~/services/
Donaldson test-configuration polytopes

    make_pl: dedupe, prune and order the pieces of a PL convex function on a polytope
    default_height: R = ceil(max f) + 1
    donaldson_polytope: Delta_{R-f} = {(x, y): x in Delta, 0 <= y <= R - f(x)} with its labels
    check_dpl_dom: RPL / DPL / DPL_dom classification
    twist: f + xi for an affine xi with integer linear part
"""
from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import Sequence

from polystab.errors import EmptyPieceList, NonIntegerSlope, NotStrictlyPositive
from polystab.models.algebra import AffineFunction, PLConvexFunction, denominators_lcm, to_rational
from polystab.models.domain import TCClass, TestConfigPolytope
from polystab.models.polytope import LabeledPolytope, build_labeled_polytope, is_delzant
from polystab.services.lp import LinearProgram, solve_lp

logger = logging.getLogger(__name__)


def _has_full_region(k: int, pieces: Sequence[AffineFunction], P: LabeledPolytope) -> bool:
    """
    maximize t subject to f_k - f_j >= t (j != k), x in P, t <= 1; the region of piece k is
    full-dimensional iff t* > 0.
    """
    dim = P.dim
    lp = LinearProgram(dim + 1, free=set(range(dim + 1)))
    lp.maximize([0] * dim + [1])
    fk = pieces[k]
    for j, fj in enumerate(pieces):
        if j == k:
            continue
        h = fk - fj
        lp.add(list(h.linear) + [-1], ">=", -h.constant)
    for L in P.labels:
        lp.add(list(L.linear) + [0], ">=", -L.constant)
    lp.add([0] * dim + [1], "<=", 1)
    res = solve_lp(lp)
    return res.optimal and -res.value > 0


def make_pl(pieces: Sequence[AffineFunction], P: LabeledPolytope | None = None) -> PLConvexFunction:
    """
    Deduplicate and sort the pieces; with P given, drop every piece that is the maximum only on a
    lower-dimensional part of P (or nowhere).
    """
    unique = sorted({p.sort_key(): p for p in pieces}.values(), key=AffineFunction.sort_key)
    if not unique:
        raise EmptyPieceList("a PL function needs at least one piece")
    if P is None or len(unique) == 1:
        return PLConvexFunction(tuple(unique))
    kept = [p for k, p in enumerate(unique) if _has_full_region(k, unique, P)]
    if len(kept) < len(unique):
        logger.debug("make_pl: pruned %d inactive pieces", len(unique) - len(kept))
    return PLConvexFunction(tuple(kept))


def default_height(P: LabeledPolytope, f: PLConvexFunction) -> Fraction:
    """
    ceil(max f) + 1; a convex function attains its max over P at a vertex.
    """
    top = max(f(v) for v in P.vertices)
    return Fraction(math.ceil(top) + 1)


def _slope_multiplier(f: PLConvexFunction) -> int:
    return denominators_lcm(a for p in f.pieces for a in p.linear)


def donaldson_polytope(
    P: LabeledPolytope, f, R=None, clear_slopes: bool = False
) -> TestConfigPolytope:
    """
    Labels, in order: the labels of P padded by y, then y, then R - y - f_k for every piece.

    param - R: height, default default_height(P, f) (computed after any slope clearing)
          - clear_slopes: scale f (and a given R) by the lcm of the slope denominators instead of
            raising NonIntegerSlope
    """
    f = make_pl(PLConvexFunction.of(f).pieces, P)
    multiplier = _slope_multiplier(f)
    if multiplier != 1:
        if not clear_slopes:
            raise NonIntegerSlope(f"pieces need integer linear parts (lcm of denominators {multiplier})")
        f = f.scale(multiplier)
        if R is not None:
            R = to_rational(R) * multiplier
    R = default_height(P, f) if R is None else to_rational(R)
    worst = min(R - f(v) for v in P.vertices)
    if worst <= 0:
        raise NotStrictlyPositive(f"R - f reaches {worst} on the polytope (R = {R})")

    dim = P.dim + 1
    y = AffineFunction.coordinate(dim, P.dim)
    labels = [L.pad(dim) for L in P.labels] + [y]
    labels += [AffineFunction.constant_function(dim, R) - y - piece.pad(dim) for piece in f.pieces]
    polytope = build_labeled_polytope(labels)
    verdict = is_delzant(polytope)
    tc = TestConfigPolytope(P, f, R, polytope, TCClass.RPL, verdict, multiplier)
    return TestConfigPolytope(P, f, R, polytope, check_dpl_dom(tc), verdict, multiplier)


def check_dpl_dom(tc: TestConfigPolytope) -> TCClass:
    if not tc.verdict.delzant:
        return TCClass.RPL
    if any(piece.is_constant() for piece in tc.f.pieces):
        return TCClass.DPL_DOM
    return TCClass.DPL


def twist(f, xi: AffineFunction) -> PLConvexFunction:
    """
    f + xi; xi must have an integer linear part so that Delta_{R-f-xi} stays a lattice polytope.
    """
    if not xi.is_integral():
        raise NonIntegerSlope(f"twist {xi} has a non-integer linear part")
    return PLConvexFunction.of(f) + xi
