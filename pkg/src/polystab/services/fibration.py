"""~/services/
fibre polytope of a projective bundle and the transfer identities between Delta and Delta-hat

    build_fiber_model / build_fiber_model_over: Delta-hat in coordinates (x, xhat) and Vol(Delta_B)
    standard_identification: lattice map taking Delta-hat to the standard n-simplex
    pullback / descend: move functions between Delta and Delta-hat
    verify_identities: integral, boundary-measure and Futaki transfer checks, exact
    compatible_test_configuration: Delta_{R-f} next to Delta-hat_{R - pi* f}
    bundle_problem / bundle_df / bundle_j / bundle_j_lower: end-to-end bundle quantities
    outer_weights: the (v, w) pair on Delta that the bundle weights come from
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from polystab.errors import DimensionMismatch, PolystabError, PullbackNotConstantAlongFibers
from polystab.models.algebra import AffineFunction, PLConvexFunction, Polynomial
from polystab.models.domain import (
    BundleProblem,
    BundleSpec,
    FiberModel,
    FunctionalValue,
    IdentityCheck,
    PoleTerm,
    TestConfigPolytope,
    WeightExpr,
)
from polystab.models.polytope import LabeledPolytope, LatticeMap, build_labeled_polytope, standard_simplex
from polystab.services.donaldson import donaldson_polytope
from polystab.services.functionals import futaki, j_norm
from polystab.services.integration import integrate_boundary, integrate_pl_product
from polystab.services.weights import (
    block_data,
    bundle_weights,
    extremal_problem,
    fiber_density,
    fiber_weights,
    kaehler_weight,
)

logger = logging.getLogger(__name__)


def build_fiber_model_over(P: LabeledPolytope, ranks: Sequence[int]) -> FiberModel:
    """
    Delta-hat over a labeled base, one rank per facet of P.
    Hatted coordinates xhat^j_1..xhat^j_{d_j-1} follow x for each block with d_j >= 2; the labels
    of block j are L_j - sum_i xhat^j_i and xhat^j_i, or L_j itself when d_j = 1.
    """
    blocks = block_data([int(r) for r in ranks], P)
    ell = P.dim
    offsets: list[int | None] = []
    total = ell
    for b in blocks:
        if b.rank >= 2:
            offsets.append(total)
            total += b.rank - 1
        else:
            offsets.append(None)

    labels: list[AffineFunction] = []
    origin: list[tuple[int, int]] = []
    factors: list[LabeledPolytope | None] = []
    vol_B = Fraction(1)
    for b, start in zip(blocks, offsets):
        padded = b.label.pad(total)
        if start is None:
            labels.append(padded)
            origin.append((b.index, -1))
            factors.append(None)
            continue
        hats = [AffineFunction.coordinate(total, start + i) for i in range(b.rank - 1)]
        outer = padded
        for h in hats:
            outer = outer - h
        labels.append(outer)
        origin.append((b.index, 0))
        for i, h in enumerate(hats, start=1):
            labels.append(h)
            origin.append((b.index, i))
        factors.append(standard_simplex(b.rank - 1))
        vol_B /= math.factorial(b.rank - 1)

    hat = build_labeled_polytope(labels)
    logger.debug("fibre model: base dim %d, hat dim %d, Vol(Delta_B) = %s", ell, total, vol_B)
    return FiberModel(P, blocks, hat, tuple(factors), vol_B, fiber_density(blocks), tuple(offsets), tuple(origin))


def build_fiber_model(blocks: Sequence) -> FiberModel:
    """
    Delta-hat over the standard simplex; blocks are ranks or (rank, degree) pairs.
    """
    ranks = [int(b) if isinstance(b, int) else int(b[0]) for b in blocks]
    return build_fiber_model_over(standard_simplex(len(ranks) - 1), ranks)


def standard_identification(model: FiberModel) -> LatticeMap:
    """
    Y = (x_k - sum_i xhat^k_i for k = 1..l, then every xhat). Needs the standard simplex as base.
    """
    ell, n = model.ell, model.n
    if model.base.labels != standard_simplex(ell).labels:
        raise PolystabError("the standard identification needs the standard simplex as base")
    rows = []
    for k in range(1, ell + 1):
        row = [Fraction(0)] * n
        row[k - 1] = Fraction(1)
        start = model.hat_offsets[k]
        if start is not None:
            for i in range(model.blocks[k].rank - 1):
                row[start + i] = Fraction(-1)
        rows.append(tuple(row))
    for h in range(ell, n):
        rows.append(tuple(Fraction(int(c == h)) for c in range(n)))
    return LatticeMap(tuple(rows), (Fraction(0),) * n)


##########
#               pullback / descent
##########

def pullback(model: FiberModel, obj):
    """
    pi* of an object on Delta; objects already on Delta-hat must be constant along the fibres.
    """
    n, ell = model.n, model.ell
    if isinstance(obj, (int, Fraction)):
        return Polynomial.constant(n, obj)
    dim = obj.dim
    if dim == n:
        descend(model, obj)
        return obj
    if dim != ell:
        raise DimensionMismatch(f"object of dim {dim} is on neither Delta ({ell}) nor Delta-hat ({n})")
    if isinstance(obj, AffineFunction):
        return obj.pad(n)
    if isinstance(obj, PLConvexFunction):
        return obj.pad(n)
    if isinstance(obj, Polynomial):
        return obj.embed(n)
    if isinstance(obj, WeightExpr):
        if obj.opaque is not None or obj.slot_open:
            raise PolystabError("only resolved, non-opaque weights can be pulled back")
        poles = tuple(PoleTerm(t.coefficient, t.label.pad(n)) for t in obj.pole_terms)
        return WeightExpr(n, obj.poly.embed(n), poles)
    raise PolystabError(f"cannot pull back {type(obj).__name__}")


def _descend_affine(L: AffineFunction, ell: int) -> AffineFunction:
    if any(L.linear[ell:]):
        raise PullbackNotConstantAlongFibers(f"{L} depends on the fibre coordinates")
    return AffineFunction(L.linear[:ell], L.constant)


def descend(model: FiberModel, obj):
    """
    The function on Delta whose pullback is obj.
    """
    ell = model.ell
    if isinstance(obj, (int, Fraction)):
        return Polynomial.constant(ell, obj)
    if obj.dim == ell:
        return obj
    if isinstance(obj, AffineFunction):
        return _descend_affine(obj, ell)
    if isinstance(obj, PLConvexFunction):
        return PLConvexFunction(tuple(_descend_affine(p, ell) for p in obj.pieces))
    if isinstance(obj, Polynomial):
        if not obj.uses_only(ell):
            raise PullbackNotConstantAlongFibers("the polynomial depends on the fibre coordinates")
        return obj.truncate(ell)
    if isinstance(obj, WeightExpr):
        if obj.opaque is not None or obj.slot_open:
            raise PolystabError("only resolved, non-opaque weights can be descended")
        poles = tuple(PoleTerm(t.coefficient, _descend_affine(t.label, ell)) for t in obj.pole_terms)
        return WeightExpr(ell, descend(model, obj.poly), poles)
    raise PolystabError(f"cannot descend {type(obj).__name__}")


##########
#               transfer identities
##########

def verify_identities(model: FiberModel, f, v=1, w=0) -> list[IdentityCheck]:
    """
    Three families of exact checks, each computed on Delta-hat directly and on Delta by formula.

        pullback_integral: int_hat pi*f v = Vol(Delta_B) int f p v
        boundary_measure[j,i]: one per facet of Delta-hat
        futaki_transfer: F^hat_{v,w}(pi*f) = Vol(Delta_B) F_{pv, w-hat}(f)

    param - f: PL convex function (or affine function) on Delta or Delta-hat
          - v, w: polynomials on Delta or Delta-hat, constant along the fibres
    """
    f_base = descend(model, PLConvexFunction.of(f))
    f_hat = pullback(model, f_base)
    v_base = Polynomial.coerce(descend(model, v), model.ell)
    w_base = descend(model, w)
    if not isinstance(w_base, WeightExpr):
        w_base = Polynomial.coerce(w_base, model.ell)
    v_hat = pullback(model, v_base)
    w_hat = pullback(model, w_base)
    base, hat, vol_B = model.base, model.hat, model.vol_B
    pv = model.p * v_base
    checks = []

    checks.append(IdentityCheck(
        "pullback_integral",
        integrate_pl_product(hat, f_hat, v_hat),
        vol_B * integrate_pl_product(base, f_base, pv),
    ))

    hat_facets = integrate_pl_product(hat, f_hat, v_hat, "boundary", per_facet=True).per_facet
    base_facets = integrate_pl_product(base, f_base, pv, "boundary", per_facet=True).per_facet
    sigma_cache: dict[int, tuple[Fraction, ...]] = {}
    for idx, (j, i) in enumerate(model.label_origin):
        block = model.blocks[j]
        if i < 0:
            rhs = vol_B * base_facets[j]
        else:
            factor = model.base_factors[j]
            if j not in sigma_cache:
                sigma_cache[j] = integrate_boundary(factor, Polynomial.constant(factor.dim, 1)).per_facet
            scale = vol_B / factor.volume() * sigma_cache[j][i]
            rhs = scale * integrate_pl_product(base, f_base, pv.divide_by_affine(block.label))
        checks.append(IdentityCheck(f"boundary_measure[{j},{i}]", hat_facets[idx], rhs))

    _, template = fiber_weights([b.rank for b in model.blocks], base)
    w_fibre = template.fill_slot(w_base) if isinstance(w_base, Polynomial) else _add_weights(template, w_base)
    checks.append(IdentityCheck(
        "futaki_transfer",
        futaki(hat, v_hat, w_hat, f_hat),
        vol_B * futaki(base, pv, w_fibre, f_base),
    ))
    failed = [c.check for c in checks if not c.passed]
    if failed:
        logger.warning("identity checks with nonzero difference: %s", ", ".join(failed))
    return checks


def _add_weights(template: WeightExpr, w: WeightExpr) -> WeightExpr:
    filled = template.fill_slot(w.poly)
    return WeightExpr(filled.dim, filled.poly, filled.pole_terms + w.pole_terms)


@dataclass(frozen=True)
class CompatibleConfiguration:
    base: TestConfigPolytope
    hat: TestConfigPolytope


def compatible_test_configuration(model: FiberModel, f, R=None) -> CompatibleConfiguration:
    """
    Delta_{R-f} and Delta-hat_{R - pi* f} with a common height R.
    """
    base_tc = donaldson_polytope(model.base, f, R)
    hat_tc = donaldson_polytope(model.hat, pullback(model, base_tc.f), base_tc.R)
    return CompatibleConfiguration(base_tc, hat_tc)


##########
#               bundle problem
##########

def bundle_problem(spec: BundleSpec) -> BundleProblem:
    """
    density p * p_bar, resolved w-bar and the transfer multipliers of a bundle spec.
    """
    P = standard_simplex(spec.ell)
    p_bar = kaehler_weight(spec)
    density, template = bundle_weights(spec)
    l_ext, weight = extremal_problem(P, density, template)
    model = build_fiber_model(spec.ranks)
    n = spec.n
    fiber_df = FunctionalValue(model.vol_B, n + 1)
    # Vol(X, [omega]) = (2 pi)^n Vol(Delta-hat)
    vol_omega = FunctionalValue(model.hat.volume(), n)
    bundle_j = spec.base_volume * FunctionalValue(model.vol_B, n + 2) / vol_omega
    logger.info("bundle problem: l_ext = %s", l_ext)
    return BundleProblem(
        spec=spec,
        polytope=P,
        p=model.p,
        p_bar=p_bar,
        density=density,
        weight=weight,
        l_ext=l_ext,
        weighted_product=weight.times(density),
        vol_B=model.vol_B,
        fiber_df_multiplier=fiber_df,
        bundle_df_multiplier=spec.base_volume * fiber_df,
        bundle_j_multiplier=bundle_j,
        j_lower_factor=min(p_bar(x) for x in P.vertices),
    )


def outer_weights(problem: BundleProblem) -> tuple[AffineFunction, WeightExpr]:
    """
    (v, w) on Delta whose fibre weights are the bundle's: p * v = density and
    w - sum 2 d_j (d_j-1) / L_j = w-bar, i.e. v = p_bar and w = l_ext - 4 (1-g) / p_bar.
    """
    spec = problem.spec
    poles = () if spec.genus == 1 else (PoleTerm(Fraction(-4 * (1 - spec.genus)), problem.p_bar),)
    return problem.p_bar, WeightExpr(spec.ell, problem.l_ext.to_polynomial(), poles)


def bundle_df(problem: BundleProblem, f) -> FunctionalValue:
    """
    DF of the compatible bundle test configuration of f.
    """
    value = futaki(problem.polytope, problem.density, problem.weight, f)
    return problem.bundle_df_multiplier * value


def bundle_j(problem: BundleProblem, f) -> FunctionalValue:
    return problem.bundle_j_multiplier * j_norm(problem.polytope, problem.density, f)


def bundle_j_lower(problem: BundleProblem, f) -> FunctionalValue:
    """
    inf(p_bar) times the p-weighted expression; never larger than bundle_j.
    """
    lower = problem.j_lower_factor * j_norm(problem.polytope, problem.p, f)
    return problem.bundle_j_multiplier * lower
