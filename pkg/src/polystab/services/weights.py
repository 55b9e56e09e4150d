"""~/services/
weight functions of projective bundles and extremal affine functions

    block_data: BlockData for each summand, labels taken from the base polytope
    fiber_weights: p = prod L_j^{d_j-1} and the w-hat template (outer w still open)
    bundle_weights: density p * p_bar and the w-bar template (extremal slot open)
    solve_extremal: the unique affine l_ext annihilating F on affine functions
    extremal_problem: solve_extremal for a (density, weight template) pair, returning the resolved weight
    block_swap_map: lattice symmetry of the standard simplex exchanging two labels
"""
from __future__ import annotations

import logging
from fractions import Fraction
from typing import Sequence

from polystab.errors import KaehlerConeViolation, PolystabError, SingularGram
from polystab.models.algebra import AffineFunction, Polynomial, det, solve
from polystab.models.domain import BlockData, BundleSpec, PoleTerm, WeightExpr
from polystab.models.polytope import LabeledPolytope, LatticeMap, standard_simplex
from polystab.services.integration import integrate_boundary, integrate_polynomial

logger = logging.getLogger(__name__)


def block_data(blocks: Sequence, base: LabeledPolytope | None = None) -> tuple[BlockData, ...]:
    """
    param - blocks: ranks, (rank, degree) pairs or BlockData, one per facet of base
          - base: labeled polytope whose labels become the L_j (default: standard simplex)
    """
    if blocks and all(isinstance(b, BlockData) for b in blocks):
        return tuple(blocks)
    pairs = [(int(b), 0) if isinstance(b, int) else (int(b[0]), int(b[1])) for b in blocks]
    if len(pairs) < 2:
        raise PolystabError("at least two blocks are needed")
    base = base or standard_simplex(len(pairs) - 1)
    if len(base.labels) != len(pairs):
        raise PolystabError(f"{len(pairs)} blocks for a polytope with {len(base.labels)} facets")
    if any(r < 1 for r, _ in pairs):
        raise PolystabError("block ranks must be positive")
    return tuple(BlockData(j, r, d, base.labels[j]) for j, (r, d) in enumerate(pairs))


def fiber_density(blocks: Sequence[BlockData]) -> Polynomial:
    dim = blocks[0].label.dim
    p = Polynomial.constant(dim, 1)
    for b in blocks:
        if b.rank > 1:
            p = p * (b.label.to_polynomial() ** (b.rank - 1))
    return p


def fiber_weights(blocks: Sequence, base: LabeledPolytope | None = None) -> tuple[Polynomial, WeightExpr]:
    """
    p(x) = prod_j L_j(x)^{d_j-1} and w-hat = w - sum_{d_j >= 2} 2 d_j (d_j-1) / L_j.
    The template's slot takes the outer weight w via WeightExpr.fill_slot.
    """
    bd = block_data(blocks, base)
    dim = bd[0].label.dim
    poles = tuple(PoleTerm(Fraction(-b.pole_coefficient), b.label) for b in bd if b.rank >= 2)
    return fiber_density(bd), WeightExpr(dim, Polynomial.zero(dim), poles, slot_open=True)


def kaehler_weight(spec: BundleSpec) -> AffineFunction:
    """
    p_bar = c - sum_j mu(E_j) L_j. Raises KaehlerConeViolation unless c exceeds every slope.
    """
    bd = block_data(spec.blocks)
    top = max(b.slope for b in bd)
    if spec.c <= top:
        raise KaehlerConeViolation(f"c = {spec.c} must exceed the largest slope {top}")
    p_bar = AffineFunction.constant_function(spec.ell, spec.c)
    for b in bd:
        p_bar = p_bar - b.label * b.slope
    return p_bar


def bundle_weights(spec: BundleSpec) -> tuple[Polynomial, WeightExpr]:
    """
    density = p * p_bar and w-bar = l_ext - sum_{d_j >= 2} 2 d_j (d_j-1) / L_j - 4 (1-g) / p_bar,
    with l_ext left open until extremal_problem resolves it.
    """
    p_bar = kaehler_weight(spec)
    p, template = fiber_weights(spec.blocks)
    density = p * p_bar.to_polynomial()
    poles = template.pole_terms
    if spec.genus != 1:
        poles = poles + (PoleTerm(Fraction(-4 * (1 - spec.genus)), p_bar),)
    w_bar = WeightExpr(spec.ell, Polynomial.zero(spec.ell), poles, slot_open=True)
    # certify the pole part cancels before anyone integrates it
    w_bar.poles_times(density)
    return density, w_bar


def _affine_basis(dim: int) -> list[Polynomial]:
    return [Polynomial.constant(dim, 1)] + [Polynomial.coordinate(dim, k) for k in range(dim)]


def gram_matrix(P: LabeledPolytope, measure: Polynomial) -> list[list[Fraction]]:
    basis = _affine_basis(P.dim)
    return [[integrate_polynomial(P, a * b * measure) for a in basis] for b in basis]


def leading_minors(matrix: list[list[Fraction]]) -> list[Fraction]:
    return [det([row[:k] for row in matrix[:k]]) for k in range(1, len(matrix) + 1)]


def solve_extremal(
    P: LabeledPolytope, measure: Polynomial, rhs_boundary: Polynomial, rhs_interior: Polynomial
) -> AffineFunction:
    """
    Unique affine l with  int g l measure dx = 2 int_boundary g rhs_boundary dsigma + int g rhs_interior dx
    for every affine g, from the (l+1) x (l+1) Gram system.
    """
    basis = _affine_basis(P.dim)
    gram = gram_matrix(P, measure)
    rhs = [
        2 * integrate_boundary(P, g * rhs_boundary).total + integrate_polynomial(P, g * rhs_interior)
        for g in basis
    ]
    coeffs = solve(gram, rhs)
    if coeffs is None:
        raise SingularGram("the measure does not define a positive definite Gram matrix")
    ell = AffineFunction(tuple(coeffs[1:]), coeffs[0])
    logger.debug("extremal affine function: %s", ell)
    return ell


def extremal_problem(P: LabeledPolytope, density: Polynomial, template: WeightExpr) -> tuple[AffineFunction, WeightExpr]:
    """
    Fill template's extremal slot so that F_{density, weight}(g) = 0 for every affine g.
    """
    fixed = template.poly * density + template.poles_times(density)
    ell = solve_extremal(P, density, density, -fixed)
    return ell, template.fill_slot(ell)


def futaki_residual(P: LabeledPolytope, density: Polynomial, weighted: Polynomial, g: AffineFunction) -> Fraction:
    """
    F(g) = 2 int_boundary g density dsigma - int g (weight * density) dx for affine g.
    """
    gp = g.to_polynomial()
    return 2 * integrate_boundary(P, gp * density).total - integrate_polynomial(P, gp * weighted)


def block_swap_map(ell: int, j: int, k: int) -> LatticeMap:
    """
    The lattice automorphism y_a = L_{tau(a)}(x) of the standard simplex, tau = (j k).
    It satisfies L_a(y) = L_{tau(a)}(x) for every label, L_0 included.
    """
    simplex = standard_simplex(ell)
    tau = list(range(ell + 1))
    tau[j], tau[k] = tau[k], tau[j]
    rows = [simplex.labels[tau[a]] for a in range(1, ell + 1)]
    return LatticeMap(tuple(r.linear for r in rows), tuple(r.constant for r in rows))
