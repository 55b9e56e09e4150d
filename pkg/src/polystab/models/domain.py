"""~/models/
domain models

    BlockData: one summand E_j of the bundle (rank, degree, slope, label L_j)
    BundleSpec: user-facing description of P(E_0 + ... + E_l) over a curve of genus g
    PoleTerm / WeightExpr: structured weight functions (polynomial core, facet poles, extremal slot)
    FunctionalValue: rational times an integer power of 2*pi
    NormalizedPL: f* = f - (subtangent at x0)
    TCClass / TestConfigPolytope: the Donaldson polytope of a PL function and its classification
    FiberModel: the fibre polytope over the base simplex and its blow-down bookkeeping
    BundleProblem: density, resolved weight and transfer constants of a bundle spec
    IdentityCheck: the two sides of an exact identity
    SymplecticPotential / MabuchiValue: u = u0 + phi and its weighted Mabuchi energy
    ConvexGrid / LambdaEstimate / Certificate / StabilityReport / SweepRow / SweepSummary: search output
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from polystab.errors import DimensionMismatch, PoleNotCancelled, PolystabError
from polystab.models.algebra import (
    AffineFunction,
    PLConvexFunction,
    Point,
    Polynomial,
    format_rational,
    to_rational,
)
from polystab.models.polytope import DelzantVerdict, LabeledPolytope


@dataclass(frozen=True)
class BlockData:
    """
    One block of the splitting E = E_0 + ... + E_l.

    param - index: j
          - rank: d_j >= 1
          - degree: deg(E_j)
          - label: L_j on the base polytope (L_0 = 1 - sum x_k, L_k = x_k on the standard simplex)
    """
    index: int
    rank: int
    degree: int
    label: AffineFunction

    @property
    def slope(self) -> Fraction:
        return Fraction(self.degree, self.rank)

    @property
    def pole_coefficient(self) -> int:
        return 2 * self.rank * (self.rank - 1)


@dataclass(frozen=True)
class FunctionalValue:
    """
    rational_part * (2 pi)^two_pi_power, kept exact; float_view is derived on demand.
    """
    rational_part: Fraction
    two_pi_power: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rational_part", to_rational(self.rational_part))

    @property
    def float_view(self) -> float:
        return float(self.rational_part) * (2 * math.pi) ** self.two_pi_power

    def __mul__(self, other) -> FunctionalValue:
        if isinstance(other, FunctionalValue):
            return FunctionalValue(self.rational_part * other.rational_part, self.two_pi_power + other.two_pi_power)
        return FunctionalValue(self.rational_part * to_rational(other), self.two_pi_power)

    __rmul__ = __mul__

    def __truediv__(self, other) -> FunctionalValue:
        if isinstance(other, FunctionalValue):
            return FunctionalValue(self.rational_part / other.rational_part, self.two_pi_power - other.two_pi_power)
        return FunctionalValue(self.rational_part / to_rational(other), self.two_pi_power)

    def to_json(self) -> dict:
        return {"rational": format_rational(self.rational_part), "two_pi_power": self.two_pi_power}

    @classmethod
    def from_json(cls, data) -> FunctionalValue:
        if isinstance(data, Mapping):
            return cls(to_rational(data["rational"]), int(data.get("two_pi_power", 0)))
        return cls(to_rational(data), 0)

    def __str__(self) -> str:
        if self.two_pi_power == 0:
            return format_rational(self.rational_part)
        return f"(2pi)^{self.two_pi_power} * {format_rational(self.rational_part)}"


@dataclass(frozen=True)
class BundleSpec:
    """
    param - genus: g >= 0
          - blocks: (rank, degree) per summand, at least two
          - c: Kaehler parameter, must exceed every slope
          - base_volume: Vol(C, [omega_C]), default the symbolic 2 pi
    """
    genus: int
    blocks: tuple[tuple[int, int], ...]
    c: Fraction
    base_volume: FunctionalValue = field(default_factory=lambda: FunctionalValue(Fraction(1), 1))

    def __post_init__(self):
        blocks = tuple((int(r), int(d)) for r, d in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "c", to_rational(self.c))
        if len(blocks) < 2:
            raise PolystabError("a bundle spec needs at least two blocks")
        if any(r < 1 for r, _ in blocks):
            raise PolystabError("block ranks must be positive")
        if self.genus < 0:
            raise PolystabError("genus must be nonnegative")

    @property
    def ell(self) -> int:
        return len(self.blocks) - 1

    @property
    def n(self) -> int:
        return sum(r for r, _ in self.blocks) - 1

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(r for r, _ in self.blocks)

    def with_c(self, c) -> BundleSpec:
        return replace(self, c=to_rational(c))

    def to_json(self) -> dict:
        return {
            "genus": self.genus,
            "blocks": [{"rank": r, "degree": d} for r, d in self.blocks],
            "c": format_rational(self.c),
            "base_volume": self.base_volume.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> BundleSpec:
        try:
            blocks = tuple((int(b["rank"]), int(b.get("degree", 0))) for b in data["blocks"])
            base = data.get("base_volume")
            return cls(
                int(data.get("genus", 0)),
                blocks,
                to_rational(data["c"]),
                FunctionalValue.from_json(base) if base is not None else FunctionalValue(Fraction(1), 1),
            )
        except (KeyError, TypeError) as exc:
            raise PolystabError(f"malformed bundle spec: {exc}") from exc


@dataclass(frozen=True)
class PoleTerm:
    coefficient: Fraction
    label: AffineFunction


@dataclass(frozen=True)
class WeightExpr:
    """
    w = poly + sum coefficient / label (+ extremal slot) (+ opaque evaluator).

    param - dim: number of variables
          - poly: polynomial core
          - pole_terms: facet poles, cancelled against the density at pairing time
          - opaque: optional additive term known only numerically
          - extremal_slot: the affine function filled in by solve_extremal (already inside poly)
          - slot_open: True while the extremal affine function is still unknown
    """
    dim: int
    poly: Polynomial
    pole_terms: tuple[PoleTerm, ...] = ()
    opaque: Callable[[np.ndarray], np.ndarray] | None = None
    extremal_slot: AffineFunction | None = None
    slot_open: bool = False

    @classmethod
    def of(cls, value, dim: int) -> WeightExpr:
        if isinstance(value, WeightExpr):
            if value.dim != dim:
                raise DimensionMismatch(f"weight of dim {value.dim} where dim {dim} expected")
            return value
        return cls(dim, Polynomial.coerce(value, dim))

    def fill_slot(self, value) -> WeightExpr:
        """
        Add the outer weight (or the extremal affine function) to the polynomial core.
        """
        extra = Polynomial.coerce(value, self.dim)
        slot = value if isinstance(value, AffineFunction) else None
        return replace(self, poly=self.poly + extra, extremal_slot=slot, slot_open=False)

    def poles_times(self, density: Polynomial) -> Polynomial:
        out = Polynomial.zero(self.dim)
        for term in self.pole_terms:
            out = out + density.divide_by_affine(term.label) * term.coefficient
        return out

    def times(self, density: Polynomial) -> Polynomial:
        """
        weight * density as a Polynomial. Raises PoleNotCancelled if that is impossible.
        """
        if self.slot_open:
            raise PoleNotCancelled("the extremal affine function has not been resolved")
        if self.opaque is not None:
            raise PoleNotCancelled("an opaque weight term has no polynomial form")
        return self.poly * density + self.poles_times(density)

    def evaluate_float(self, points: np.ndarray) -> np.ndarray:
        if self.slot_open:
            raise PoleNotCancelled("the extremal affine function has not been resolved")
        out = self.poly.evaluate_float(points)
        for term in self.pole_terms:
            out = out + float(term.coefficient) / term.label.evaluate_float(points)
        if self.opaque is not None:
            out = out + np.asarray(self.opaque(points), dtype=float)
        return out

    def scale(self, factor) -> WeightExpr:
        q = to_rational(factor)
        return replace(
            self,
            poly=self.poly * q,
            pole_terms=tuple(PoleTerm(t.coefficient * q, t.label) for t in self.pole_terms),
        )


@dataclass(frozen=True)
class NormalizedPL:
    """
    param - f_star: f minus the chosen subtangent, f_star >= f_star(x0) = 0
          - base_point: x0
          - removed_affine: the subtangent affine function
    """
    f_star: PLConvexFunction
    base_point: Point
    removed_affine: AffineFunction


class TCClass(str, Enum):
    RPL = "RPL"
    DPL = "DPL"
    DPL_DOM = "DPL_dom"


@dataclass(frozen=True)
class TestConfigPolytope:
    """
    param - base: the polytope Delta
          - f: the PL function (slopes cleared if slope_multiplier != 1)
          - R: height with R - f > 0 on Delta
          - polytope: Delta_{R-f} in dimension l+1, labels L_i, y, R - y - f_k
          - classification: RPL, DPL or DPL_dom
          - verdict: Delzant verdict of polytope
          - slope_multiplier: positive integer the input f was scaled by
    """
    __test__ = False

    base: LabeledPolytope
    f: PLConvexFunction
    R: Fraction
    polytope: LabeledPolytope
    classification: TCClass
    verdict: DelzantVerdict
    slope_multiplier: int = 1

    def to_json(self) -> dict:
        out = self.verdict.to_json()
        out["classification"] = self.classification.value
        out["R"] = format_rational(self.R)
        out["slope_multiplier"] = self.slope_multiplier
        out["vertices"] = [[format_rational(c) for c in v] for v in self.polytope.vertices]
        return out


@dataclass(frozen=True)
class FiberModel:
    """
    param - base: the standard l-simplex Delta (or any labeled base)
          - blocks: BlockData per base facet
          - hat: Delta-hat in coordinates (x, xhat^j_i), dimension l + sum(d_j - 1)
          - base_factors: the standard (d_j-1)-simplex Delta_j per block (None when d_j = 1)
          - vol_B: Vol(Delta_B) = prod 1/(d_j-1)!
          - p: density prod L_j^{d_j-1}
          - hat_offsets: first hatted coordinate index of each block (None when d_j = 1)
          - label_origin: per Delta-hat label, (j, i) with i = 0 for L_j - sum xhat^j and
            i >= 1 for xhat^j_i; i = -1 marks a pulled-back base label (d_j = 1)
    """
    base: LabeledPolytope
    blocks: tuple[BlockData, ...]
    hat: LabeledPolytope
    base_factors: tuple[LabeledPolytope | None, ...]
    vol_B: Fraction
    p: Polynomial
    hat_offsets: tuple[int | None, ...]
    label_origin: tuple[tuple[int, int], ...]

    @property
    def ell(self) -> int:
        return self.base.dim

    @property
    def n(self) -> int:
        return self.hat.dim


@dataclass(frozen=True)
class BundleProblem:
    """
    param - spec: the BundleSpec
          - polytope: Delta (standard simplex)
          - p, p_bar: fibre and Kaehler-parameter weights; density = p * p_bar
          - weight: w-bar with the extremal slot resolved
          - l_ext: extremal affine function
          - weighted_product: w-bar * density as a polynomial
          - fiber_df_multiplier: (2pi)^{n+1} Vol(Delta_B)
          - bundle_df_multiplier: Vol(C) (2pi)^{n+1} Vol(Delta_B)
          - bundle_j_multiplier: Vol(C) (2pi)^{n+2} Vol(Delta_B) / Vol([omega])
          - j_lower_factor: inf over Delta of p_bar (a vertex minimum)
    """
    spec: BundleSpec
    polytope: LabeledPolytope
    p: Polynomial
    p_bar: AffineFunction
    density: Polynomial
    weight: WeightExpr
    l_ext: AffineFunction
    weighted_product: Polynomial
    vol_B: Fraction
    fiber_df_multiplier: FunctionalValue
    bundle_df_multiplier: FunctionalValue
    bundle_j_multiplier: FunctionalValue
    j_lower_factor: Fraction


@dataclass(frozen=True)
class IdentityCheck:
    check: str
    lhs: Fraction
    rhs: Fraction

    @property
    def difference(self) -> Fraction:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.difference == 0

    def to_json(self) -> dict:
        return {
            "check": self.check,
            "lhs": format_rational(self.lhs),
            "rhs": format_rational(self.rhs),
            "difference": format_rational(self.difference),
        }


@dataclass(frozen=True)
class SymplecticPotential:
    """
    u = u0 + phi with u0 = 1/2 sum L_i log L_i the Guillemin potential of polytope.
    """
    polytope: LabeledPolytope
    phi: Polynomial

    @classmethod
    def guillemin(cls, P: LabeledPolytope) -> SymplecticPotential:
        return cls(P, Polynomial.zero(P.dim))

    def __post_init__(self):
        if self.phi.dim != self.polytope.dim:
            raise DimensionMismatch("phi and polytope dimensions differ")

    def to_json(self) -> dict:
        return {"phi": self.phi.to_json(), "polytope": self.polytope.to_json()}


@dataclass(frozen=True)
class MabuchiValue:
    """
    param - entropy_term: -integral of log det(Hess u Hess u0^{-1}) * density
          - entropy_error: quadrature error estimate of the entropy term
          - linear_term: F(u), exact when the Guillemin integrals are rational
    """
    entropy_term: float
    entropy_error: float
    linear_term: Fraction | float

    @property
    def total(self) -> float:
        return self.entropy_term + float(self.linear_term)

    def to_json(self) -> dict:
        lin = self.linear_term
        return {
            "entropy": self.entropy_term,
            "entropy_error": self.entropy_error,
            "linear": format_rational(lin) if isinstance(lin, Fraction) else lin,
            "total": self.total,
        }


@dataclass(frozen=True)
class ConvexGrid:
    """
    param - polytope: the simplex being gridded
          - N: resolution
          - nodes: principal lattice points, sorted
          - simplices: node-index tuples of the Kuhn triangulation
          - interior_facets: (simplex a, opposite node of a, simplex b, opposite node of b)
          - boundary_facets: (label index, node-index tuple of the facet simplex)
    """
    polytope: LabeledPolytope
    N: int
    nodes: tuple[Point, ...]
    simplices: tuple[tuple[int, ...], ...]
    interior_facets: tuple[tuple[int, int, int, int], ...]
    boundary_facets: tuple[tuple[int, tuple[int, ...]], ...]


@dataclass(frozen=True)
class LambdaEstimate:
    N: int
    value: Fraction
    nodal_values: tuple[Fraction, ...]
    base_node: int
    norm: str


@dataclass(frozen=True)
class Certificate:
    """
    A destabilizing PL function re-evaluated outside the LP.
    """
    f: PLConvexFunction
    futaki: Fraction
    norm: Fraction


@dataclass(frozen=True)
class StabilityReport:
    estimates: tuple[LambdaEstimate, ...]
    norm_used: str
    destabilizer: PLConvexFunction | None
    certificate: Certificate | None
    verdict: str

    def to_json(self) -> dict:
        finest = self.estimates[-1] if self.estimates else None
        return {
            "norm": self.norm_used,
            "lambda": [{"N": e.N, "value": format_rational(e.value)} for e in self.estimates],
            "minimizer": [format_rational(v) for v in finest.nodal_values] if finest else [],
            "verdict": self.verdict,
            "destabilizer": self.destabilizer.to_json() if self.destabilizer else None,
            "certificate": None
            if self.certificate is None
            else {"F": format_rational(self.certificate.futaki), "norm": format_rational(self.certificate.norm)},
        }


@dataclass(frozen=True)
class SweepRow:
    """
    param - c_order: position of c in the requested sweep list
          - value: lambda_est, None on error rows
          - destabilizer_ref: file name the destabilizer is written to, "" when there is none
    """
    c: Fraction
    N: int
    value: Fraction | None
    verdict: str
    destabilizer_ref: str = ""
    destabilizer: PLConvexFunction | None = None
    c_order: int = 0


@dataclass(frozen=True)
class SweepSummary:
    rows: tuple[SweepRow, ...]
    sign_changes: tuple[tuple[Fraction, Fraction], ...]
    trend: str

    def to_json(self) -> dict:
        return {
            "rows": [
                {
                    "c": format_rational(r.c),
                    "N": r.N,
                    "lambda": None if r.value is None else format_rational(r.value),
                    "verdict": r.verdict,
                    "destabilizer_ref": r.destabilizer_ref,
                }
                for r in self.rows
            ],
            "sign_changes": [[format_rational(a), format_rational(b)] for a, b in self.sign_changes],
            "trend": self.trend,
        }


@dataclass(frozen=True)
class PolytopeProblem:
    """
    A bare polytope problem: density v and weight w on a labeled polytope.
    """
    polytope: LabeledPolytope
    v: Polynomial
    w: WeightExpr
