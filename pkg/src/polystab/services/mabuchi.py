"""~/services/
symplectic potentials u = u0 + phi and weighted Mabuchi energies

    guillemin_hessian / potential_hessian / potential_values: closed-form kernels on point arrays
    check_convex: Cholesky test of Hess u on seeded interior samples
    boundary_condition_probe: det Hess(u) * prod L_i along the inward normal of a facet
    guillemin_integrals: 1/2 sum_i int L_i log L_i q, exact on barycentric simplices
    entropy / linear_term / mabuchi_energy: the two halves of M_{v,w}(u)
    compatible_lift_check: Hessian-determinant identity and constant Mabuchi offset on Delta-hat
    coercivity_probe: (||u*||, M(u)) samples with a least-squares slope
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import xlogy

from polystab.errors import FDInstability, NotConvex
from polystab.models.algebra import Point, Polynomial
from polystab.models.domain import FiberModel, MabuchiValue, SymplecticPotential, WeightExpr
from polystab.models.polytope import LabeledPolytope, simplex_volume, triangulate_with_creases
from polystab.services.fibration import pullback
from polystab.services.functionals import futaki
from polystab.services.integration import (
    barycentric_pullback,
    boundary_chart,
    dirichlet_moment,
    facet_jacobian,
    integrate_polynomial,
    moment_sum,
    quad_adaptive,
    simplex_jacobian,
)
from polystab.services.weights import fiber_weights

logger = logging.getLogger(__name__)


##########
#               pointwise kernels
##########

def _label_arrays(P: LabeledPolytope) -> tuple[np.ndarray, np.ndarray]:
    normals = np.array([[float(a) for a in L.linear] for L in P.labels])
    constants = np.array([float(L.constant) for L in P.labels])
    return normals, constants


def label_values(P: LabeledPolytope, points: np.ndarray) -> np.ndarray:
    normals, constants = _label_arrays(P)
    return np.atleast_2d(np.asarray(points, dtype=float)) @ normals.T + constants


def guillemin_hessian(P: LabeledPolytope, points: np.ndarray) -> np.ndarray:
    """
    Hess u0 = 1/2 sum_i p_i p_i^T / L_i, stacked over the rows of points.
    """
    normals, _ = _label_arrays(P)
    inv = 1.0 / label_values(P, points)
    return 0.5 * np.einsum("ki,ia,ib->kab", inv, normals, normals)


@lru_cache(maxsize=64)
def _second_derivatives(phi: Polynomial) -> tuple[tuple[Polynomial, ...], ...]:
    return tuple(
        tuple(phi.derivative(a).derivative(b) for b in range(phi.dim)) for a in range(phi.dim)
    )


def _phi_hessian(phi: Polynomial, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    second = _second_derivatives(phi)
    out = np.empty((pts.shape[0], phi.dim, phi.dim))
    for a in range(phi.dim):
        for b in range(phi.dim):
            out[:, a, b] = second[a][b].evaluate_float(pts)
    return out


def potential_hessian(u: SymplecticPotential, points: np.ndarray) -> np.ndarray:
    return guillemin_hessian(u.polytope, points) + _phi_hessian(u.phi, points)


def potential_values(u: SymplecticPotential, points: np.ndarray) -> np.ndarray:
    L = label_values(u.polytope, points)
    return 0.5 * xlogy(L, L).sum(axis=1) + u.phi.evaluate_float(points)


def potential_gradient(u: SymplecticPotential, points: np.ndarray) -> np.ndarray:
    normals, _ = _label_arrays(u.polytope)
    L = label_values(u.polytope, points)
    grad = 0.5 * (np.log(L) + 1.0) @ normals
    for k in range(u.phi.dim):
        grad[:, k] += u.phi.derivative(k).evaluate_float(points)
    return grad


def sample_interior(P: LabeledPolytope, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    count points of P, uniform over a triangulation (simplex by volume, then Dirichlet(1) weights).
    """
    simplices = triangulate_with_creases(P).simplices
    volumes = np.array([float(simplex_volume(s)) for s in simplices])
    picks = rng.choice(len(simplices), size=count, p=volumes / volumes.sum())
    weights = rng.dirichlet(np.ones(P.dim + 1), size=count)
    verts = [np.array(simplices[i], dtype=float) for i in picks]
    return np.array([w @ v for w, v in zip(weights, verts)])


def check_convex(u: SymplecticPotential, samples: int = 64, seed: int = 0) -> bool:
    rng = np.random.default_rng(seed)
    pts = sample_interior(u.polytope, samples, rng)
    H = potential_hessian(u, pts)
    eig = np.linalg.eigvalsh(H)
    bad = np.nonzero(eig[:, 0] <= 0)[0]
    if bad.size:
        raise NotConvex(f"Hess u is not positive definite at {pts[bad[0]].tolist()}")
    return True


def boundary_condition_probe(u: SymplecticPotential, facet: int, ks: Sequence[int] = (2, 3, 4, 5, 6)) -> list[tuple[int, float]]:
    """
    det Hess(u) * prod_i L_i at the points with L_facet = 10^-k on the inward normal through the
    facet's vertex centroid. A finite positive limit is the expected boundary behaviour.
    """
    P = u.polytope
    verts = np.array(P.facet_vertices(facet), dtype=float)
    center = verts.mean(axis=0)
    normal = np.array([float(a) for a in P.labels[facet].linear])
    out = []
    for k in ks:
        x = center + 10.0 ** (-k) * normal / float(normal @ normal)
        pts = x[None, :]
        value = np.linalg.det(potential_hessian(u, pts))[0] * np.prod(label_values(P, pts))
        out.append((int(k), float(value)))
    return out


##########
#               exact Guillemin integrals
##########

@lru_cache(maxsize=None)
def _harmonic(k: int) -> Fraction:
    return sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))


def _xlogx_moment(qb: Polynomial, a: int) -> Fraction:
    """
    int lambda_a log(lambda_a) q / (m! vol): sum_beta c_beta D(beta + e_a) (H_{beta_a + 1} - H_{m + |beta| + 1}).
    """
    m = qb.dim - 1
    total = Fraction(0)
    for exp, c in qb.terms.items():
        bumped = exp[:a] + (exp[a] + 1,) + exp[a + 1:]
        moment = dirichlet_moment(bumped)
        total += c * moment * (_harmonic(bumped[a]) - _harmonic(m + sum(bumped)))
    return total


def _guillemin_on_simplex(P: LabeledPolytope, verts: Sequence[Point], jac: Fraction, q: Polynomial):
    """
    (exact part, float part) of 1/2 sum_i int L_i log L_i q over one simplex, or None when some
    label is not a multiple of a barycentric coordinate there.
    """
    qb = barycentric_pullback(q, verts)
    exact = Fraction(0)
    extra = 0.0
    for L in P.labels:
        values = [L(v) for v in verts]
        nonzero = [a for a, x in enumerate(values) if x != 0]
        if not nonzero:
            continue
        if len(nonzero) > 1:
            return None
        a = nonzero[0]
        h = values[a]
        exact += h * jac * _xlogx_moment(qb, a) / 2
        if h != 1:
            extra += float(h) * math.log(h) * float(jac * moment_sum(qb, bump=a)) / 2
    return exact, extra


def guillemin_integrals(P: LabeledPolytope, q, region: str = "interior", rel_tol: float = 1e-12) -> Fraction | float:
    """
    1/2 sum_i int L_i log L_i q over P (dx) or its boundary (dsigma).
    Exact (a Fraction) when every label is a barycentric coordinate on every simplex of the
    subdivision; a float otherwise.
    """
    q = Polynomial.coerce(q, P.dim)
    sub = triangulate_with_creases(P)
    exact, extra = Fraction(0), 0.0
    pieces = []
    if region == "interior":
        for s in sub.simplices:
            jac = simplex_jacobian(s)
            pieces.append(_guillemin_on_simplex(P, s, jac, q))
    elif region == "boundary":
        charts = {}
        for i, face, _ in sub.boundary_faces(P):
            if i not in charts:
                charts[i] = boundary_chart(P, i)
            pieces.append(_guillemin_on_simplex(P, face, facet_jacobian(face, charts[i].transversal), q))
    else:
        raise ValueError(f"region must be 'interior' or 'boundary', not {region!r}")

    if any(p is None for p in pieces):
        logger.info("guillemin_integrals: labels are not barycentric, integrating numerically")

        def integrand(points):
            L = label_values(P, points)
            return 0.5 * xlogy(L, L).sum(axis=1) * q.evaluate_float(points)

        return quad_adaptive(P, integrand, rel_tol, region).require()
    for e, x in pieces:
        exact += e
        extra += x
    return exact if extra == 0.0 else float(exact) + extra


##########
#               Mabuchi energy
##########

def _log_det_ratio(u: SymplecticPotential, points: np.ndarray) -> np.ndarray:
    """
    log det(I + C^-1 Hess(phi) C^-T) with C C^T = Hess u0, i.e. log det(Hess u Hess u0^-1).
    """
    H0 = guillemin_hessian(u.polytope, points)
    C = np.linalg.cholesky(H0)
    A = np.linalg.solve(C, _phi_hessian(u.phi, points))
    M = np.linalg.solve(C, np.swapaxes(A, 1, 2))
    sign, logdet = np.linalg.slogdet(np.eye(u.polytope.dim) + M)
    if np.any(sign <= 0):
        bad = np.atleast_2d(points)[np.nonzero(sign <= 0)[0][0]]
        raise NotConvex(f"Hess u is not positive definite at {bad.tolist()}")
    return logdet


def entropy(u: SymplecticPotential, density, rel_tol: float = 1e-8) -> tuple[float, float]:
    """
    -int log det(Hess u Hess u0^-1) density dx as (value, error). Exactly 0 when Hess phi vanishes.
    """
    if u.phi.degree < 2:
        return 0.0, 0.0
    density = Polynomial.coerce(density, u.polytope.dim)

    def integrand(points):
        return -_log_det_ratio(u, points) * density.evaluate_float(points)

    res = quad_adaptive(u.polytope, integrand, rel_tol)
    return res.require(), res.error


def linear_term(u: SymplecticPotential, density, weight) -> Fraction | float:
    """
    F_{density, weight}(u) = F(u0) + F(phi); F(u0) goes through guillemin_integrals.
    """
    P = u.polytope
    density = Polynomial.coerce(density, P.dim)
    weighted = WeightExpr.of(weight, P.dim).times(density)
    reference = 2 * guillemin_integrals(P, density, "boundary") - guillemin_integrals(P, weighted)
    return reference + futaki(P, density, weight, u.phi)


def mabuchi_energy(u: SymplecticPotential, density, weight, rel_tol: float = 1e-8) -> MabuchiValue:
    value, error = entropy(u, density, rel_tol)
    return MabuchiValue(value, error, linear_term(u, density, weight))


##########
#               compatible potentials on Delta-hat
##########

def _fiber_part(model: FiberModel, block_potentials: Sequence[SymplecticPotential | None]) -> Callable:
    """
    X -> sum_{d_j >= 2} L_j(x) u_j(xhat^j / L_j(x)).
    """
    ell = model.ell

    def evaluate(X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        x = X[:, :ell]
        out = np.zeros(X.shape[0])
        for b, start, up in zip(model.blocks, model.hat_offsets, block_potentials):
            if start is None:
                continue
            Lj = b.label.evaluate_float(x)
            y = X[:, start:start + b.rank - 1] / Lj[:, None]
            out += Lj * potential_values(up, y)
        return out

    return evaluate


def _default_block_potentials(model: FiberModel) -> list[SymplecticPotential | None]:
    return [None if f is None else SymplecticPotential.guillemin(f) for f in model.base_factors]


def _fd_hessian(func: Callable, X: np.ndarray, h: float) -> np.ndarray:
    n = X.shape[0]
    eye = np.eye(n) * h
    offsets = []
    for a in range(n):
        for b in range(n):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                offsets.append(X + sa * eye[a] + sb * eye[b])
    vals = func(np.array(offsets)).reshape(n, n, 4)
    return (vals[..., 0] - vals[..., 1] - vals[..., 2] + vals[..., 3]) / (4 * h * h)


@dataclass(frozen=True)
class DetSample:
    point: tuple[float, ...]
    finite_difference: float
    closed_form: float

    @property
    def relative_error(self) -> float:
        return abs(self.finite_difference - self.closed_form) / abs(self.closed_form)


@dataclass(frozen=True)
class LiftReport:
    """
    param - det_samples: det Hess(u-hat) by finite differences next to
            det Hess(u) prod det Hess(u_j) / p
          - mabuchi_differences: M^hat(u-hat) - Vol(Delta_B) M(u), one per potential
          - constant_exact: F^hat(u0-hat) - Vol(Delta_B) F(u0)
          - constant_quadrature: F^hat(sum_j L_j u_j) by adaptive quadrature
    Every difference must agree with the others and with constant_quadrature.
    """
    det_samples: tuple[DetSample, ...]
    mabuchi_differences: tuple[float, ...]
    constant_exact: Fraction | float
    constant_quadrature: float
    det_tol: float = 1e-4
    mabuchi_tol: float = 1e-5

    @property
    def passed(self) -> bool:
        det_ok = all(s.relative_error <= self.det_tol for s in self.det_samples)
        diffs = self.mabuchi_differences
        scale = max(1.0, max(abs(d) for d in diffs)) if diffs else 1.0
        spread_ok = not diffs or max(diffs) - min(diffs) <= self.mabuchi_tol * scale
        const_scale = max(1.0, abs(self.constant_quadrature))
        const_ok = abs(float(self.constant_exact) - self.constant_quadrature) <= self.mabuchi_tol * const_scale
        offset_ok = not diffs or abs(self.mean_difference - self.constant_quadrature) <= self.mabuchi_tol * max(
            scale, const_scale
        )
        return det_ok and spread_ok and const_ok and offset_ok

    @property
    def mean_difference(self) -> float | None:
        diffs = self.mabuchi_differences
        return float(np.mean(diffs)) if diffs else None

    def to_json(self) -> dict:
        return {
            "det_samples": [
                {"point": list(s.point), "fd": s.finite_difference, "closed_form": s.closed_form,
                 "relative_error": s.relative_error}
                for s in self.det_samples
            ],
            "mabuchi_differences": list(self.mabuchi_differences),
            "mean_difference": self.mean_difference,
            "constant_exact": str(self.constant_exact),
            "constant_quadrature": self.constant_quadrature,
            "passed": self.passed,
        }


def _default_potentials(dim: int) -> list[Polynomial]:
    square = sum((Polynomial.coordinate(dim, k) ** 2 for k in range(dim)), Polynomial.zero(dim))
    total = sum((Polynomial.coordinate(dim, k) for k in range(dim)), Polynomial.zero(dim))
    return [Polynomial.zero(dim), square * Fraction(1, 10), total ** 2 * Fraction(1, 20) + square * Fraction(1, 20)]


def _det_samples(model, u, block_potentials, sample_count, fd_step, rng) -> list[DetSample]:
    hat = model.hat
    lift_fiber = _fiber_part(model, block_potentials)
    ell = model.ell

    def lifted(X):
        X = np.atleast_2d(X)
        return potential_values(u, X[:, :ell]) + lift_fiber(X)

    centroid = np.array([[float(c) for c in hat.centroid()]])
    points = np.vstack([centroid, sample_interior(hat, max(sample_count - 1, 0), rng)])
    normals, _ = _label_arrays(hat)
    norms = np.linalg.norm(normals, axis=1)
    out = []
    for X in points:
        dist = float(np.min(label_values(hat, X[None, :])[0] / norms))
        h = fd_step * dist
        coarse = np.linalg.det(_fd_hessian(lifted, X, h))
        fine = np.linalg.det(_fd_hessian(lifted, X, h / 2))
        richardson = (4 * fine - coarse) / 3
        if not np.isfinite(richardson) or abs(richardson - fine) > 1e-2 * abs(richardson):
            raise FDInstability(f"finite differences did not settle at {X.tolist()} (h = {h:.3e})")
        x = X[None, :ell]
        closed = np.linalg.det(potential_hessian(u, x))[0]
        for b, start, up in zip(model.blocks, model.hat_offsets, block_potentials):
            if start is None:
                continue
            y = X[None, start:start + b.rank - 1] / b.label.evaluate_float(x)[:, None]
            closed *= np.linalg.det(potential_hessian(up, y))[0]
        closed /= model.p.evaluate_float(x)[0]
        out.append(DetSample(tuple(float(c) for c in X), float(richardson), float(closed)))
    return out


def compatible_lift_check(
    u: SymplecticPotential,
    model: FiberModel,
    block_potentials: Sequence[SymplecticPotential | None] | None = None,
    sample_count: int = 8,
    fd_step: float = 1e-3,
    seed: int = 0,
    v=1,
    w=0,
    potentials: Sequence[Polynomial] | None = None,
    rel_tol: float = 1e-9,
) -> LiftReport:
    """
    u-hat(x, xhat) = u(x) + sum_{d_j >= 2} L_j(x) u_j(xhat^j / L_j(x)) on Delta-hat.

    param - block_potentials: one potential per block on Delta_j (None for d_j = 1); default Guillemin
          - potentials: phi's on Delta for the Mabuchi offset check (at least three); u-hat is then
            Guillemin(Delta-hat) + pi* phi
          - v, w: polynomials on Delta; w-hat = w - sum 2 d_j (d_j - 1) / L_j on the Delta side
    """
    block_potentials = list(block_potentials) if block_potentials is not None else _default_block_potentials(model)
    rng = np.random.default_rng(seed)
    samples = _det_samples(model, u, block_potentials, sample_count, fd_step, rng)

    base, hat, vol_B = model.base, model.hat, model.vol_B
    v_base = Polynomial.coerce(v, base.dim)
    w_base = Polynomial.coerce(w, base.dim)
    pv = model.p * v_base
    _, template = fiber_weights([b.rank for b in model.blocks], base)
    w_fibre = template.fill_slot(w_base)
    v_hat, w_hat = pullback(model, v_base), pullback(model, w_base)

    diffs = []
    for phi in potentials or _default_potentials(base.dim):
        on_base = mabuchi_energy(SymplecticPotential(base, phi), pv, w_fibre, rel_tol)
        on_hat = mabuchi_energy(SymplecticPotential(hat, phi.embed(hat.dim)), v_hat, w_hat, rel_tol)
        diffs.append(on_hat.total - float(vol_B) * on_base.total)
        logger.debug("mabuchi offset for %s: %.12g", phi.to_json(), diffs[-1])

    exact = linear_term(SymplecticPotential.guillemin(hat), v_hat, w_hat) - vol_B * linear_term(
        SymplecticPotential.guillemin(base), pv, w_fibre
    )
    g = _fiber_part(model, _default_block_potentials(model))
    wv = w_hat * v_hat
    boundary = quad_adaptive(hat, lambda X: g(X) * v_hat.evaluate_float(X), rel_tol, "boundary").require()
    interior = quad_adaptive(hat, lambda X: g(X) * wv.evaluate_float(X), rel_tol).require()
    return LiftReport(tuple(samples), tuple(diffs), exact, 2 * boundary - interior)


##########
#               coercivity
##########

@dataclass(frozen=True)
class CoercivityReport:
    samples: tuple[tuple[float, float], ...]
    slope: float | None
    intercept: float | None


def coercivity_probe(P: LabeledPolytope, potentials: Sequence[Polynomial], density, weight, rel_tol: float = 1e-8) -> CoercivityReport:
    """
    (int u* density, M(u)) for u = u0 + phi, u* = u minus its tangent at the centroid. Reporting only.
    """
    density = Polynomial.coerce(density, P.dim)
    x0 = np.array([[float(c) for c in P.centroid()]])
    mass = float(integrate_polynomial(P, density))
    moments = np.array([float(integrate_polynomial(P, Polynomial.coordinate(P.dim, k) * density)) for k in range(P.dim)])
    samples = []
    for phi in potentials:
        u = SymplecticPotential(P, phi)
        integral = float(guillemin_integrals(P, density)) + float(integrate_polynomial(P, phi * density))
        value0 = float(potential_values(u, x0)[0])
        grad0 = potential_gradient(u, x0)[0]
        tangent = value0 * mass + float(grad0 @ (moments - x0[0] * mass))
        samples.append((integral - tangent, mabuchi_energy(u, density, weight, rel_tol).total))
    slope = intercept = None
    if len(samples) >= 2:
        xs, ys = np.array(samples).T
        slope, intercept = (float(c) for c in np.polyfit(xs, ys, 1))
    return CoercivityReport(tuple(samples), slope, intercept)

