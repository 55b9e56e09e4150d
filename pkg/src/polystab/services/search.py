"""~/services/
grid search for the uniform stability constant

    build_grid: principal lattice of a simplex with its Kuhn triangulation
    estimate_lambda: min F over grid-PL convex functions with f >= 0 = f(x0) and int f v = 1
    extract_destabilizer: the PL convex function behind a nodal solution
    verify_certificate: exact re-evaluation of F and the norm outside the LP
    run_stability / sweep: reports over resolutions and over the Kaehler parameter c

lambda_est is an upper bound for the constant over all convex functions: a value <= 0 is a
destabilizer, a positive value is evidence reported with its trend in N.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from itertools import permutations, product
from typing import Sequence

from polystab.errors import EnvelopeDegenerate, LPInfeasible, NotConvex, PolystabError
from polystab.models.algebra import AffineFunction, PLConvexFunction, Point, Polynomial, solve, to_rational
from polystab.models.domain import (
    BundleSpec,
    Certificate,
    ConvexGrid,
    LambdaEstimate,
    StabilityReport,
    SweepRow,
    SweepSummary,
    WeightExpr,
)
from polystab.models.polytope import LabeledPolytope
from polystab.services.donaldson import make_pl
from polystab.services.fibration import bundle_problem
from polystab.services.functionals import futaki, j_norm, l1_norm, normalize_star
from polystab.services.integration import boundary_chart, facet_vertex_moments, simplex_vertex_moments
from polystab.services.lp import EXACT_ROW_LIMIT, LinearProgram, solve_lp

logger = logging.getLogger(__name__)

NORMS = ("l1", "j")


##########
#               grid
##########

def build_grid(P: LabeledPolytope, N: int) -> ConvexGrid:
    """
    Nodes V_0 + sum_k z_k / N (V_{k+1} - V_k) for integers N >= z_1 >= ... >= z_l >= 0; cells are
    the Freudenthal simplices of [0, N]^l lying in that ordered region.
    """
    if N < 2:
        raise PolystabError(f"grid resolution must be at least 2, got {N}")
    if not P.is_simplex:
        raise PolystabError("the grid search runs on simplices")
    ell = P.dim
    V = P.vertices

    def to_x(z: Sequence[int]) -> Point:
        return tuple(
            V[0][c] + sum((Fraction(z[k], N) * (V[k + 1][c] - V[k][c]) for k in range(ell)), Fraction(0))
            for c in range(ell)
        )

    zs = [z for z in product(range(N + 1), repeat=ell) if all(z[k] >= z[k + 1] for k in range(ell - 1))]
    points = {z: to_x(z) for z in zs}
    order = sorted(zs, key=lambda z: points[z])
    index = {z: i for i, z in enumerate(order)}
    nodes = tuple(points[z] for z in order)

    simplices = []
    bound = N * (ell + 1)
    for corner in product(range(N), repeat=ell):
        for perm in permutations(range(ell)):
            path = [tuple(corner)]
            for k in perm:
                step = list(path[-1])
                step[k] += 1
                path.append(tuple(step))
            sums = [sum(z[k] for z in path) for k in range(ell)]
            if bound > sums[0] and all(sums[k] > sums[k + 1] for k in range(ell - 1)) and sums[-1] > 0:
                simplices.append(tuple(sorted(index[z] for z in path)))
    simplices.sort()

    facets: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for s, cell in enumerate(simplices):
        for opposite in cell:
            face = tuple(i for i in cell if i != opposite)
            facets.setdefault(face, []).append((s, opposite))
    interior, boundary = [], []
    for face, owners in sorted(facets.items()):
        if len(owners) == 2:
            (a, oa), (b, ob) = owners
            interior.append((a, oa, b, ob))
            continue
        label = next(i for i, L in enumerate(P.labels) if all(L(nodes[n]) == 0 for n in face))
        boundary.append((label, face))
    logger.debug("grid N=%d: %d nodes, %d cells, %d interior facets", N, len(nodes), len(simplices), len(interior))
    return ConvexGrid(P, N, nodes, tuple(simplices), tuple(interior), tuple(boundary))


def base_node(grid: ConvexGrid, point: Sequence | None = None) -> int:
    """
    Interior node nearest to point (default: the centroid), ties broken lexicographically.
    """
    P = grid.polytope
    target = P.centroid() if point is None else tuple(to_rational(c) for c in point)
    candidates = [i for i, x in enumerate(grid.nodes) if P.interior_contains(x)]
    if not candidates:
        raise PolystabError(f"the N={grid.N} grid has no interior node; use N > {P.dim}")
    return min(candidates, key=lambda i: (sum((a - b) ** 2 for a, b in zip(grid.nodes[i], target)), grid.nodes[i]))


def _cell_points(grid: ConvexGrid, cell: Sequence[int]) -> list[Point]:
    return [grid.nodes[i] for i in cell]


def nodal_functionals(grid: ConvexGrid, v: Polynomial, wv: Polynomial) -> tuple[list[Fraction], list[Fraction]]:
    """
    (F coefficient, int phi_s v) per node, phi_s the hat function of node s.
    """
    P = grid.polytope
    n = len(grid.nodes)
    fut = [Fraction(0)] * n
    mass = [Fraction(0)] * n
    for cell in grid.simplices:
        pts = _cell_points(grid, cell)
        for s, m in zip(cell, simplex_vertex_moments(pts, wv)):
            fut[s] -= m
        for s, m in zip(cell, simplex_vertex_moments(pts, v)):
            mass[s] += m
    charts = {}
    for label, face in grid.boundary_facets:
        if label not in charts:
            charts[label] = boundary_chart(P, label)
        for s, m in zip(face, facet_vertex_moments(_cell_points(grid, face), charts[label].transversal, v)):
            fut[s] += 2 * m
    return fut, mass


def _convexity_rows(grid: ConvexGrid) -> list[list[Fraction]]:
    """
    One row per interior facet: (cell a's interpolant at b's opposite node) - f(that node) <= 0.
    """
    ell = grid.polytope.dim
    n = len(grid.nodes)
    rows = []
    for a, _, _, ob in grid.interior_facets:
        cell = grid.simplices[a]
        pts = _cell_points(grid, cell)
        system = [[p[c] for p in pts] for c in range(ell)] + [[Fraction(1)] * len(pts)]
        mu = solve(system, list(grid.nodes[ob]) + [Fraction(1)])
        row = [Fraction(0)] * n
        for s, m in zip(cell, mu):
            row[s] += m
        row[ob] -= 1
        rows.append(row)
    return rows


def _exact_repair(lp: LinearProgram, solution: Sequence[Fraction], x0: int, mass: Sequence[Fraction]):
    """
    Snap a floating solution onto the exact constraints; None when it is not exactly feasible.
    """
    x = [max(Fraction(0), s) for s in solution]
    x[x0] = Fraction(0)
    total = sum((m * s for m, s in zip(mass, x)), Fraction(0))
    if total <= 0:
        return None
    x = [s / total for s in x]
    for coeffs, sense, rhs in lp.rows:
        lhs = sum((a * s for a, s in zip(coeffs, x)), Fraction(0))
        if (sense == "<=" and lhs > rhs) or (sense == ">=" and lhs < rhs) or (sense == "==" and lhs != rhs):
            return None
    return x


def estimate_lambda(
    P: LabeledPolytope,
    v,
    w,
    N: int,
    norm: str = "l1",
    base_point: Sequence | None = None,
    exact_limit: int = EXACT_ROW_LIMIT,
) -> LambdaEstimate:
    """
    min F_{v,w}(f) over convex grid functions with f >= 0, f(x0) = 0 and int f v = 1.

    param - norm: "l1" reports the minimum itself; "j" reports F(g*) / J(g*) at the same minimiser
          - base_point: x0 is the interior node nearest to it (default: the centroid)
    """
    if norm not in NORMS:
        raise PolystabError(f"unknown norm {norm!r}; expected one of {NORMS}")
    v = Polynomial.coerce(v, P.dim)
    wv = WeightExpr.of(w, P.dim).times(v)
    grid = build_grid(P, N)
    x0 = base_node(grid, base_point)
    fut, mass = nodal_functionals(grid, v, wv)

    n = len(grid.nodes)
    lp = LinearProgram(n, fut)
    for row in _convexity_rows(grid):
        lp.add(row, "<=", 0)
    lp.add([Fraction(int(i == x0)) for i in range(n)], "==", 0)
    lp.add(mass, "==", 1)
    res = solve_lp(lp, exact_limit)
    if res.status == "infeasible":
        raise LPInfeasible(f"no normalised convex grid function at N={N}")
    if res.status != "optimal":
        raise PolystabError(f"grid LP ended with status {res.status}")
    values = list(res.solution)
    if not res.exact:
        repaired = _exact_repair(lp, values, x0, mass)
        if repaired is None:
            logger.info("N=%d: floating solution is not exactly feasible, re-solving exactly", N)
            res = solve_lp(lp, exact_limit=len(lp.rows))
            values = list(res.solution)
        else:
            values = repaired
    value = sum((c * s for c, s in zip(fut, values)), Fraction(0))
    if norm == "j":
        g = extract_destabilizer(values, grid)
        value = value / j_norm(P, v, g)
    logger.info("N=%d: lambda_est = %s (%s)", N, value, norm)
    return LambdaEstimate(N, value, tuple(values), x0, norm)


def extract_destabilizer(nodal_values: Sequence, grid: ConvexGrid) -> PLConvexFunction:
    """
    Affine interpolants of the cells, deduplicated; their max equals the grid function iff it is
    convex.
    """
    values = [to_rational(s) for s in nodal_values]
    ell = grid.polytope.dim
    pieces: dict[tuple, AffineFunction] = {}
    for cell in grid.simplices:
        pts = _cell_points(grid, cell)
        system = [list(p) + [Fraction(1)] for p in pts]
        coeffs = solve(system, [values[i] for i in cell])
        piece = AffineFunction(tuple(coeffs[:ell]), coeffs[ell])
        pieces.setdefault(piece.sort_key(), piece)
    for i, x in enumerate(grid.nodes):
        top = max(p(x) for p in pieces.values())
        if top > values[i]:
            raise NotConvex(f"the grid function is not convex at node {i}")
    f = make_pl(list(pieces.values()), grid.polytope)
    if f.is_affine():
        raise EnvelopeDegenerate("the grid function is affine")
    return f


def verify_certificate(P: LabeledPolytope, v, w, f, base_point: Sequence | None = None, norm: str = "l1") -> Certificate:
    """
    F_{v,w}(f) and the norm of f, both exact and independent of the grid LP.
    """
    f = PLConvexFunction.of(f)
    x0 = P.centroid() if base_point is None else base_point
    value = futaki(P, v, w, f)
    if norm == "j":
        size = j_norm(P, v, f)
    else:
        size = l1_norm(P, v, normalize_star(f, x0, P).f_star)
    return Certificate(f, value, size)


def run_stability(P: LabeledPolytope, v, w, N_list: Sequence[int], norm: str = "l1") -> StabilityReport:
    """
    estimate_lambda at every N with a common base point (the x0 of the coarsest grid when it is a
    node of every finer grid), then the destabilizer of the smallest non-positive estimate.
    """
    N_list = sorted(set(int(N) for N in N_list))
    if not N_list:
        raise PolystabError("at least one grid resolution is needed")
    coarse = build_grid(P, N_list[0])
    anchor = coarse.nodes[base_node(coarse)]
    estimates = [estimate_lambda(P, v, w, N, norm, base_point=anchor) for N in N_list]

    bad = [e for e in estimates if e.value <= 0]
    destabilizer = certificate = None
    verdict = "no-destabilizer-found"
    if bad:
        worst = min(bad, key=lambda e: (e.value, -e.N))
        grid = build_grid(P, worst.N)
        destabilizer = extract_destabilizer(worst.nodal_values, grid)
        certificate = verify_certificate(P, v, w, destabilizer, grid.nodes[worst.base_node], norm)
        verdict = "destabilized"
        logger.info("destabilized at N=%d: F = %s, norm = %s", worst.N, certificate.futaki, certificate.norm)
    return StabilityReport(tuple(estimates), norm, destabilizer, certificate, verdict)


##########
#               sweep over c
##########

def _sweep_point(task: tuple[int, BundleSpec, tuple[int, ...], str]) -> list[SweepRow]:
    order, spec, N_list, norm = task
    rows = []
    try:
        problem = bundle_problem(spec)
    except PolystabError as exc:
        return [SweepRow(spec.c, N, None, _error_verdict(exc), c_order=order) for N in N_list]
    for N in N_list:
        try:
            est = estimate_lambda(problem.polytope, problem.density, problem.weight, N, norm)
        except PolystabError as exc:
            rows.append(SweepRow(spec.c, N, None, _error_verdict(exc), c_order=order))
            continue
        if est.value > 0:
            rows.append(SweepRow(spec.c, N, est.value, "positive", c_order=order))
            continue
        try:
            f = extract_destabilizer(est.nodal_values, build_grid(problem.polytope, N))
        except PolystabError as exc:
            logger.warning("c=%s N=%d: no destabilizer extracted (%s)", spec.c, N, exc)
            f = None
        ref = f"destabilizer_{order:03d}_N{N}.json" if f is not None else ""
        rows.append(SweepRow(spec.c, N, est.value, "destabilized", ref, f, order))
    return rows


def _error_verdict(exc: Exception) -> str:
    return f"error: {type(exc).__name__}: {exc}"


def _trend(values: Sequence[Fraction]) -> str:
    if len(values) < 2:
        return "n/a"
    steps = [b - a for a, b in zip(values, values[1:])]
    if all(s == 0 for s in steps):
        return "constant"
    if all(s >= 0 for s in steps):
        return "increasing"
    if all(s <= 0 for s in steps):
        return "decreasing"
    return "mixed"


def sweep(
    spec_template: BundleSpec, c_values: Sequence, N_list: Sequence[int], norm: str = "l1", threads: int = 1
) -> SweepSummary:
    """
    bundle_problem + estimate_lambda for every c; failures become error rows and the sweep goes on.
    Sign changes and the trend are read off the finest N.
    """
    N_list = tuple(sorted(set(int(N) for N in N_list)))
    tasks = [(i, spec_template.with_c(c), N_list, norm) for i, c in enumerate(c_values)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_sweep_point, tasks))
    else:
        chunks = []
        for task in tasks:
            logger.info("sweep point c=%s", task[1].c)
            chunks.append(_sweep_point(task))
    rows = tuple(r for chunk in chunks for r in chunk)

    finest = [r for r in rows if r.N == N_list[-1] and r.value is not None]
    changes = tuple(
        (a.c, b.c) for a, b in zip(finest, finest[1:]) if (a.value > 0) != (b.value > 0)
    )
    return SweepSummary(rows, changes, _trend([r.value for r in finest]))
