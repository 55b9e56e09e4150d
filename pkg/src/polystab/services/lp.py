"""~/services/
exact rational linear programming

Two-phase tableau simplex over Fractions with Bland's rule, so every LP in the identity path
(interiority, boundedness, J-norms, piece pruning, grid search) is solved exactly.
Programs above EXACT_ROW_LIMIT rows go to scipy's HiGHS and come back flagged exact=False;
callers re-verify such points exactly.

    LinearProgram: minimize c.x subject to rows, x >= 0 except for free variables
    LPResult: status / value / solution / pivot count
    Tableau: the dense tableau with choose_entering / choose_leaving / pivot / solve
    solve_lp: two-phase driver
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from polystab.models.algebra import to_rational

logger = logging.getLogger(__name__)

EXACT_ROW_LIMIT = 2000
SENSES = ("<=", ">=", "==")


@dataclass
class LinearProgram:
    """
    minimize objective . x subject to every row (coeffs . x  sense  rhs).

    param - n_vars: number of decision variables
          - objective: one coefficient per variable
          - rows: list of (coeffs, sense, rhs) with sense in "<=", ">=", "=="
          - free: indices of variables without the x >= 0 bound
    """
    n_vars: int
    objective: list[Fraction] = field(default_factory=list)
    rows: list[tuple[list[Fraction], str, Fraction]] = field(default_factory=list)
    free: set[int] = field(default_factory=set)

    def __post_init__(self):
        if not self.objective:
            self.objective = [Fraction(0)] * self.n_vars
        self.objective = [to_rational(c) for c in self.objective]

    def add(self, coeffs: Sequence, sense: str, rhs) -> None:
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        if len(coeffs) != self.n_vars:
            raise ValueError(f"constraint has {len(coeffs)} coefficients, expected {self.n_vars}")
        self.rows.append(([to_rational(a) for a in coeffs], sense, to_rational(rhs)))

    def maximize(self, objective: Sequence) -> None:
        self.objective = [-to_rational(c) for c in objective]


@dataclass(frozen=True)
class LPResult:
    """
    param - status: "optimal", "infeasible", "unbounded" or "failed" (floating solver only)
          - value: objective value at the solution (in the program's own minimize sense)
          - solution: one Rational per original variable
          - pivots: total simplex pivots over both phases
          - exact: False when the point came from the floating solver
    """
    status: str
    value: Fraction | None
    solution: tuple[Fraction, ...] | None
    pivots: int
    exact: bool = True

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class Tableau:
    """
    Dense simplex tableau. Row layout: [a_1 .. a_N | rhs]; the cost row holds reduced costs.
    """

    def __init__(self, rows: list[list[Fraction]], basis: list[int], blocked: set[int] | None = None):
        self.T = rows
        self.basis = basis
        self.ncols = len(rows[0]) - 1 if rows else 0
        self.cost: list[Fraction] = [Fraction(0)] * (self.ncols + 1)
        self.blocked = blocked or set()
        self.pivots = 0

    def set_objective(self, c: Sequence[Fraction]) -> None:
        """
        Install reduced costs r_j = c_j - c_B . column_j and the objective value in the last slot.
        """
        cost = [Fraction(c[j]) for j in range(self.ncols)] + [Fraction(0)]
        for i, b in enumerate(self.basis):
            cb = c[b]
            if cb:
                row = self.T[i]
                for j in range(self.ncols + 1):
                    if row[j]:
                        cost[j] -= cb * row[j]
        self.cost = cost

    @property
    def value(self) -> Fraction:
        return -self.cost[-1]

    def choose_entering(self) -> int | None:
        # Bland: lowest index with negative reduced cost
        for j in range(self.ncols):
            if j not in self.blocked and self.cost[j] < 0:
                return j
        return None

    def choose_leaving(self, enter: int) -> int | None:
        best: tuple[Fraction, int, int] | None = None
        for i, row in enumerate(self.T):
            a = row[enter]
            if a > 0:
                key = (row[-1] / a, self.basis[i], i)
                if best is None or key < best:
                    best = key
        return None if best is None else best[2]

    def pivot(self, row: int, col: int) -> None:
        prow = self.T[row]
        piv = prow[col]
        prow = [a / piv for a in prow]
        self.T[row] = prow
        nz = [j for j, a in enumerate(prow) if a]
        for i, other in enumerate(self.T):
            if i != row and other[col]:
                f = other[col]
                for j in nz:
                    other[j] -= f * prow[j]
        if self.cost[col]:
            f = self.cost[col]
            for j in nz:
                self.cost[j] -= f * prow[j]
        self.basis[row] = col
        self.pivots += 1

    def solve(self) -> str:
        while True:
            enter = self.choose_entering()
            if enter is None:
                return "optimal"
            leave = self.choose_leaving(enter)
            if leave is None:
                return "unbounded"
            self.pivot(leave, enter)


def _standard_form(lp: LinearProgram):
    """
    Split free variables, make every rhs nonnegative, and add slack / surplus / artificial columns.
    Returns (rows, basis, column map, real cost vector, artificial columns).
    """
    columns: list[list[tuple[int, int]]] = []
    ncols = 0
    for j in range(lp.n_vars):
        if j in lp.free:
            columns.append([(ncols, 1), (ncols + 1, -1)])
            ncols += 2
        else:
            columns.append([(ncols, 1)])
            ncols += 1
    structural = ncols

    normalized = []
    for coeffs, sense, rhs in lp.rows:
        if rhs < 0:
            coeffs = [-a for a in coeffs]
            rhs = -rhs
            sense = {"<=": ">=", ">=": "<=", "==": "=="}[sense]
        normalized.append((coeffs, sense, rhs))

    n_slack = sum(1 for _, s, _ in normalized if s != "==")
    n_art = sum(1 for _, s, _ in normalized if s != "<=")
    total = structural + n_slack + n_art
    rows: list[list[Fraction]] = []
    basis: list[int] = []
    artificial: set[int] = set()
    slack_at = structural
    art_at = structural + n_slack
    for coeffs, sense, rhs in normalized:
        row = [Fraction(0)] * (total + 1)
        for j, a in enumerate(coeffs):
            if a:
                for col, sign in columns[j]:
                    row[col] = a * sign
        row[-1] = rhs
        if sense == "<=":
            row[slack_at] = Fraction(1)
            basis.append(slack_at)
            slack_at += 1
        else:
            if sense == ">=":
                row[slack_at] = Fraction(-1)
                slack_at += 1
            row[art_at] = Fraction(1)
            basis.append(art_at)
            artificial.add(art_at)
            art_at += 1
        rows.append(row)

    cost = [Fraction(0)] * total
    for j, c in enumerate(lp.objective):
        for col, sign in columns[j]:
            cost[col] = c * sign
    return rows, basis, columns, cost, artificial


def _solve_exact(lp: LinearProgram) -> LPResult:
    rows, basis, columns, cost, artificial = _standard_form(lp)
    total = len(cost)
    if not rows:
        if any(c < 0 or (c != 0 and j in lp.free) for j, c in enumerate(lp.objective)):
            return LPResult("unbounded", None, None, 0)
        return LPResult("optimal", Fraction(0), (Fraction(0),) * lp.n_vars, 0)

    tab = Tableau(rows, basis)
    if artificial:
        tab.set_objective([Fraction(int(j in artificial)) for j in range(total)])
        tab.solve()
        if tab.value > 0:
            logger.debug("phase 1 ended with infeasibility %s after %d pivots", tab.value, tab.pivots)
            return LPResult("infeasible", None, None, tab.pivots)
        # drive zero-level artificials out of the basis, dropping redundant rows
        i = 0
        while i < len(tab.T):
            if tab.basis[i] in artificial:
                col = next(
                    (j for j in range(total) if j not in artificial and tab.T[i][j] != 0), None
                )
                if col is None:
                    del tab.T[i]
                    del tab.basis[i]
                    continue
                tab.pivot(i, col)
            i += 1
        tab.blocked = set(artificial)

    tab.set_objective(cost)
    status = tab.solve()
    if status == "unbounded":
        return LPResult("unbounded", None, None, tab.pivots)

    values = [Fraction(0)] * total
    for i, b in enumerate(tab.basis):
        values[b] = tab.T[i][-1]
    x = tuple(sum((values[col] * sign for col, sign in columns[j]), Fraction(0)) for j in range(lp.n_vars))
    value = sum((c * xj for c, xj in zip(lp.objective, x)), Fraction(0))
    logger.debug("exact LP: %d rows, %d columns, %d pivots", len(rows), total, tab.pivots)
    return LPResult("optimal", value, x, tab.pivots)


def _solve_float(lp: LinearProgram) -> LPResult:
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for coeffs, sense, rhs in lp.rows:
        row = [float(a) for a in coeffs]
        if sense == "<=":
            a_ub.append(row)
            b_ub.append(float(rhs))
        elif sense == ">=":
            a_ub.append([-a for a in row])
            b_ub.append(-float(rhs))
        else:
            a_eq.append(row)
            b_eq.append(float(rhs))
    bounds = [(None, None) if j in lp.free else (0, None) for j in range(lp.n_vars)]
    res = linprog(
        np.array([float(c) for c in lp.objective]),
        A_ub=np.array(a_ub) if a_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq) if a_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return LPResult("infeasible", None, None, int(res.nit), exact=False)
    if res.status == 3:
        return LPResult("unbounded", None, None, int(res.nit), exact=False)
    if res.status != 0:
        logger.warning("HiGHS stopped with status %d: %s", res.status, res.message)
        return LPResult("failed", None, None, int(res.nit), exact=False)
    x = tuple(Fraction(float(v)).limit_denominator(10**9) for v in res.x)
    value = sum((c * xj for c, xj in zip(lp.objective, x)), Fraction(0))
    return LPResult("optimal", value, x, int(res.nit), exact=False)


def solve_lp(lp: LinearProgram, exact_limit: int = EXACT_ROW_LIMIT) -> LPResult:
    """
    Solve lp. Exact below exact_limit rows; above it the HiGHS point is returned with exact=False.
    """
    if len(lp.rows) > exact_limit:
        logger.info("LP with %d rows exceeds the exact limit; using HiGHS", len(lp.rows))
        return _solve_float(lp)
    return _solve_exact(lp)


def is_feasible(lp: LinearProgram) -> bool:
    feasibility = LinearProgram(lp.n_vars, [Fraction(0)] * lp.n_vars, list(lp.rows), set(lp.free))
    return _solve_exact(feasibility).status != "infeasible"
