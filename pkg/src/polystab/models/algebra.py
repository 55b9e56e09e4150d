"""~/models/
exact algebra primitives shared by every service

    to_rational / format_rational: parse and print rationals as "p/q" strings
    AffineFunction: <a, x> + c with rational data (labels L_i, twists xi, extremal functions)
    Polynomial: sparse multivariate polynomial with rational coefficients
    PLConvexFunction: max of finitely many affine pieces (test-configuration currency)
    det / solve / rank: exact Gaussian elimination over Fractions
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from polystab.errors import DimensionMismatch, EmptyPieceList, PoleNotCancelled, PolystabError

Exponent = tuple[int, ...]
Point = tuple[Fraction, ...]


def to_rational(value) -> Fraction:
    """
    Coerce user data into an exact Fraction.
    Floats go through their shortest repr so that 1.1 becomes 11/10 rather than a binary expansion.

    param - value: int, Fraction, float or string such as "3/4", "-2", "1.1"
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise PolystabError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise PolystabError(f"not a rational: {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise PolystabError(f"not a rational: {value!r}") from exc
    raise PolystabError(f"not a rational: {value!r}")


def format_rational(value) -> str:
    q = to_rational(value)
    return f"{q.numerator}/{q.denominator}"


def to_point(coords: Iterable) -> Point:
    return tuple(to_rational(c) for c in coords)


##########
#               exact linear algebra
##########

def _echelon(rows: Sequence[Sequence[Fraction]]) -> tuple[list[list[Fraction]], list[int], int]:
    """
    Row-reduce a copy of rows. Returns (reduced rows, pivot columns, sign of the row permutation).
    """
    m = [[to_rational(a) for a in row] for row in rows]
    pivots: list[int] = []
    sign = 1
    r = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        pivot = next((i for i in range(r, len(m)) if m[i][col] != 0), None)
        if pivot is None:
            continue
        if pivot != r:
            m[r], m[pivot] = m[pivot], m[r]
            sign = -sign
        for i in range(r + 1, len(m)):
            if m[i][col] != 0:
                factor = m[i][col] / m[r][col]
                m[i] = [a - factor * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
        if r == len(m):
            break
    return m, pivots, sign


def det(rows: Sequence[Sequence]) -> Fraction:
    n = len(rows)
    if n == 0:
        return Fraction(1)
    if any(len(row) != n for row in rows):
        raise DimensionMismatch("determinant of a non-square matrix")
    m, pivots, sign = _echelon(rows)
    if len(pivots) < n:
        return Fraction(0)
    out = Fraction(sign)
    for i in range(n):
        out *= m[i][i]
    return out


def rank(rows: Sequence[Sequence]) -> int:
    if not rows:
        return 0
    return len(_echelon(rows)[1])


def solve(rows: Sequence[Sequence], rhs: Sequence) -> list[Fraction] | None:
    """
    Solve the square system rows . x = rhs exactly; None when the matrix is singular.
    """
    n = len(rows)
    aug = [list(row) + [rhs[i]] for i, row in enumerate(rows)]
    m, pivots, _ = _echelon(aug)
    if len(pivots) < n or pivots[n - 1] >= n:
        return None
    x = [Fraction(0)] * n
    for i in range(n - 1, -1, -1):
        acc = m[i][n] - sum(m[i][j] * x[j] for j in range(i + 1, n))
        x[i] = acc / m[i][i]
    return x


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


def denominators_lcm(values: Iterable[Fraction]) -> int:
    return reduce(_lcm, (to_rational(v).denominator for v in values), 1)


##########
#               affine functions
##########

@dataclass(frozen=True)
class AffineFunction:
    """
    Affine function <linear, x> + constant on Q^dim.

    param - linear: coefficient vector (one Rational per coordinate)
          - constant: Rational offset
    """
    linear: tuple[Fraction, ...]
    constant: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "linear", tuple(to_rational(a) for a in self.linear))
        object.__setattr__(self, "constant", to_rational(self.constant))

    @classmethod
    def coordinate(cls, dim: int, k: int) -> AffineFunction:
        return cls(tuple(Fraction(int(i == k)) for i in range(dim)), Fraction(0))

    @classmethod
    def constant_function(cls, dim: int, value) -> AffineFunction:
        return cls((Fraction(0),) * dim, to_rational(value))

    @property
    def dim(self) -> int:
        return len(self.linear)

    def __call__(self, point: Sequence) -> Fraction:
        if len(point) != self.dim:
            raise DimensionMismatch(f"point of dim {len(point)} for affine function of dim {self.dim}")
        return sum((a * to_rational(x) for a, x in zip(self.linear, point)), self.constant)

    def evaluate_float(self, points: np.ndarray) -> np.ndarray:
        lin = np.array([float(a) for a in self.linear])
        return np.asarray(points, dtype=float) @ lin + float(self.constant)

    def _check(self, other: AffineFunction) -> None:
        if other.dim != self.dim:
            raise DimensionMismatch(f"affine functions of dims {self.dim} and {other.dim}")

    def __add__(self, other) -> AffineFunction:
        if isinstance(other, AffineFunction):
            self._check(other)
            return AffineFunction(
                tuple(a + b for a, b in zip(self.linear, other.linear)),
                self.constant + other.constant,
            )
        return AffineFunction(self.linear, self.constant + to_rational(other))

    __radd__ = __add__

    def __neg__(self) -> AffineFunction:
        return AffineFunction(tuple(-a for a in self.linear), -self.constant)

    def __sub__(self, other) -> AffineFunction:
        return self + (-other)

    def __rsub__(self, other) -> AffineFunction:
        return (-self) + other

    def __mul__(self, scalar) -> AffineFunction:
        q = to_rational(scalar)
        return AffineFunction(tuple(q * a for a in self.linear), q * self.constant)

    __rmul__ = __mul__

    def is_constant(self) -> bool:
        return all(a == 0 for a in self.linear)

    def is_integral(self) -> bool:
        return all(a.denominator == 1 for a in self.linear)

    def is_primitive(self) -> bool:
        if not self.is_integral() or self.is_constant():
            return False
        return reduce(math.gcd, (abs(a.numerator) for a in self.linear)) == 1

    def pad(self, total_dim: int) -> AffineFunction:
        """
        Pull back along the projection Q^total_dim -> Q^dim onto the first dim coordinates.
        """
        if total_dim < self.dim:
            raise DimensionMismatch(f"cannot pad dim {self.dim} to {total_dim}")
        return AffineFunction(self.linear + (Fraction(0),) * (total_dim - self.dim), self.constant)

    def to_polynomial(self) -> Polynomial:
        terms: dict[Exponent, Fraction] = {}
        if self.constant:
            terms[(0,) * self.dim] = self.constant
        for k, a in enumerate(self.linear):
            if a:
                terms[tuple(int(i == k) for i in range(self.dim))] = a
        return Polynomial(self.dim, terms)

    def sort_key(self) -> tuple:
        return (self.linear, self.constant)

    def to_json(self) -> dict:
        return {
            "linear": [format_rational(a) for a in self.linear],
            "constant": format_rational(self.constant),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> AffineFunction:
        if "linear" not in data:
            raise PolystabError(f"affine function needs a 'linear' field: {data!r}")
        return cls(tuple(to_rational(a) for a in data["linear"]), to_rational(data.get("constant", 0)))

    def __str__(self) -> str:
        parts = [f"{a}*x{k + 1}" for k, a in enumerate(self.linear) if a]
        if self.constant or not parts:
            parts.append(str(self.constant))
        return " + ".join(parts)


##########
#               polynomials
##########

@dataclass(frozen=True, eq=False)
class Polynomial:
    """
    Sparse polynomial in dim variables.

    param - dim: number of variables
          - terms: multi-exponent -> nonzero Rational coefficient
    """
    dim: int
    terms: Mapping[Exponent, Fraction]

    def __post_init__(self):
        clean: dict[Exponent, Fraction] = {}
        for exp, coef in self.terms.items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.dim or any(e < 0 for e in exp):
                raise DimensionMismatch(f"exponent {exp} does not fit a polynomial of dim {self.dim}")
            c = to_rational(coef)
            if c:
                clean[exp] = clean.get(exp, Fraction(0)) + c
                if not clean[exp]:
                    del clean[exp]
        object.__setattr__(self, "terms", clean)

    @classmethod
    def zero(cls, dim: int) -> Polynomial:
        return cls(dim, {})

    @classmethod
    def constant(cls, dim: int, value) -> Polynomial:
        return cls(dim, {(0,) * dim: to_rational(value)})

    @classmethod
    def coordinate(cls, dim: int, k: int) -> Polynomial:
        return AffineFunction.coordinate(dim, k).to_polynomial()

    @classmethod
    def coerce(cls, value, dim: int) -> Polynomial:
        if isinstance(value, Polynomial):
            if value.dim != dim:
                raise DimensionMismatch(f"polynomial of dim {value.dim} where dim {dim} expected")
            return value
        if isinstance(value, AffineFunction):
            if value.dim != dim:
                raise DimensionMismatch(f"affine function of dim {value.dim} where dim {dim} expected")
            return value.to_polynomial()
        return cls.constant(dim, value)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.dim == other.dim and self.terms == other.terms

    def __hash__(self) -> int:
        return hash((self.dim, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def __add__(self, other) -> Polynomial:
        other = Polynomial.coerce(other, self.dim)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = out.get(exp, Fraction(0)) + c
        return Polynomial(self.dim, out)

    __radd__ = __add__

    def __neg__(self) -> Polynomial:
        return Polynomial(self.dim, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> Polynomial:
        return self + (-Polynomial.coerce(other, self.dim))

    def __rsub__(self, other) -> Polynomial:
        return Polynomial.coerce(other, self.dim) - self

    def __mul__(self, other) -> Polynomial:
        if not isinstance(other, (Polynomial, AffineFunction)):
            q = to_rational(other)
            return Polynomial(self.dim, {e: q * c for e, c in self.terms.items()})
        other = Polynomial.coerce(other, self.dim)
        out: dict[Exponent, Fraction] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return Polynomial(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> Polynomial:
        out = Polynomial.constant(self.dim, 1)
        for _ in range(k):
            out = out * self
        return out

    def __call__(self, point: Sequence) -> Fraction:
        if len(point) != self.dim:
            raise DimensionMismatch(f"point of dim {len(point)} for polynomial of dim {self.dim}")
        x = [to_rational(c) for c in point]
        total = Fraction(0)
        for exp, c in self.terms.items():
            term = c
            for xi, e in zip(x, exp):
                if e:
                    term *= xi ** e
            total += term
        return total

    def evaluate_float(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for exp, c in self.terms.items():
            out += float(c) * np.prod(pts ** np.array(exp, dtype=float), axis=1)
        return out

    def derivative(self, k: int) -> Polynomial:
        out: dict[Exponent, Fraction] = {}
        for exp, c in self.terms.items():
            if exp[k]:
                e = list(exp)
                e[k] -= 1
                out[tuple(e)] = c * exp[k]
        return Polynomial(self.dim, out)

    def compose(self, images: Sequence[Polynomial]) -> Polynomial:
        """
        Substitute x_i -> images[i]; the result lives in the images' variable space.
        """
        if len(images) != self.dim:
            raise DimensionMismatch(f"{len(images)} images for a polynomial of dim {self.dim}")
        if not images:
            return self
        new_dim = images[0].dim
        powers: list[list[Polynomial]] = [[Polynomial.constant(new_dim, 1)] for _ in images]
        out = Polynomial.zero(new_dim)
        for exp, c in sorted(self.terms.items()):
            term = Polynomial.constant(new_dim, c)
            for i, e in enumerate(exp):
                while len(powers[i]) <= e:
                    powers[i].append(powers[i][-1] * images[i])
                if e:
                    term = term * powers[i][e]
            out = out + term
        return out

    def compose_affine(self, maps: Sequence[AffineFunction]) -> Polynomial:
        return self.compose([m.to_polynomial() for m in maps])

    def embed(self, total_dim: int, positions: Sequence[int] | None = None) -> Polynomial:
        """
        View this polynomial as one in total_dim variables, variable i going to positions[i].
        """
        positions = list(range(self.dim)) if positions is None else list(positions)
        out: dict[Exponent, Fraction] = {}
        for exp, c in self.terms.items():
            e = [0] * total_dim
            for i, p in enumerate(positions):
                e[p] = exp[i]
            out[tuple(e)] = c
        return Polynomial(total_dim, out)

    def uses_only(self, count: int) -> bool:
        """
        True when only the first count variables appear.
        """
        return all(not any(exp[count:]) for exp in self.terms)

    def truncate(self, count: int) -> Polynomial:
        if not self.uses_only(count):
            raise DimensionMismatch("polynomial depends on dropped variables")
        return Polynomial(count, {exp[:count]: c for exp, c in self.terms.items()})

    def divide_by_affine(self, label: AffineFunction) -> Polynomial:
        """
        Exact quotient self / label. Raises PoleNotCancelled when label does not divide self.
        """
        if label.dim != self.dim:
            raise DimensionMismatch("divisor dimension does not match")
        if label.is_constant():
            if label.constant == 0:
                raise PoleNotCancelled("division by the zero function")
            return self * (1 / label.constant)
        k = next(i for i, a in enumerate(label.linear) if a)
        lead = label.linear[k]
        rest = dict(self.terms)
        quotient: dict[Exponent, Fraction] = {}
        while True:
            top = max((exp[k] for exp in rest), default=0)
            if top == 0:
                break
            for exp in [e for e in rest if e[k] == top]:
                c = rest.pop(exp) / lead
                q_exp = exp[:k] + (exp[k] - 1,) + exp[k + 1:]
                quotient[q_exp] = quotient.get(q_exp, Fraction(0)) + c
                for i, a in enumerate(label.linear):
                    if a and i != k:
                        e = list(q_exp)
                        e[i] += 1
                        rest[tuple(e)] = rest.get(tuple(e), Fraction(0)) - c * a
                if label.constant:
                    rest[q_exp] = rest.get(q_exp, Fraction(0)) - c * label.constant
            rest = {e: c for e, c in rest.items() if c}
        if rest:
            raise PoleNotCancelled(f"{label} does not divide the polynomial")
        return Polynomial(self.dim, quotient)

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "terms": [{"exp": list(exp), "coef": format_rational(c)} for exp, c in sorted(self.terms.items())],
        }

    @classmethod
    def from_json(cls, data: Mapping, dim: int | None = None) -> Polynomial:
        terms = data.get("terms")
        if terms is None:
            raise PolystabError(f"polynomial needs a 'terms' field: {data!r}")
        dim = data.get("dim", dim)
        if dim is None:
            if not terms:
                raise PolystabError("cannot infer the dimension of an empty polynomial")
            dim = len(terms[0]["exp"])
        out: dict[Exponent, Fraction] = {}
        for t in terms:
            exp = tuple(int(e) for e in t["exp"])
            out[exp] = out.get(exp, Fraction(0)) + to_rational(t["coef"])
        return cls(int(dim), out)


##########
#               PL convex functions
##########

@dataclass(frozen=True)
class PLConvexFunction:
    """
    f = max of affine pieces. Pruning against a polytope lives in services.donaldson.make_pl.

    param - pieces: nonempty tuple of AffineFunction of a common dimension
    """
    pieces: tuple[AffineFunction, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise EmptyPieceList("a PL function needs at least one piece")
        if len({p.dim for p in pieces}) != 1:
            raise DimensionMismatch("pieces of different dimensions")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def __call__(self, point: Sequence) -> Fraction:
        return max(piece(point) for piece in self.pieces)

    def evaluate_float(self, points: np.ndarray) -> np.ndarray:
        return np.max(np.stack([p.evaluate_float(points) for p in self.pieces]), axis=0)

    def active_indices(self, point: Sequence) -> list[int]:
        values = [piece(point) for piece in self.pieces]
        top = max(values)
        return [i for i, v in enumerate(values) if v == top]

    def piece_at(self, point: Sequence) -> AffineFunction:
        return self.pieces[self.active_indices(point)[0]]

    @cached_property
    def creases(self) -> tuple[AffineFunction, ...]:
        """
        Pairwise differences of pieces, sign-normalised and deduplicated.
        Differences with zero linear part never cross the domain and are dropped.
        """
        seen: dict[tuple, AffineFunction] = {}
        for i, a in enumerate(self.pieces):
            for b in self.pieces[i + 1:]:
                h = a - b
                if h.is_constant():
                    continue
                lead = next(c for c in h.linear if c)
                h = h * (1 / abs(lead))
                if lead < 0:
                    h = -h
                seen.setdefault(h.sort_key(), h)
        return tuple(seen[k] for k in sorted(seen))

    def is_affine(self) -> bool:
        return len(self.pieces) == 1

    def __add__(self, xi) -> PLConvexFunction:
        return PLConvexFunction(tuple(p + xi for p in self.pieces))

    def scale(self, factor) -> PLConvexFunction:
        q = to_rational(factor)
        if q <= 0:
            raise PolystabError("PL functions scale by positive rationals only")
        return PLConvexFunction(tuple(p * q for p in self.pieces))

    def pad(self, total_dim: int) -> PLConvexFunction:
        return PLConvexFunction(tuple(p.pad(total_dim) for p in self.pieces))

    def to_json(self) -> dict:
        return {"pieces": [p.to_json() for p in self.pieces]}

    @classmethod
    def from_json(cls, data: Mapping) -> PLConvexFunction:
        if "pieces" not in data:
            raise PolystabError(f"PL function needs a 'pieces' field: {data!r}")
        return cls(tuple(AffineFunction.from_json(p) for p in data["pieces"]))

    @classmethod
    def of(cls, f) -> PLConvexFunction:
        if isinstance(f, PLConvexFunction):
            return f
        if isinstance(f, AffineFunction):
            return cls((f,))
        raise PolystabError(f"expected a PL convex function, got {type(f).__name__}")
