"""~/services/

load and validate JSON inputs for the CLI

    InputLoader: abstract staged loader, run() = read -> normalize -> validate -> build
    ProblemLoader: a BundleSpec or a polytope problem {"polytope", "v", "w"}
    PLLoader: a PL convex function {"pieces": [...]}
    PolynomialLoader: a polynomial {"dim", "terms": [...]}
"""
from __future__ import annotations

import json
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from polystab.errors import DimensionMismatch, PolystabError
from polystab.models.algebra import PLConvexFunction, Polynomial, to_rational
from polystab.models.domain import BundleSpec, PolytopeProblem, WeightExpr
from polystab.models.polytope import LabeledPolytope, standard_simplex
from polystab.services.weights import solve_extremal

logger = logging.getLogger(__name__)

EXTREMAL = "extremal"


@dataclass
class InputLoader(ABC):
    """
    JSON input parent class

    attr:     path                   - file to load

              data                   - None until _read() succeeds, then the parsed JSON

    methods:  run()                  - the only entry point; runs every stage in order

              _read()                - parse the file, PolystabError on unreadable or malformed JSON

     abstract _normalize()           - fill defaults and coerce shorthands in place

     abstract _validate()            - raise PolystabError on missing or inconsistent fields

     abstract _build()               - return the domain object
    """
    path: Path
    data: Any = field(default=None, init=False)

    def __post_init__(self):
        self.path = Path(self.path)

    def run(self):
        self._read()
        self._normalize()
        self._validate()
        out = self._build()
        logger.debug("loaded %s from %s", type(out).__name__, self.path)
        return out

    def _read(self):
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise PolystabError(f"{self.path}: cannot read input ({exc.strerror})") from exc
        try:
            self.data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PolystabError(f"{self.path}: not valid JSON ({exc.msg}, line {exc.lineno})") from exc
        if not isinstance(self.data, dict):
            raise PolystabError(f"{self.path}: expected a JSON object at top level")

    def _require(self, *keys: str):
        missing = [k for k in keys if k not in self.data]
        if missing:
            raise PolystabError(f"{self.path}: missing field(s) {', '.join(missing)}")

    @abstractmethod
    def _normalize(self):
        pass

    @abstractmethod
    def _validate(self):
        pass

    @abstractmethod
    def _build(self):
        pass


@dataclass
class ProblemLoader(InputLoader):
    """
    Either a bundle spec ({"genus", "blocks", "c", ...}) or a polytope problem:
    {"polytope": {"labels": [...]} | {"standard_simplex": n}, "v": poly, "w": poly | "extremal"}.
    v defaults to 1 and w to "extremal" (the extremal affine function of v).
    """
    kind: str = field(default="", init=False)

    def _normalize(self):
        if "blocks" in self.data:
            self.kind = "bundle"
            self.data.setdefault("genus", 0)
            return
        self.kind = "polytope"
        self.data.setdefault("v", 1)
        self.data.setdefault("w", EXTREMAL)

    def _validate(self):
        if self.kind == "bundle":
            self._require("blocks", "c")
            if not isinstance(self.data["blocks"], list):
                raise PolystabError(f"{self.path}: 'blocks' must be a list")
            return
        self._require("polytope")
        poly = self.data["polytope"]
        if not isinstance(poly, dict) or not ({"labels", "standard_simplex"} & poly.keys()):
            raise PolystabError(f"{self.path}: 'polytope' needs 'labels' or 'standard_simplex'")

    def _polytope(self) -> LabeledPolytope:
        poly = self.data["polytope"]
        if "standard_simplex" in poly:
            return standard_simplex(int(poly["standard_simplex"]))
        return LabeledPolytope.from_json(poly)

    @staticmethod
    def _polynomial(value, dim: int) -> Polynomial:
        if isinstance(value, dict):
            q = Polynomial.from_json(value, dim)
            if q.dim != dim:
                raise DimensionMismatch(f"polynomial of dim {q.dim} on a polytope of dim {dim}")
            return q
        return Polynomial.constant(dim, to_rational(value))

    def _build(self) -> BundleSpec | PolytopeProblem:
        if self.kind == "bundle":
            return BundleSpec.from_json(self.data)
        P = self._polytope()
        v = self._polynomial(self.data["v"], P.dim)
        w = self.data["w"]
        if w == EXTREMAL:
            ell = solve_extremal(P, v, v, Polynomial.zero(P.dim))
            weight = WeightExpr.of(ell.to_polynomial(), P.dim)
        else:
            weight = WeightExpr.of(self._polynomial(w, P.dim), P.dim)
        return PolytopeProblem(P, v, weight)


@dataclass
class PLLoader(InputLoader):
    dim: int | None = None

    def _normalize(self):
        # a single affine piece is accepted
        if "pieces" not in self.data and "linear" in self.data:
            self.data = {"pieces": [self.data]}

    def _validate(self):
        self._require("pieces")
        if not self.data["pieces"]:
            raise PolystabError(f"{self.path}: a PL function needs at least one piece")

    def _build(self) -> PLConvexFunction:
        f = PLConvexFunction.from_json(self.data)
        if self.dim is not None and f.dim != self.dim:
            raise DimensionMismatch(f"{self.path}: PL function of dim {f.dim}, expected {self.dim}")
        return f


@dataclass
class PolynomialLoader(InputLoader):
    dim: int | None = None

    def _normalize(self):
        if self.dim is not None:
            self.data.setdefault("dim", self.dim)

    def _validate(self):
        self._require("terms")

    def _build(self) -> Polynomial:
        q = Polynomial.from_json(self.data, self.dim)
        if self.dim is not None and q.dim != self.dim:
            raise DimensionMismatch(f"{self.path}: polynomial of dim {q.dim}, expected {self.dim}")
        return q
