"""root/tests/
JSON input loaders: bundle specs, polytope problems, PL functions and polynomials.

    Files are written into tmp_path; every malformed input should surface as a PolystabError.
"""
import json
from fractions import Fraction as F

import pytest

from polystab.errors import DimensionMismatch, PolystabError
from polystab.models.algebra import AffineFunction, Polynomial
from polystab.models.domain import BundleSpec, FunctionalValue, PolytopeProblem
from polystab.services.input_loader import PLLoader, PolynomialLoader, ProblemLoader


def _write(tmp_path, data, name="input.json"):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
    return path


def test_bundle_spec(tmp_path):
    path = _write(tmp_path, {"blocks": [{"rank": 1}, {"rank": 1, "degree": 1}], "c": "2"})
    spec = ProblemLoader(path).run()
    assert spec == BundleSpec(0, ((1, 0), (1, 1)), F(2))
    assert spec.base_volume == FunctionalValue(F(1), 1)


def test_bundle_spec_base_volume(tmp_path):
    data = {"genus": 1, "blocks": [{"rank": 2}, {"rank": 1}], "c": "5/2", "base_volume": "3"}
    spec = ProblemLoader(_write(tmp_path, data)).run()
    assert spec.genus == 1 and spec.c == F(5, 2)
    assert spec.base_volume == FunctionalValue(F(3), 0)


@pytest.mark.parametrize("data, expected", [
    ({"polytope": {"standard_simplex": 1}}, 4),
    ({"polytope": {"standard_simplex": 2}}, 12),
    ({"polytope": {"standard_simplex": 1}, "w": "7/2"}, F(7, 2)),
    ]
)
def test_polytope_problem(tmp_path, data, expected):
    problem = ProblemLoader(_write(tmp_path, data)).run()
    assert isinstance(problem, PolytopeProblem)
    assert problem.v == Polynomial.constant(problem.polytope.dim, 1)
    assert problem.w.poly == Polynomial.constant(problem.polytope.dim, expected)


def test_polytope_problem_from_labels(tmp_path):
    data = {
        "polytope": {"labels": [{"linear": [1], "constant": 0}, {"linear": [-1], "constant": 1}]},
        "v": {"dim": 1, "terms": [{"exp": [0], "coef": 2}, {"exp": [1], "coef": -1}]},
        "w": {"terms": [{"exp": [0], "coef": 1}]},
    }
    problem = ProblemLoader(_write(tmp_path, data)).run()
    assert problem.polytope.vertices == ((0,), (1,))
    assert problem.v == 2 - Polynomial.coordinate(1, 0)
    assert problem.w.poly == Polynomial.constant(1, 1)


@pytest.mark.parametrize("text", [
    "{not json",
    "[1, 2]",
    json.dumps({"v": 1}),
    json.dumps({"polytope": {"vertices": [[0], [1]]}}),
    json.dumps({"blocks": [{"rank": 1}, {"rank": 1}]}),
    json.dumps({"blocks": {"rank": 1}, "c": 2}),
    json.dumps({"blocks": [{"degree": 1}, {"rank": 1}], "c": 2}),
    json.dumps({"blocks": [{"rank": 1}], "c": 2}),
    ]
)
def test_problem_rejects(tmp_path, text):
    with pytest.raises(PolystabError):
        ProblemLoader(_write(tmp_path, text)).run()


def test_missing_file(tmp_path):
    with pytest.raises(PolystabError, match="cannot read input"):
        ProblemLoader(tmp_path / "absent.json").run()


def test_polynomial_dimension_mismatch(tmp_path):
    data = {"polytope": {"standard_simplex": 1}, "v": {"dim": 2, "terms": [{"exp": [0, 0], "coef": 1}]}}
    with pytest.raises(DimensionMismatch):
        ProblemLoader(_write(tmp_path, data)).run()


def test_pl_loader(tmp_path):
    data = {"pieces": [{"linear": [0], "constant": 0}, {"linear": [2], "constant": -1}]}
    f = PLLoader(_write(tmp_path, data), dim=1).run()
    assert f.pieces == (AffineFunction((F(0),), 0), AffineFunction((F(2),), F(-1)))
    single = PLLoader(_write(tmp_path, {"linear": ["1/2"], "constant": 3}, "one.json")).run()
    assert single.pieces == (AffineFunction((F(1, 2),), 3),)


@pytest.mark.parametrize("data, dim", [
    ({"pieces": []}, None),
    ({"shape": "ramp"}, None),
    ({"pieces": [{"linear": [1, 0], "constant": 0}]}, 1),
    ]
)
def test_pl_loader_rejects(tmp_path, data, dim):
    with pytest.raises(PolystabError):
        PLLoader(_write(tmp_path, data), dim=dim).run()


def test_polynomial_loader(tmp_path):
    data = {"terms": [{"exp": [2], "coef": 1}, {"exp": [0], "coef": "1/3"}]}
    q = PolynomialLoader(_write(tmp_path, data), dim=1).run()
    x = Polynomial.coordinate(1, 0)
    assert q == x * x + F(1, 3)
    with pytest.raises(PolystabError):
        PolynomialLoader(_write(tmp_path, {"dim": 1}, "bad.json")).run()
    with pytest.raises(DimensionMismatch):
        PolynomialLoader(_write(tmp_path, {"dim": 2, "terms": []}, "dim.json"), dim=1).run()
