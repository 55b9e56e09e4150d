"""~/models/
dispatched by cli to parse a command line and run one report command

    _NoExitParser: argparse.ArgumentParser that raises UsageError instead of exiting
    RunConfig: validated, frozen run configuration built from a parsed namespace + environment
    configure_logging: stderr handler, level from -v or POLYSTAB_LOG_LEVEL
    View: abstract base class for CLI views
    ReportView: the command view; one handler per subcommand
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from polystab.db.db_conn import DB
from polystab.errors import IdentityCheckFailed, PolystabError, UsageError
from polystab.models.algebra import AffineFunction, Polynomial, format_rational, to_rational
from polystab.models.domain import BundleSpec, PolytopeProblem, SymplecticPotential
from polystab.models.polytope import is_delzant
from polystab.models.storage import ResultsManager
from polystab.services.donaldson import donaldson_polytope
from polystab.services.fibration import (
    build_fiber_model,
    bundle_df,
    bundle_j,
    bundle_j_lower,
    bundle_problem,
    compatible_test_configuration,
    outer_weights,
    verify_identities,
)
from polystab.services.functionals import fplus, futaki, j_norm_detail, na_convert, norm_sandwich
from polystab.services.input_loader import PLLoader, PolynomialLoader, ProblemLoader
from polystab.services.mabuchi import check_convex, compatible_lift_check, mabuchi_energy
from polystab.services.report_formatter import (
    EstimateRowFormatter,
    IdentityRowFormatter,
    SweepRowFormatter,
    sweep_svg,
    to_csv_text,
    to_json_text,
)
from polystab.services.search import run_stability, sweep
from polystab.services.weights import futaki_residual, solve_extremal

logger = logging.getLogger(__name__)

COMMANDS = ("extremal", "df", "jnorm", "delzant", "identities", "mabuchi", "stability", "sweep", "runs")
DEFAULT_N = (4, 8, 16)
LOG_FORMAT = "%(name)s:%(levelname)s:%(message)s"


class _NoExitParser(argparse.ArgumentParser):
    """
    'argparse.ArgumentParser' normally calls sys.exit() on parse errors (unknown / missing arg).
    _NoExitParser raises UsageError instead, so the caller decides the exit code.
    """
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _split_list(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _number(value) -> str | float:
    return format_rational(value) if isinstance(value, Fraction) else float(value)


##########
#               configuration
##########

@dataclass(frozen=True)
class RunConfig:
    """
    param - command: one of COMMANDS
          - input / pl / phi: problem JSON, PL JSON, polynomial JSON
          - N: grid resolutions, each >= 2
          - tol: quadrature tolerance, > 0
          - out: directory for report files and results.duckdb, None for stdout only
          - format: "json", "csv" or None (command default)
          - c_values: sweep parameters
          - threads: POLYSTAB_THREADS
          - run: stored run id for the runs command
    """
    command: str
    input: Path | None = None
    pl: Path | None = None
    phi: Path | None = None
    N: tuple[int, ...] = DEFAULT_N
    norm: str = "l1"
    tol: float = 1e-6
    seed: int = 0
    out: Path | None = None
    format: str | None = None
    R: Fraction | None = None
    c_values: tuple[Fraction, ...] = ()
    svg: bool = False
    threads: int = 1
    verbosity: int = 0
    run: str | None = None

    @classmethod
    def from_namespace(cls, command: str, ns: argparse.Namespace, environ: Mapping[str, str] | None = None) -> RunConfig:
        environ = os.environ if environ is None else environ
        paths = {}
        for name in ("input", "pl", "phi"):
            value = getattr(ns, name, None)
            if value is None:
                paths[name] = None
                continue
            path = Path(value)
            if not path.exists():
                raise UsageError(f"--{name}: no such file: {path}")
            paths[name] = path
        try:
            N = tuple(int(t) for t in _split_list(ns.N)) if ns.N else DEFAULT_N
        except ValueError as exc:
            raise UsageError(f"--N: expected a comma separated list of integers, got {ns.N!r}") from exc
        if not N or any(k < 2 for k in N):
            raise UsageError(f"--N: every resolution must be at least 2, got {ns.N!r}")
        if not ns.tol > 0:
            raise UsageError(f"--tol must be positive, got {ns.tol}")
        try:
            c_values = tuple(to_rational(t) for t in _split_list(ns.c)) if ns.c else ()
            R = to_rational(ns.R) if ns.R is not None else None
        except PolystabError as exc:
            raise UsageError(str(exc)) from exc
        raw_threads = environ.get("POLYSTAB_THREADS", "1")
        try:
            threads = int(raw_threads)
        except ValueError as exc:
            raise UsageError(f"POLYSTAB_THREADS must be a positive integer, got {raw_threads!r}") from exc
        if threads < 1:
            raise UsageError(f"POLYSTAB_THREADS must be a positive integer, got {raw_threads!r}")
        return cls(
            command=command,
            N=tuple(N),
            norm=ns.norm,
            tol=ns.tol,
            seed=ns.seed,
            out=Path(ns.out) if ns.out else None,
            format=ns.format,
            R=R,
            c_values=c_values,
            svg=ns.svg,
            threads=threads,
            verbosity=ns.verbose,
            run=getattr(ns, "run", None),
            **paths,
        )

    def payload(self) -> dict:
        """
        Everything that determines a run's results; the run id is hashed from it.
        """
        def text(path):
            return path.read_text(encoding="utf-8") if path else None

        return {
            "input": text(self.input),
            "pl": text(self.pl),
            "phi": text(self.phi),
            "N": list(self.N),
            "norm": self.norm,
            "tol": self.tol,
            "seed": self.seed,
            "R": None if self.R is None else format_rational(self.R),
            "c": [format_rational(c) for c in self.c_values],
        }


def configure_logging(verbosity: int = 0, environ: Mapping[str, str] | None = None) -> None:
    environ = os.environ if environ is None else environ
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        name = environ.get("POLYSTAB_LOG_LEVEL", "WARNING").upper()
        level = getattr(logging, name, None)
        if not isinstance(level, int):
            raise UsageError(f"POLYSTAB_LOG_LEVEL: unknown level {name!r}")
    logging.basicConfig(stream=sys.stderr, level=level, format=LOG_FORMAT, force=True)


##########
#               views
##########

@dataclass
class View(ABC):
    """
    Abstract base class for CLI views.

    The entry point hands argv to handle_input(), which returns the process exit code.
    - 'handle_input' never calls sys.exit() itself.
    - Errors propagate as PolystabError; cli.main maps them to exit codes.
    """
    @abstractmethod
    def default_display(self) -> str:
        """
        Return the usage text of the view.
        """
        pass

    @abstractmethod
    def handle_input(self, argv: list[str]) -> int:
        pass


@dataclass
class ReportView(View):
    """
    Parses "<command> [options]" and dispatches to the command handler.
    Each handler builds a JSON-able payload, emits it, and returns the exit code.
    """
    environ: Mapping[str, str] | None = None
    cmds: dict[str, argparse.ArgumentParser] = field(default_factory=dict)

    def __post_init__(self):
        if not self.cmds:
            self.cmds = self.build_parsers()

    def default_display(self) -> str:
        return (
            "usage: polystab <command> [options]\n"
            f"    commands: {', '.join(COMMANDS)}\n"
            "    polystab <command> --help for the options of one command\n"
        )

    def handle_input(self, argv: list[str]) -> int:
        if not argv:
            sys.stderr.write(self.default_display())
            return UsageError.exit_code
        cmd, args = argv[0], argv[1:]
        if cmd in ("help", "-h", "--help"):
            if args and args[0] in self.cmds:
                self.cmds[args[0]].print_help()
            else:
                sys.stdout.write(self.default_display())
            return 0
        parser = self.cmds.get(cmd)
        if parser is None:
            raise UsageError(f"unknown command: {cmd} (try: polystab help)")
        ns = parser.parse_args(args)
        config = RunConfig.from_namespace(cmd, ns, self.environ)
        configure_logging(config.verbosity, self.environ)
        logger.info("running %s", cmd)
        return getattr(self, f"_{cmd}")(config)

    @staticmethod
    def build_parsers() -> dict[str, argparse.ArgumentParser]:
        """
        One _NoExitParser per command, all sharing the common flags.
        """
        descriptions = {
            "extremal": "Extremal affine function of a problem, with its residuals.",
            "df": "Donaldson-Futaki value of a PL function (--pl).",
            "jnorm": "J-norm of a PL function (--pl), with the L1 sandwich.",
            "delzant": "Delzant verdict of a polytope, or of Delta_{R-f} with --pl.",
            "identities": "Exact fibration identity battery for a bundle spec and --pl.",
            "mabuchi": "Mabuchi energy of u0 + phi (--phi), with the lift checks for bundles.",
            "stability": "Grid estimates of the stability constant per N, with a certificate.",
            "sweep": "Stability estimates over Kaehler parameters --c (CSV).",
            "runs": "Stored runs of results.duckdb in --out, or the rows of one --run.",
        }
        parsers: dict[str, argparse.ArgumentParser] = {}
        for cmd in COMMANDS:
            p = _NoExitParser(prog=f"polystab {cmd}", description=descriptions[cmd])
            if cmd == "runs":
                p.add_argument("--out", required=True, help="Directory holding results.duckdb.")
                p.add_argument("--run", default=None, help="Run id to print (default: list every run).")
                p.add_argument("--format", choices=("json", "csv"), default=None, help="Output format.")
                p.add_argument("-v", "--verbose", action="count", default=0, help="INFO, or DEBUG when repeated.")
                p.set_defaults(input=None, pl=None, phi=None, R=None, N=None, c=None, norm="l1", tol=1e-6,
                               seed=0, svg=False)
                parsers[cmd] = p
                continue
            p.add_argument("--input", required=True, help="Problem JSON (bundle spec or polytope problem).")
            p.add_argument("--pl", default=None, help="PL convex function JSON.")
            p.add_argument("--phi", default=None, help="Polynomial JSON added to the Guillemin potential.")
            p.add_argument("--R", default=None, help="Height of Delta_{R-f} (default ceil(max f) + 1).")
            p.add_argument("--N", default=None, help="Comma separated grid resolutions (default 4,8,16).")
            p.add_argument("--c", default=None, help="Comma separated Kaehler parameters for sweep.")
            p.add_argument("--norm", choices=("l1", "j"), default="l1", help="Normalisation of the search.")
            p.add_argument("--tol", type=float, default=1e-6, help="Quadrature tolerance.")
            p.add_argument("--seed", type=int, default=0, help="Seed of sampled checks.")
            p.add_argument("--out", default=None, help="Directory for report files and results.duckdb.")
            p.add_argument("--format", choices=("json", "csv"), default=None, help="Output format.")
            p.add_argument("--svg", action="store_true", help="Also write sweep.svg to --out.")
            p.add_argument("-v", "--verbose", action="count", default=0, help="INFO, or DEBUG when repeated.")
            parsers[cmd] = p
        return parsers

    ##########
    #               helpers
    ##########

    @staticmethod
    def _load(config: RunConfig) -> BundleSpec | PolytopeProblem:
        return ProblemLoader(config.input).run()

    @staticmethod
    def _require_bundle(config: RunConfig, problem) -> BundleSpec:
        if not isinstance(problem, BundleSpec):
            raise UsageError(f"{config.command} needs a bundle spec input")
        return problem

    @staticmethod
    def _load_pl(config: RunConfig, dim: int):
        if config.pl is None:
            raise UsageError(f"{config.command} needs --pl")
        return PLLoader(config.pl, dim).run()

    @staticmethod
    def _setting(problem):
        """
        (polytope, density, weight, bundle problem or None)
        """
        if isinstance(problem, BundleSpec):
            bp = bundle_problem(problem)
            return bp.polytope, bp.density, bp.weight, bp
        return problem.polytope, problem.v, problem.w, None

    @staticmethod
    def _emit(config: RunConfig, name: str, payload: dict, csv_text: str | None = None, default: str = "json") -> None:
        fmt = config.format or default
        if fmt == "csv" and csv_text is None:
            fmt = "json"
        text = csv_text if fmt == "csv" else to_json_text(payload)
        sys.stdout.write(text)
        if config.out is not None:
            config.out.mkdir(parents=True, exist_ok=True)
            (config.out / f"{name}.{fmt}").write_text(text, encoding="utf-8")

    @staticmethod
    def _results(config: RunConfig) -> ResultsManager:
        manager = ResultsManager(DB.in_dir(config.out))
        manager.open()
        return manager

    ##########
    #               commands
    ##########

    def _extremal(self, config: RunConfig) -> int:
        problem = self._load(config)
        P, density, weight, bp = self._setting(problem)
        if bp is not None:
            ell, weighted = bp.l_ext, bp.weighted_product
        else:
            # residuals are those of the problem's own weight; zero when it is the extremal one
            ell = solve_extremal(P, density, density, Polynomial.zero(P.dim))
            weighted = weight.times(density)
        basis = [AffineFunction.constant_function(P.dim, 1)] + [AffineFunction.coordinate(P.dim, k) for k in range(P.dim)]
        residuals = [futaki_residual(P, density, weighted, g) for g in basis]
        self._emit(config, "extremal", {"l_ext": ell.to_json(), "residuals": [format_rational(r) for r in residuals]})
        return 0

    def _df(self, config: RunConfig) -> int:
        problem = self._load(config)
        P, density, weight, bp = self._setting(problem)
        f = self._load_pl(config, P.dim)
        value = futaki(P, density, weight, f)
        payload = {"F": _number(value)}
        if bp is not None:
            payload["DF"] = bundle_df(bp, f).to_json()
            payload["DF_fibre"] = (bp.fiber_df_multiplier * value).to_json()
            payload["F_plus"] = format_rational(fplus(P, density, problem.blocks, f))
        elif isinstance(value, Fraction):
            payload["DF"] = na_convert(value, "toric", P.dim).to_json()
        self._emit(config, "df", payload)
        return 0

    def _jnorm(self, config: RunConfig) -> int:
        problem = self._load(config)
        P, density, _, bp = self._setting(problem)
        f = self._load_pl(config, P.dim)
        detail = j_norm_detail(P, density, f)
        sandwich = norm_sandwich(P, density, f)
        payload = {
            "j": format_rational(detail.value),
            "xi": detail.xi.to_json(),
            "t": format_rational(detail.t),
            "l1_star": format_rational(sandwich.l1_star),
            "ratio": None if sandwich.ratio is None else format_rational(sandwich.ratio),
        }
        if bp is not None:
            payload["J"] = bundle_j(bp, f).to_json()
            payload["J_lower"] = bundle_j_lower(bp, f).to_json()
        else:
            payload["J"] = na_convert(detail.value, "toric", P.dim, volume=P.volume(), functional="j").to_json()
        self._emit(config, "jnorm", payload)
        return 0

    def _delzant(self, config: RunConfig) -> int:
        problem = self._load(config)
        P = self._setting(problem)[0]
        if config.pl is None:
            payload = is_delzant(P).to_json()
            payload["vertices"] = [[format_rational(c) for c in v] for v in P.vertices]
        else:
            tc = donaldson_polytope(P, self._load_pl(config, P.dim), config.R)
            payload = tc.to_json()
        self._emit(config, "delzant", payload)
        return 0

    def _identities(self, config: RunConfig) -> int:
        spec = self._require_bundle(config, self._load(config))
        model = build_fiber_model(spec.ranks)
        f = self._load_pl(config, model.base.dim)
        v, w = outer_weights(bundle_problem(spec))
        checks = verify_identities(model, f, v=v, w=w)
        pair = compatible_test_configuration(model, f, config.R)
        passed = all(c.passed for c in checks)
        payload = {
            "checks": [c.to_json() for c in checks],
            "passed": passed,
            "compatible_delzant": {"base": pair.base.verdict.delzant, "hat": pair.hat.verdict.delzant},
        }
        self._emit(config, "identities", payload, to_csv_text(IdentityRowFormatter, checks))
        if not passed:
            failed = [c.check for c in checks if not c.passed]
            raise IdentityCheckFailed(f"nonzero identity differences: {', '.join(failed)}")
        return 0

    def _mabuchi(self, config: RunConfig) -> int:
        problem = self._load(config)
        P, density, weight, bp = self._setting(problem)
        phi = PolynomialLoader(config.phi, P.dim).run() if config.phi else Polynomial.zero(P.dim)
        u = SymplecticPotential(P, phi)
        check_convex(u, seed=config.seed)
        value = mabuchi_energy(u, density, weight, rel_tol=config.tol)
        payload = {"mabuchi": value.to_json()}
        code = 0
        if bp is not None:
            lift = compatible_lift_check(u, build_fiber_model(problem.ranks), seed=config.seed)
            payload["lift"] = lift.to_json()
            if not lift.passed:
                logger.warning("lift checks outside tolerance")
                code = 4
        self._emit(config, "mabuchi", payload)
        return code

    def _stability(self, config: RunConfig) -> int:
        problem = self._load(config)
        P, density, weight, _ = self._setting(problem)
        report = run_stability(P, density, weight, config.N, config.norm)
        self._emit(config, "stability", report.to_json(), to_csv_text(EstimateRowFormatter, report.estimates))
        if config.out is not None:
            manager = self._results(config)
            try:
                manager.record_stability(manager.record_run("stability", config.payload()), report)
            finally:
                manager.db.close()
            if report.destabilizer is not None:
                (config.out / "destabilizer.json").write_text(to_json_text(report.destabilizer.to_json()), encoding="utf-8")
        return 0

    def _sweep(self, config: RunConfig) -> int:
        spec = self._require_bundle(config, self._load(config))
        if not config.c_values:
            raise UsageError("sweep needs --c")
        summary = sweep(spec, config.c_values, config.N, config.norm, config.threads)
        self._emit(config, "sweep", summary.to_json(), to_csv_text(SweepRowFormatter, summary.rows), default="csv")
        if config.out is not None:
            manager = self._results(config)
            try:
                run_id = manager.record_run("sweep", config.payload())
                manager.record_sweep(run_id, summary)
                manager.export_sweep_csv(run_id, config.out / "sweep.csv")
            finally:
                manager.db.close()
            for row in summary.rows:
                if row.destabilizer is not None:
                    (config.out / row.destabilizer_ref).write_text(to_json_text(row.destabilizer.to_json()), encoding="utf-8")
            if config.svg:
                (config.out / "sweep.svg").write_text(sweep_svg(summary), encoding="utf-8")
        return 0

    def _runs(self, config: RunConfig) -> int:
        manager = ResultsManager(DB.in_dir(config.out, read_only=True))
        try:
            if config.run is None:
                runs = [{"run_id": run_id, "command": command} for run_id, command in manager.list_runs()]
                sys.stdout.write(to_json_text({"runs": runs}))
                return 0
            run_id, command, config_json = manager.get_run(config.run)
            if command == "sweep":
                formatter, rows = SweepRowFormatter, manager.sweep_rows(run_id)
            else:
                formatter, rows = EstimateRowFormatter, manager.stability_estimates(run_id)
            payload = {
                "run_id": run_id,
                "command": command,
                "config": json.loads(config_json),
                "rows": [dict(zip(formatter.header(), formatter(r).entry())) for r in rows],
            }
            if command == "sweep":
                payload["sign_changes"] = manager.count_sign_changes(run_id)
        finally:
            manager.db.close()
        if config.format == "csv":
            sys.stdout.write(to_csv_text(formatter, rows))
        else:
            sys.stdout.write(to_json_text(payload))
        return 0
