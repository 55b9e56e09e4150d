"""~/models/
db wrapper

- ResultsManager: bridge between the results database and the CLI views.
  Records stability estimates and sweep rows under a deterministic run id, reads them back
  for the runs command and exports sweeps as CSV.
"""
from __future__ import annotations

import hashlib
import json
import logging
import re
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from polystab.db import queries as qry
from polystab.db.db_conn import DB, init_db
from polystab.errors import PolystabError
from polystab.models.algebra import format_rational, to_rational
from polystab.models.domain import LambdaEstimate, StabilityReport, SweepRow, SweepSummary

logger = logging.getLogger(__name__)

_RUN_ID = re.compile(r"^[0-9a-f]{16}$")


def run_id_for(command: str, payload: Mapping) -> str:
    """
    First 16 hex digits of sha256 over the command and its sorted JSON payload.
    """
    text = json.dumps({"command": command, "payload": payload}, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _split_rational(value: Fraction | None) -> tuple[str | None, str | None]:
    if value is None:
        return None, None
    return str(value.numerator), str(value.denominator)


def _join_rational(num: str | None, den: str | None) -> Fraction | None:
    if num is None:
        return None
    return Fraction(int(num), int(den))


class ResultsManager:
    """
    Stores and lists results of `stability` and `sweep` runs.
    """

    def __init__(self, db: DB):
        self.db = db
        self.conn = db.conn

    def open(self):
        """
        Runs the db initialization statements in schema.sql, returns nothing
        """
        init_db(self.db)

    def record_run(self, command: str, payload: Mapping) -> str:
        run_id = run_id_for(command, payload)
        self.conn.execute(qry.UPSERT_RUN, [run_id, command, json.dumps(payload, sort_keys=True, default=str)])
        return run_id

    def get_run(self, run_id: str):
        row = self.conn.execute(qry.GET_RUN, [run_id]).fetchone()
        if row is None:
            raise PolystabError(f"Run not found: {run_id}")
        return row

    def list_runs(self) -> list[tuple[str, str]]:
        return self.conn.execute(qry.LIST_RUNS).fetchall()

    def record_sweep(self, run_id: str, summary: SweepSummary) -> None:
        """
        Replace the rows of run_id with the rows of summary.
        """
        self.conn.execute(qry.CLEAR_SWEEP_ROWS, [run_id])
        for row in summary.rows:
            num, den = _split_rational(row.value)
            self.conn.execute(
                qry.INSERT_SWEEP_ROW,
                [run_id, row.c_order, format_rational(row.c), row.N, num, den, row.verdict, row.destabilizer_ref],
            )
        logger.info("recorded %d sweep rows under run %s", len(summary.rows), run_id)

    def record_stability(self, run_id: str, report: StabilityReport) -> None:
        self.conn.execute(qry.CLEAR_STABILITY_ROWS, [run_id])
        for est in report.estimates:
            num, den = _split_rational(est.value)
            self.conn.execute(qry.INSERT_STABILITY_ROW, [run_id, est.N, est.norm, num, den, est.base_node])
        logger.info("recorded %d stability estimates under run %s", len(report.estimates), run_id)

    def list_stability(self, run_id: str) -> list[tuple]:
        rows = self.conn.execute(qry.LIST_STABILITY_ROWS, [run_id]).fetchall()
        if not rows:
            raise PolystabError(f"No stability estimates found for run: {run_id}")
        return rows

    def _sweep_select(self, run_id: str) -> str:
        if not _RUN_ID.match(run_id):
            raise PolystabError(f"malformed run id: {run_id!r}")
        return qry.LIST_SWEEP_ROWS.format(run_id=run_id)

    def list_sweep(self, run_id: str, N: int | None = None) -> list[tuple]:
        """
        Sweep rows in CSV order; N limits how many are returned.
        """
        rows = self.conn.execute(self._sweep_select(run_id)).fetchall()
        if not rows:
            raise PolystabError(f"No sweep rows found for run: {run_id}")
        return rows if N is None else rows[:N]

    def count_sign_changes(self, run_id: str) -> int:
        return self.conn.execute(qry.COUNT_SIGN_CHANGES, [run_id, run_id]).fetchone()[0]

    def sweep_rows(self, run_id: str) -> list[SweepRow]:
        """
        Stored sweep rows as SweepRow records; destabilizers stay in their files.
        """
        return [
            SweepRow(to_rational(c), N, _join_rational(num, den), verdict, ref)
            for c, N, num, den, verdict, ref in self.list_sweep(run_id)
        ]

    def stability_estimates(self, run_id: str) -> list[LambdaEstimate]:
        """
        Stored estimates as LambdaEstimate records, without nodal values.
        """
        return [
            LambdaEstimate(N, _join_rational(num, den), (), base_node, norm)
            for N, norm, num, den, base_node in self.list_stability(run_id)
        ]

    def export_sweep_csv(self, run_id: str, path) -> Path:
        """
        COPY the ordered sweep rows to path with a header line.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        target = str(path).replace("'", "''")
        self.conn.execute(qry.COPY_SWEEP_CSV.format(select=self._sweep_select(run_id), path=target))
        return path
