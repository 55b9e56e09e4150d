"""~/services/

format reports for stdout and for files.

    to_json_text: JSON with sorted keys, stable across runs
    RowFormatter: Abstract parent class, formats a specific row type into CSV cells
    SweepRowFormatter: child class, formats a SweepRow
    EstimateRowFormatter: child class, formats a LambdaEstimate
    IdentityRowFormatter: child class, formats an IdentityCheck
    to_csv_text: header + entries of one formatter class
    sweep_svg: minimal line chart of lambda_est against c
"""
from __future__ import annotations

import csv
import io
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable
from xml.sax.saxutils import escape

from polystab.models.algebra import format_rational
from polystab.models.domain import IdentityCheck, LambdaEstimate, SweepRow, SweepSummary


def to_json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _num_den(value: Fraction | None) -> list[str]:
    if value is None:
        return ["", ""]
    return [str(value.numerator), str(value.denominator)]


@dataclass
class RowFormatter(ABC):
    """
    Formats report rows as CSV cells.

    param - subclasses wrap one instance of the row type.
    """

    @classmethod
    @abstractmethod
    def header(cls) -> list[str]:
        """
        Column names, callable without an instance.
        """
        pass

    @abstractmethod
    def entry(self) -> list[str]:
        pass


@dataclass
class SweepRowFormatter(RowFormatter):
    row: SweepRow

    @classmethod
    def header(cls) -> list[str]:
        return ["c", "N", "lambda_num", "lambda_den", "verdict", "destabilizer_ref"]

    def entry(self) -> list[str]:
        r = self.row
        return [format_rational(r.c), str(r.N), *_num_den(r.value), r.verdict, r.destabilizer_ref]


@dataclass
class EstimateRowFormatter(RowFormatter):
    estimate: LambdaEstimate

    @classmethod
    def header(cls) -> list[str]:
        return ["N", "norm", "lambda_num", "lambda_den", "base_node"]

    def entry(self) -> list[str]:
        e = self.estimate
        return [str(e.N), e.norm, *_num_den(e.value), str(e.base_node)]


@dataclass
class IdentityRowFormatter(RowFormatter):
    check: IdentityCheck

    @classmethod
    def header(cls) -> list[str]:
        return ["check", "lhs", "rhs", "difference"]

    def entry(self) -> list[str]:
        c = self.check
        return [c.check, format_rational(c.lhs), format_rational(c.rhs), format_rational(c.difference)]


def to_csv_text(formatter: type[RowFormatter], items: Iterable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(formatter.header())
    for item in items:
        writer.writerow(formatter(item).entry())
    return buf.getvalue()


def sweep_svg(summary: SweepSummary, width: int = 480, height: int = 240, margin: int = 32) -> str:
    """
    One polyline per N through (c, lambda_est); a dashed line marks lambda = 0. Error rows are
    skipped.
    """
    points = [(float(r.c), float(r.value), r.N) for r in summary.rows if r.value is not None]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    if not points:
        out.append('<text x="10" y="20">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    xs = [p[0] for p in points]
    ys = [p[1] for p in points] + [0.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x: float) -> float:
        return margin + (x - x_lo) / x_span * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

    out.append(
        f'<line x1="{margin}" y1="{sy(0.0):.2f}" x2="{width - margin}" y2="{sy(0.0):.2f}" '
        'stroke="grey" stroke-dasharray="4 3"/>'
    )
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    for k, N in enumerate(sorted({p[2] for p in points})):
        series = sorted((x, y) for x, y, n in points if n == N)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in series)
        colour = palette[k % len(palette)]
        out.append(f'<polyline fill="none" stroke="{colour}" points="{coords}"/>')
        out.append(
            f'<text x="{width - margin}" y="{margin + 14 * k}" fill="{colour}" '
            f'text-anchor="end">{escape(f"N={N}")}</text>'
        )
    out.append(f'<text x="{margin}" y="{height - 8}">c: {x_lo:g} .. {x_hi:g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
