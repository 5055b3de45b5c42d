# File: src/serlab/reporting.py
# Description: CSV writers with configuration headers and rich console tables for serlab results
# Author: serlab developers
# Created: 2026-10-19

import csv
import math
from typing import Iterable, Optional, Sequence, TextIO

from rich.table import Table

from serlab.bounds import (
    BetaDiscrepancy,
    BoundCheckReport,
    BoundSet,
    InflectionReport,
    LogConcavityReport,
    RegimeReport,
)
from serlab.fading import AveragedConvexityReport, JensenReport
from serlab.optimize import AllocationResult, SharingStrategy
from serlab.ser_engine import CurveEstimate
from serlab.version import __version__


def fmt(value: Optional[float]) -> str:
    """17 significant digits; 'inf', '-inf', 'nan' and '' for None."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def write_header(stream: TextIO, config_json: str, extra: Sequence[str] = ()) -> None:
    """'#'-prefixed lines: version, effective configuration, then extras."""
    stream.write(f"# serlab {__version__}\n")
    stream.write(f"# config {config_json}\n")
    for line in extra:
        stream.write(f"# {line}\n")


def _writer(stream: TextIO):
    return csv.writer(stream, lineterminator="\n")


def write_curve_csv(stream: TextIO, curve: CurveEstimate, config_json: str) -> None:
    """
    Columns axis_value, estimate, std_error; the header names the quantity,
    method and axis.
    """
    meta = f"quantity={curve.quantity.value} method={curve.method.value} axis={curve.axis.value}"
    if curve.index is not None:
        meta += f" index={curve.index}"
    if curve.seed is not None:
        meta += f" seed={curve.seed} samples={curve.sample_count}"
    write_header(stream, config_json, [meta])
    writer = _writer(stream)
    writer.writerow(["axis_value", "estimate", "std_error"])
    for x, y, se in zip(curve.grid, curve.values, curve.std_errors):
        writer.writerow([fmt(x), fmt(y), fmt(se)])


def write_bound_rows(stream: TextIO, reports: Iterable[BoundCheckReport]) -> None:
    """One row per grid point: value, lower, upper, margin, pass."""
    writer = _writer(stream)
    writer.writerow(["axis", "order", "axis_value", "estimate", "std_error",
                     "lower", "upper", "margin", "pass"])
    for report in reports:
        for row in report.rows:
            writer.writerow([report.axis.value, report.order, fmt(row.value), fmt(row.estimate),
                             fmt(row.std_error), fmt(row.lower), fmt(row.upper), fmt(row.margin),
                             "true" if row.passed else "false"])


def write_fading_csv(stream: TextIO, rows: Sequence[JensenReport], mean_snrs: Sequence[float],
                     config_json: str) -> None:
    write_header(stream, config_json)
    writer = _writer(stream)
    writer.writerow(["mean_snr", "average_ser", "ser_at_mean", "jensen_gap"])
    for g0, report in zip(mean_snrs, rows):
        writer.writerow([fmt(g0), fmt(report.average), fmt(report.at_mean), fmt(report.gap)])


def write_allocation_csv(stream: TextIO, result: AllocationResult, config_json: str) -> None:
    write_header(stream, config_json, [
        f"objective={fmt(result.objective)} multiplier={fmt(result.multiplier)} "
        f"kkt_residual={fmt(result.kkt_residual)}"
    ])
    writer = _writer(stream)
    writer.writerow(["stream", "snr", "fraction"])
    for i, (g, a) in enumerate(zip(result.snrs, result.fractions)):
        writer.writerow([i, fmt(g), fmt(a)])


def write_sharing_csv(stream: TextIO, strategy: SharingStrategy, config_json: str) -> None:
    write_header(stream, config_json, [
        f"kind={strategy.kind.value} budget={fmt(strategy.budget)} "
        f"threshold={fmt(strategy.threshold)} achieved={fmt(strategy.achieved_ser)}"
    ])
    writer = _writer(stream)
    writer.writerow(["fraction", "level"])
    for fraction, level in strategy.levels:
        writer.writerow([fmt(fraction), fmt(level)])


# ==================== Console tables ====================

def coefficient_table(bs: BoundSet, discrepancy: Optional[BetaDiscrepancy] = None) -> Table:
    table = Table(title=f"Envelope coefficients (n = {bs.n})")
    table.add_column("Coefficient", style="cyan")
    table.add_column("Value", style="magenta")
    for name in ("c_n", "beta_l", "beta_u", "b_l", "b_u", "b_1", "b_2", "a_n", "b_n"):
        table.add_row(name, fmt(getattr(bs, name)))
    if discrepancy is not None and discrepancy.differs:
        table.add_row("beta_u (literal form)", fmt(discrepancy.beta_u_literal))
        table.add_row("beta_l (literal form)",
                      fmt(discrepancy.beta_l_literal) if discrepancy.beta_l_literal is not None
                      else "not real")
    return table


def regime_table(report: RegimeReport) -> Table:
    table = Table(title=f"Convexity regimes ({report.axis.value} axis)")
    table.add_column("Region", style="cyan")
    table.add_column("d_min")
    table.add_column("d_max")
    table.add_column("Convex edge", style="green")
    table.add_column("Concave edge", style="yellow")
    for interval in report.intervals:
        label = "all" if interval.index is None else str(interval.index)
        concave = fmt(interval.concave_edge) if interval.concave_edge is not None else "empty"
        table.add_row(label, f"{interval.d_min:.6g}", f"{interval.d_max:.6g}",
                      f"{interval.convex_edge:.6g}", concave)
    table.caption = report.summary()
    return table


def check_table(rows: Sequence[tuple]) -> Table:
    """rows of (check, passed, detail)."""
    table = Table(title="Verification")
    table.add_column("Check", style="cyan")
    table.add_column("Result")
    table.add_column("Detail", style="dim")
    for name, passed, detail in rows:
        if passed is None:
            result = "[blue]info[/blue]"
        else:
            result = "[green]pass[/green]" if passed else "[bold red]FAIL[/bold red]"
        table.add_row(name, result, detail)
    return table


def bound_detail(report: BoundCheckReport) -> str:
    closest = report.closest
    return f"closest approach at {closest.value:.6g}: margin {closest.margin:.3g} (se {closest.std_error:.3g})"


def inflection_detail(report: InflectionReport) -> str:
    where = ", ".join(f"{x:.6g}" for x in report.crossings) or "none"
    parity = "odd" if report.odd else "even"
    return f"{report.count} crossings ({parity}) at {where}; {len(report.unresolved)} unresolved"


def log_concavity_detail(report: LogConcavityReport) -> str:
    if report.worst_value is None:
        return "grid too short"
    return f"worst margin {report.worst_margin:.3g} at gamma = {report.worst_value:.6g}"


def convexity_detail(report: AveragedConvexityReport) -> str:
    family = "scale family" if report.scale_family else "not a scale family"
    return f"{report.model} ({family}); tightest at gamma_0 = {report.worst_mean_snr:.6g}"


def allocation_table(result: AllocationResult) -> Table:
    table = Table(title="V-BLAST power allocation")
    table.add_column("Stream", style="cyan")
    table.add_column("SNR")
    table.add_column("Fraction", style="magenta")
    for i, (g, a) in enumerate(zip(result.snrs, result.fractions)):
        table.add_row(str(i), f"{g:.6g}", f"{a:.10f}")
    table.caption = (f"BLER {result.objective:.6e}, multiplier {result.multiplier:.6g}, "
                     f"KKT residual {result.kkt_residual:.2e}")
    return table


def sharing_table(strategy: SharingStrategy, title: str = "Power/time sharing") -> Table:
    table = Table(title=title)
    table.add_column("Fraction", style="cyan")
    table.add_column("Level", style="magenta")
    for fraction, level in strategy.levels:
        table.add_row(f"{fraction:.10f}", f"{level:.10g}")
    threshold = "none" if strategy.threshold is None else f"{strategy.threshold:.10g}"
    table.caption = (f"kind {strategy.kind.value}, threshold {threshold}, "
                     f"achieved {strategy.achieved_ser:.10g}")
    return table
