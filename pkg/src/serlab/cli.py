# File: src/serlab/cli.py
# Description: Command-line interface for SER curves, verification, oracles, fading and optimizers
# Author: serlab developers
# Created: 2026-10-19

import io
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, TextIO, Tuple

import click
import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from rich.console import Console

from serlab.bounds import (
    beta_form_discrepancy,
    check_derivative_bounds,
    coefficients,
    inflection_scan,
    limit_check,
    log_concavity_check,
    noise_regimes,
    sign_contract_check,
    snr_regimes,
)
from serlab.closed_forms import resolve_closed_form
from serlab.config import Settings, get_settings
from serlab.constellation import Constellation, constellation_from_file, parse_constellation_name
from serlab.error_handling import CapabilityError, CheckFailure, InvalidInputError, SerLabError
from serlab.fading import FadingModel, avg_convexity_check, curve_to_function, jensen_check, scale_family_check
from serlab.logging_config import LoggingConfig
from serlab.optimize import (
    SharingKind,
    SharingStrategy,
    blast_allocate,
    find_inflection_noise,
    jam_optimal,
    jam_suboptimal,
    transmitter_sharing,
)
from serlab.reporting import (
    allocation_table,
    bound_detail,
    check_table,
    coefficient_table,
    convexity_detail,
    inflection_detail,
    log_concavity_detail,
    regime_table,
    sharing_table,
    write_allocation_csv,
    write_bound_rows,
    write_curve_csv,
    write_fading_csv,
    write_header,
    write_sharing_csv,
)
from serlab.ser_engine import Axis, Method, Quantity, curve
from serlab.sphere_oracle import RadiusRule, sphere_curve
from serlab.version import __version__

console = Console(stderr=True)
logger = structlog.get_logger()

EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2
MIN_MC_SAMPLES = 1000


class GridSpec(BaseModel):
    """
    Grid written as start:stop:count[:scale], scale linear or log (default log).

    Example:
        GridSpec.parse("0.1:20:40:log").values()
    """
    start: float = Field(gt=0)
    stop: float = Field(gt=0)
    count: int = Field(ge=2)
    scale: Literal["linear", "log"] = "log"

    @model_validator(mode="after")
    def check_order(self):
        if not self.stop > self.start:
            raise ValueError(f"stop {self.stop} must exceed start {self.start}")
        return self

    @classmethod
    def parse(cls, text: str) -> 'GridSpec':
        parts = text.split(':')
        if len(parts) not in (3, 4):
            raise InvalidInputError(f"grid {text!r} is not start:stop:count[:scale]")
        fields = dict(zip(("start", "stop", "count", "scale"), parts))
        try:
            return cls(**fields)
        except ValidationError as e:
            raise InvalidInputError(f"invalid grid {text!r}: {e.errors()[0]['msg']}") from e

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.start, self.stop, self.count)
        return np.linspace(self.start, self.stop, self.count)

    def __str__(self) -> str:
        return f"{self.start:g}:{self.stop:g}:{self.count}:{self.scale}"


class RunConfig(BaseModel):
    """
    Effective configuration of one CLI run; its JSON is the '#' header of
    every output file.
    """
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    constellation: Optional[str] = None
    axis: Optional[str] = None
    grid: Optional[str] = None
    samples: Optional[int] = None
    seed: Optional[int] = None
    output: Optional[str] = None
    method: Optional[str] = None
    fading: Optional[str] = None
    mean_snr: Optional[str] = None
    parameters: Dict[str, Any] = Field(default_factory=dict)
    version: str = __version__

    @model_validator(mode="after")
    def check_samples(self):
        if self.method == Method.MC.value and self.samples is not None and self.samples < MIN_MC_SAMPLES:
            raise ValueError(f"Monte Carlo runs need at least {MIN_MC_SAMPLES} samples, got {self.samples}")
        return self


# ==================== Helpers ====================

def _parse_grid(ctx, param, value: Optional[str]) -> Optional[GridSpec]:
    if value is None:
        return None
    try:
        return GridSpec.parse(value)
    except InvalidInputError as e:
        raise click.BadParameter(str(e), ctx=ctx, param=param)


def _parse_streams(ctx, param, value: str) -> Tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(','))
    except ValueError:
        raise click.BadParameter(f"expected comma-separated SNRs, got {value!r}", ctx=ctx, param=param)


def _parse_bracket(ctx, param, value: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value.split(':'))
    except ValueError:
        raise click.BadParameter(f"expected lo:hi, got {value!r}", ctx=ctx, param=param)
    return lo, hi


def _settings(ctx, workers: Optional[int] = None) -> Settings:
    settings: Settings = ctx.obj['settings']
    if workers is not None:
        if workers < 1:
            raise InvalidInputError(f"workers must be >= 1, got {workers}")
        settings = settings.model_copy(update={'workers': workers})
    return settings


def _run_config(**fields) -> RunConfig:
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        raise InvalidInputError(f"invalid run configuration: {e.errors()[0]['msg']}") from e


def load_constellation(source: str) -> Constellation:
    """A standard name such as 'mpsk:8' or the path of a JSON/YAML file."""
    if Path(source).expanduser().is_file():
        return constellation_from_file(source)
    return parse_constellation_name(source)


def _axis_grid(snr: Optional[GridSpec], noise: Optional[GridSpec]) -> Tuple[Axis, GridSpec]:
    if (snr is None) == (noise is None):
        raise InvalidInputError("give exactly one of --snr and --noise")
    return (Axis.SNR, snr) if snr is not None else (Axis.NOISE, noise)


def _emit(output: Optional[str], write: Callable[[TextIO], None]) -> None:
    """Write to the output file, or to stdout when none is given."""
    if output:
        with open(Path(output).expanduser(), 'w', encoding='utf-8', newline='') as stream:
            write(stream)
        console.print(f"[bold green]✓[/bold green] Wrote {output}")
    else:
        buffer = io.StringIO()
        write(buffer)
        click.echo(buffer.getvalue(), nl=False)


@contextmanager
def _exit_codes():
    """Map failed checks to exit status 1 and other library errors to 2."""
    try:
        yield
    except CheckFailure as e:
        console.print(f"[bold red]Checks failed:[/bold red] {e}")
        logger.warning("Verification failed", **e.context)
        raise click.exceptions.Exit(EXIT_CHECK_FAILURE)
    except SerLabError as e:
        console.print(f"[bold red]Error:[/bold red] {e}", style="red")
        logger.error("Command failed", error=type(e).__name__, message=str(e),
                     severity=e.severity.value, **e.context)
        raise click.exceptions.Exit(EXIT_USAGE)


# ==================== Commands ====================

@click.group()
@click.version_option(__version__, prog_name="serlab")
@click.option('--log-level', default=None, help='Override SERLAB_LOG_LEVEL (DEBUG, INFO, WARNING)')
@click.pass_context
def cli(ctx, log_level: Optional[str]):
    """
    serlab - SER convexity and bounds laboratory.

    Business Purpose: Reproducible command-line access to SER curves, the
    universal derivative envelopes and the power-sharing optimizers, with
    every result written as CSV carrying its own configuration.
    """
    settings = get_settings()
    level_name = (log_level or settings.log_level).upper()
    level = logging.getLevelName(level_name)
    if not isinstance(level, int):
        raise click.BadParameter(f"unknown log level {level_name}", param_hint='--log-level')
    LoggingConfig.initialize(environment=settings.environment, log_dir=Path(settings.log_dir),
                             log_level=level)
    ctx.obj = {'settings': settings}


@cli.command()
@click.option('--constellation', '-c', required=True, help='Standard name (bpsk, mpsk:8, ...) or file path')
@click.option('--snr', 'snr_grid', callback=_parse_grid, help='SNR grid start:stop:count[:scale]')
@click.option('--noise', 'noise_grid', callback=_parse_grid, help='Noise-power grid start:stop:count[:scale]')
@click.option('--quantity', '-q', type=click.Choice([q.value for q in Quantity]), default='pe',
              help='pe, pei, pc, pci, d1 or d2')
@click.option('--index', '-i', type=int, default=None, help='Point index for pei/pci (optional for d1/d2)')
@click.option('--method', '-m', type=click.Choice(['mc', 'quadrature']), default='mc', help='Estimator')
@click.option('--samples', '-n', type=int, default=None, help='Monte Carlo sample budget')
@click.option('--seed', type=int, default=None, help='Base seed')
@click.option('--workers', type=int, default=None, help='Threads for Monte Carlo partitions')
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None, help='CSV path (stdout if omitted)')
@click.pass_context
def ser(ctx, constellation, snr_grid, noise_grid, quantity, index, method, samples, seed, workers, output):
    """
    Estimate an SER curve and write it as CSV.

    Example:
        serlab ser --constellation qpsk --snr 0.1:20:40:log --samples 100000 --seed 7
    """
    with _exit_codes():
        settings = _settings(ctx, workers)
        axis, grid = _axis_grid(snr_grid, noise_grid)
        samples = settings.default_samples if samples is None else samples
        seed = settings.default_seed if seed is None else seed
        config = _run_config(subcommand="ser", constellation=constellation, axis=axis.value,
                             grid=str(grid), samples=samples if method == 'mc' else None,
                             seed=seed if method == 'mc' else None, output=output, method=method,
                             parameters={'quantity': quantity, 'index': index})
        c = load_constellation(constellation)
        estimate = curve(c, axis, grid.values(), Quantity(quantity), Method(method),
                         samples=samples, seed=seed, index=index, settings=settings)
        _emit(output, lambda stream: write_curve_csv(stream, estimate, config.model_dump_json()))


@cli.command()
@click.option('--constellation', '-c', required=True, help='Standard name or file path')
@click.option('--snr', 'snr_grid', callback=_parse_grid, default='0.01:20:50:log', help='SNR grid')
@click.option('--noise', 'noise_grid', callback=_parse_grid, default='0.01:10:50:log', help='Noise-power grid')
@click.option('--samples', '-n', type=int, default=None, help='Monte Carlo sample budget per curve')
@click.option('--seed', type=int, default=None, help='Base seed')
@click.option('--workers', type=int, default=None, help='Threads for Monte Carlo partitions')
@click.option('--per-point', is_flag=True, help='Report regimes per decision region')
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None, help='Bound-check CSV path')
@click.pass_context
def verify(ctx, constellation, snr_grid, noise_grid, samples, seed, workers, per_point, output):
    """
    Check derivative envelopes, sign contracts, regimes, inflections and
    log-concavity for one constellation. Exit status 1 if any check fails.

    Example:
        serlab verify --constellation cube:3 --samples 200000
    """
    with _exit_codes():
        settings = _settings(ctx, workers)
        samples = settings.default_samples if samples is None else samples
        seed = settings.default_seed if seed is None else seed
        config = _run_config(subcommand="verify", constellation=constellation, grid=str(snr_grid),
                             samples=samples, seed=seed, output=output, method="mc",
                             parameters={'noise_grid': str(noise_grid), 'per_point': per_point})
        c = load_constellation(constellation)
        checks: List[tuple] = []

        bs = coefficients(c.n)
        discrepancy = beta_form_discrepancy(c.n) if c.n != 2 else None
        console.print(coefficient_table(bs, discrepancy))

        regimes = {}
        try:
            regimes[Axis.SNR] = snr_regimes(c, per_point, settings)
            regimes[Axis.NOISE] = noise_regimes(c, per_point, settings)
            for report in regimes.values():
                console.print(regime_table(report))
                checks.append((f"regimes ({report.axis.value})", None, report.summary()))
        except CapabilityError as e:
            checks.append(("regimes", None, f"skipped: {e}"))

        reports = []
        grids = {Axis.SNR: snr_grid.values(), Axis.NOISE: noise_grid.values()}
        with console.status("[bold green]Estimating derivative curves..."):
            for axis, grid in grids.items():
                for quantity in (Quantity.D1, Quantity.D2):
                    estimate = curve(c, axis, grid, quantity, Method.MC, samples=samples,
                                     seed=seed, settings=settings)
                    report = check_derivative_bounds(estimate, bs, settings=settings)
                    reports.append(report)
                    label = f"{quantity.value} envelope ({axis.value})"
                    checks.append((label, report.passed, bound_detail(report)))
                    limit = limit_check(estimate, bs, settings=settings)
                    checks.append((f"{quantity.value} limit ({axis.value})", limit.passed,
                                   f"|{limit.estimate:.3g}| vs envelope {limit.envelope:.3g} "
                                   f"at {limit.value:.6g}"))
                    if quantity is Quantity.D1:
                        sign = sign_contract_check(estimate, settings=settings)
                        checks.append((f"d1 sign ({axis.value})", sign.passed,
                                       f"{len(sign.violations)} violations"))
                    elif axis in regimes:
                        checks.append(_inflection_row(regimes[axis], estimate, c.n, settings))

            for i in range(c.M):
                pc_curve = curve(c, Axis.SNR, grids[Axis.SNR], Quantity.PCI, Method.MC,
                                 samples=samples, seed=seed, index=i, settings=settings)
                try:
                    lc = log_concavity_check(pc_curve, settings=settings)
                    checks.append((f"log-concavity P_c{i}", lc.passed, log_concavity_detail(lc)))
                except InvalidInputError as e:
                    checks.append((f"log-concavity P_c{i}", False, str(e)))

        console.print(check_table(checks))
        if output:
            def write(stream):
                write_header(stream, config.model_dump_json())
                write_bound_rows(stream, reports)
            _emit(output, write)

        failed = [name for name, passed, _ in checks if passed is False]
        if failed:
            raise CheckFailure(", ".join(failed), context={'constellation': constellation, 'failed': failed})
        logger.info("Verification passed", constellation=constellation, checks=len(checks))


def _inflection_row(regimes, estimate, n: int, settings: Settings) -> tuple:
    label = f"inflections ({estimate.axis.value})"
    if regimes.convex_everywhere:
        return label, None, "convex for all gamma; no inflection expected"
    lo, hi = regimes.overall.inflection_bracket
    try:
        report = inflection_scan(estimate, (lo, hi), settings=settings)
    except InvalidInputError as e:
        return label, None, f"skipped: {e}"
    return label, None, inflection_detail(report)


@cli.command()
@click.option('--n', 'dimension', type=int, required=True, help='Dimension')
@click.option('--radius-rule', type=click.Choice([r.value for r in RadiusRule]), default='fixed',
              help='Fixed radius or an extremal rule evaluated per grid value')
@click.option('--radius', type=float, default=None, help='Radius for the fixed rule')
@click.option('--snr', 'snr_grid', callback=_parse_grid, help='SNR grid')
@click.option('--noise', 'noise_grid', callback=_parse_grid, help='Noise-power grid')
@click.option('--quantity', '-q', type=click.Choice(['pe', 'pc', 'd1', 'd2']), default='d1')
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None)
@click.pass_context
def sphere(ctx, dimension, radius_rule, radius, snr_grid, noise_grid, quantity, output):
    """
    Oracle curves of a spherical decision region.

    Example:
        serlab sphere --n 2 --radius-rule first-order --snr 1:100:20:log
    """
    with _exit_codes():
        axis, grid = _axis_grid(snr_grid, noise_grid)
        config = _run_config(subcommand="sphere", axis=axis.value, grid=str(grid), output=output,
                             method=Method.ORACLE.value,
                             parameters={'n': dimension, 'radius_rule': radius_rule,
                                         'radius': radius, 'quantity': quantity})
        estimate = sphere_curve(dimension, axis, grid.values(), Quantity(quantity),
                                RadiusRule(radius_rule), radius)
        _emit(output, lambda stream: write_curve_csv(stream, estimate, config.model_dump_json()))


@cli.command()
@click.option('--pe', 'pe_name', default=None, help='Closed form (bpsk-closed-form, sphere:n:R, ...)')
@click.option('--constellation', '-c', default=None, help='Estimate pe by Monte Carlo instead')
@click.option('--snr', 'snr_grid', callback=_parse_grid, default='0.01:1000:60:log',
              help='SNR grid for the Monte Carlo pe curve')
@click.option('--fading', '-f', 'fading_spec', required=True,
              help='rayleigh, rice:K, nakagami:m or lognormal:p (linear SNR std 10^(p/10))')
@click.option('--mean-snr', 'mean_grid', callback=_parse_grid, default='0.1:100:20:log',
              help='Grid of mean SNRs')
@click.option('--samples', '-n', type=int, default=None)
@click.option('--seed', type=int, default=None)
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None)
@click.pass_context
def fade(ctx, pe_name, constellation, snr_grid, fading_spec, mean_grid, samples, seed, output):
    """
    Fading-averaged SER, Jensen gaps and convexity in the mean SNR.

    Example:
        serlab fade --pe bpsk-closed-form --fading rayleigh --mean-snr 1:100:10:log
    """
    with _exit_codes():
        settings = _settings(ctx)
        if (pe_name is None) == (constellation is None):
            raise InvalidInputError("give exactly one of --pe and --constellation")
        samples = settings.default_samples if samples is None else samples
        seed = settings.default_seed if seed is None else seed
        use_mc = constellation is not None
        config = _run_config(subcommand="fade", constellation=constellation, axis=Axis.SNR.value,
                             grid=str(snr_grid) if use_mc else None,
                             samples=samples if use_mc else None, seed=seed if use_mc else None,
                             output=output, method=Method.MC.value if use_mc else Method.ORACLE.value,
                             fading=fading_spec, mean_snr=str(mean_grid),
                             parameters={'pe': pe_name})
        if use_mc:
            estimate = curve(load_constellation(constellation), Axis.SNR, snr_grid.values(),
                             Quantity.PE, Method.MC, samples=samples, seed=seed, settings=settings)
            pe = curve_to_function(estimate)
        else:
            pe = resolve_closed_form(pe_name).pe

        means = mean_grid.values()
        model = FadingModel.parse(fading_spec, mean_snr=float(means[0]))
        jensen = [jensen_check(pe, model.with_mean(float(g0)), settings) for g0 in means]
        convexity = avg_convexity_check(pe, model, means, settings=settings)
        scale_family = scale_family_check(model)

        checks = [
            ("scale family", None, f"{model.label}: {'yes' if scale_family else 'no'}"),
            ("Jensen gap", all(r.passed for r in jensen),
             f"smallest gap {min(r.gap for r in jensen):.3g}"),
            ("convexity in gamma_0", convexity.passed if scale_family else None,
             convexity_detail(convexity)),
        ]
        console.print(check_table(checks))
        _emit(output, lambda stream: write_fading_csv(stream, jensen, means, config.model_dump_json()))
        failed = [name for name, passed, _ in checks if passed is False]
        if failed:
            raise CheckFailure(", ".join(failed), context={'model': model.label, 'failed': failed})


@cli.command()
@click.option('--streams', required=True, callback=_parse_streams, help='Comma-separated stream SNRs')
@click.option('--pe', 'pe_name', default='bpsk-closed-form', help='Closed-form pe shared by all streams')
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None)
@click.pass_context
def allocate(ctx, streams, pe_name, output):
    """
    V-BLAST power allocation minimizing the block error rate.

    Example:
        serlab allocate --streams 10,1 --pe bpsk-closed-form
    """
    with _exit_codes():
        settings = _settings(ctx)
        config = _run_config(subcommand="allocate", output=output, method=Method.ORACLE.value,
                             parameters={'streams': list(streams), 'pe': pe_name})
        form = resolve_closed_form(pe_name)
        result = blast_allocate(form.pe, form.pe_d1, streams, settings)
        console.print(allocation_table(result))
        _emit(output, lambda stream: write_allocation_csv(stream, result, config.model_dump_json()))


@cli.command()
@click.option('--pe', 'pe_name', default='bpsk-closed-form', help='Closed form, given in SNR')
@click.option('--budget', type=float, required=True, help='Average noise power (jammer) or SNR (transmitter)')
@click.option('--mode', type=click.Choice(['none', 'suboptimal', 'optimal']), default='optimal',
              help='Jammer strategy')
@click.option('--role', type=click.Choice(['jammer', 'transmitter']), default='jammer')
@click.option('--bracket', callback=_parse_bracket, default='0.001:1000',
              help='Noise-power bracket lo:hi for the inflection search')
@click.option('--output', '-o', type=click.Path(dir_okay=False), default=None)
@click.pass_context
def jam(ctx, pe_name, budget, mode, role, bracket, output):
    """
    Two-level power/time sharing for a jammer (or, by duality, a transmitter).

    Example:
        serlab jam --pe bpsk-closed-form --budget 0.1 --mode optimal
    """
    with _exit_codes():
        settings = _settings(ctx)
        config = _run_config(subcommand="jam", output=output, method=Method.ORACLE.value,
                             parameters={'pe': pe_name, 'budget': budget, 'mode': mode,
                                         'role': role, 'bracket': list(bracket)})
        form = resolve_closed_form(pe_name)
        if role == 'transmitter':
            strategy = transmitter_sharing(form.pc, form.pc_d1, budget, settings)
            title = "Transmitter SNR sharing"
        else:
            noise_form = form.in_noise_power()
            P_0 = find_inflection_noise(noise_form.pe_d2, bracket, settings)
            console.print(f"[bold cyan]Inflection:[/bold cyan] P_0 = {P_0:.12g}")
            if mode == 'suboptimal':
                strategy = jam_suboptimal(noise_form.pe, P_0, budget, settings)
            elif mode == 'optimal':
                strategy = jam_optimal(noise_form.pe, noise_form.pe_d1, P_0, budget, settings)
            else:
                strategy = SharingStrategy(levels=((1.0, budget),), achieved_ser=float(noise_form.pe(budget)),
                                           threshold=None, kind=SharingKind.NONE, budget=budget)
            title = "Jammer power/time sharing"
        console.print(sharing_table(strategy, title))
        _emit(output, lambda stream: write_sharing_csv(stream, strategy, config.model_dump_json()))


if __name__ == '__main__':
    cli()
