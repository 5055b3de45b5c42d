# File: src/serlab/fading.py
# Description: Scale-family fading models, fading-averaged SER and Jensen/convexity checks
# Author: serlab developers
# Created: 2026-10-19

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.special import i0e
from scipy.stats import expon, gamma, lognorm

from serlab.bounds import second_differences
from serlab.config import Settings, settings as default_settings
from serlab.error_handling import InvalidInputError, RefinementHandler
from serlab.ser_engine import Axis, CurveEstimate, validate_grid

logger = structlog.get_logger()

ScalarFunction = Callable[[float], float]

SCALE_FACTORS = (0.5, 2.0, 5.0)
# Integration pieces in t = gamma/gamma_0; the last piece runs to infinity
T_BREAKS = (0.0, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0)


class FadingFamily(str, Enum):
    RAYLEIGH = "rayleigh"
    RICE = "rice"
    NAKAGAMI = "nakagami"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class FadingModel:
    """
    Distribution of the instantaneous SNR with mean gamma_0.

    `parameter` is the Rice K-factor or the Nakagami m; Rayleigh takes none.
    For the lognormal it is p in `lognormal:p`, and the SNR then has mean
    gamma_0 and linear standard deviation 10^(p/10). It is not a shadowing
    spread in dB: `lognormal:3` means a standard deviation of about 2.0,
    whatever gamma_0 is.

    Example:
        f = FadingModel.parse("nakagami:2", mean_snr=5.0)
    """
    family: FadingFamily
    mean_snr: float
    parameter: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'family', FadingFamily(self.family))
        if not (self.mean_snr > 0 and math.isfinite(self.mean_snr)):
            raise InvalidInputError(f"mean SNR must be positive, got {self.mean_snr}")
        p = self.parameter
        if self.family is FadingFamily.RAYLEIGH:
            object.__setattr__(self, 'parameter', None)
        elif p is None:
            raise InvalidInputError(f"{self.family.value} fading needs a parameter")
        elif self.family is FadingFamily.RICE and p < 0:
            raise InvalidInputError(f"Rice K-factor must be >= 0, got {p}")
        elif self.family is FadingFamily.NAKAGAMI and p < 0.5:
            raise InvalidInputError(f"Nakagami m must be >= 0.5, got {p}")
        elif self.family is FadingFamily.LOGNORMAL and p <= 0:
            raise InvalidInputError(f"lognormal spread must be positive, got {p}")

    @classmethod
    def parse(cls, spec: str, mean_snr: float) -> 'FadingModel':
        """'rayleigh', 'rice:K', 'nakagami:m' or 'lognormal:p' (std 10^(p/10))."""
        family, _, value = spec.strip().lower().partition(':')
        try:
            family = FadingFamily(family)
        except ValueError as e:
            raise InvalidInputError(f"unknown fading family in {spec!r}") from e
        parameter = None
        if value:
            try:
                parameter = float(value)
            except ValueError as e:
                raise InvalidInputError(f"bad fading parameter in {spec!r}") from e
        return cls(family=family, mean_snr=mean_snr, parameter=parameter)

    def with_mean(self, mean_snr: float) -> 'FadingModel':
        return replace(self, mean_snr=mean_snr)

    @property
    def label(self) -> str:
        if self.parameter is None:
            return self.family.value
        return f"{self.family.value}:{self.parameter:g}"


def _lognormal_shape(f: FadingModel) -> Tuple[float, float]:
    """(s, scale) of the lognormal with mean gamma_0 and linear SNR std 10^(p/10)."""
    sigma = 10.0 ** (f.parameter / 10.0)
    s2 = math.log1p((sigma / f.mean_snr) ** 2)
    return math.sqrt(s2), f.mean_snr * math.exp(-0.5 * s2)


def fading_pdf(f: FadingModel, snr):
    """
    Density of the instantaneous SNR at snr >= 0.

    Example:
        fading_pdf(FadingModel(FadingFamily.RAYLEIGH, 2.0), 0.0)  # 0.5
    """
    x = np.asarray(snr, dtype=float)
    if np.any(x < 0):
        raise InvalidInputError("SNR must be nonnegative")
    g0 = f.mean_snr
    if f.family is FadingFamily.RAYLEIGH:
        out = expon.pdf(x, scale=g0)
    elif f.family is FadingFamily.NAKAGAMI:
        m = f.parameter
        out = gamma.pdf(x, a=m, scale=g0 / m)
    elif f.family is FadingFamily.RICE:
        k = f.parameter
        t = x / g0
        z = 2.0 * np.sqrt(k * (1.0 + k) * t)
        # I0(z) = i0e(z) e^z keeps the exponent bounded
        out = (1.0 + k) / g0 * np.exp(-k - (1.0 + k) * t + z) * i0e(z)
    else:
        s, scale = _lognormal_shape(f)
        out = lognorm.pdf(x, s, scale=scale)
    return float(out) if np.ndim(out) == 0 else out


def scale_family_check(f: FadingModel, tol: float = 1e-9) -> bool:
    """
    True iff gamma_0 * pdf(gamma; gamma_0) is a function of gamma/gamma_0 alone,
    evaluated at mean SNRs scaled by 0.5, 2 and 5.
    """
    g0 = f.mean_snr
    points = np.logspace(-2, 1, 31) * g0
    base = g0 * np.asarray(fading_pdf(f, points))
    for c in SCALE_FACTORS:
        scaled = c * g0 * np.asarray(fading_pdf(f.with_mean(c * g0), c * points))
        if np.any(np.abs(scaled - base) > tol * np.maximum(1.0, np.abs(base))):
            return False
    return True


def average_ser(pe: ScalarFunction, f: FadingModel, settings: Optional[Settings] = None) -> float:
    """
    Fading-averaged error probability with the substitution t = gamma/gamma_0:

        integral_0^inf pe(t gamma_0) gamma_0 pdf(t gamma_0) dt

    integrated piecewise by adaptive quadrature.

    Raises:
        ConvergenceError: quadrature still warns after every refinement
    """
    settings = settings or default_settings
    g0 = f.mean_snr

    def integrand(t: float) -> float:
        return float(pe(t * g0)) * g0 * float(fading_pdf(f, t * g0))

    handler = RefinementHandler()
    pieces = list(zip(T_BREAKS[:-1], T_BREAKS[1:])) + [(T_BREAKS[-1], math.inf)]
    epsabs = settings.fading_abs_tol / len(pieces)
    total = 0.0
    for lo, hi in pieces:
        total += handler.execute_with_refinement(
            operation=lambda limit, lo=lo, hi=hi: quad(integrand, lo, hi, epsabs=epsabs,
                                                       epsrel=1e-10, limit=int(limit))[0],
            operation_name="average_ser",
            initial_effort=settings.quadrature_limit,
            max_refinements=settings.quadrature_max_refinements,
        )
    return total


@dataclass(frozen=True)
class JensenReport:
    average: float
    at_mean: float
    gap: float

    @property
    def passed(self) -> bool:
        return self.gap >= -1e-8


def jensen_check(pe: ScalarFunction, f: FadingModel, settings: Optional[Settings] = None) -> JensenReport:
    """Averaged SER, SER at the mean SNR and their gap (nonnegative for convex pe)."""
    average = average_ser(pe, f, settings)
    at_mean = float(pe(f.mean_snr))
    report = JensenReport(average=average, at_mean=at_mean, gap=average - at_mean)
    logger.info("Jensen gap computed", model=f.label, mean_snr=f.mean_snr, gap=report.gap)
    return report


@dataclass(frozen=True)
class AveragedConvexityReport:
    model: str
    scale_family: bool
    mean_snrs: Tuple[float, ...]
    averages: Tuple[float, ...]
    differences: Tuple[float, ...]
    passed: bool
    worst_mean_snr: Optional[float]


def avg_convexity_check(
    pe: ScalarFunction,
    model: FadingModel,
    mean_snrs: Sequence[float],
    rel_tol: float = 1e-7,
    settings: Optional[Settings] = None,
) -> AveragedConvexityReport:
    """
    Convexity of the averaged SER in gamma_0 by second differences.

    `model` supplies the family and parameter; its mean is replaced by each
    grid value. Differences must stay above -(rel_tol * local scale) minus the
    quadrature tolerance.
    """
    settings = settings or default_settings
    grid = validate_grid(mean_snrs)
    if grid.size < 3:
        raise InvalidInputError("convexity check needs at least 3 mean SNRs")
    scale_family = scale_family_check(model)
    if not scale_family:
        logger.warning("Fading family is not a scale family; convexity is not guaranteed",
                       model=model.label)
    averages = np.array([average_ser(pe, model.with_mean(g0), settings) for g0 in grid])
    diffs, _ = second_differences(grid, averages)
    local = np.maximum(np.maximum(np.abs(averages[:-2]), np.abs(averages[1:-1])), np.abs(averages[2:]))
    tolerance = rel_tol * local + 4.0 * settings.fading_abs_tol
    margins = diffs + tolerance
    worst = int(np.argmin(margins))
    return AveragedConvexityReport(
        model=model.label,
        scale_family=scale_family,
        mean_snrs=tuple(float(g) for g in grid),
        averages=tuple(float(a) for a in averages),
        differences=tuple(float(d) for d in diffs),
        passed=bool(np.all(margins >= 0)),
        worst_mean_snr=float(grid[1 + worst]),
    )


def curve_to_function(curve: CurveEstimate) -> ScalarFunction:
    """
    Monotone interpolant of an SNR-axis error-probability curve.

    Clamped to [0, 1]; constant beyond the last grid value; linear between
    gamma = 0 (set to the largest grid value) and the first grid value.
    """
    if curve.axis is not Axis.SNR or not curve.quantity.is_probability:
        raise InvalidInputError("only SNR-axis probability curves can be interpolated")
    if curve.grid.size < 2:
        raise InvalidInputError("interpolation needs at least 2 grid points")
    x, y = curve.grid, curve.values
    spline = PchipInterpolator(x, y, extrapolate=False)
    head = float(np.max(y))

    def interpolant(snr: float) -> float:
        if snr >= x[-1]:
            value = y[-1]
        elif snr <= x[0]:
            value = np.interp(snr, [0.0, x[0]], [head, y[0]])
        else:
            value = spline(snr)
        return float(min(1.0, max(0.0, value)))

    return interpolant


def rayleigh_bpsk_average(form: str, mean_snr: float) -> float:
    """
    Exact Rayleigh average of a BPSK closed form.

    'bpsk-closed-form' is Q(sqrt(gamma)) and averages to (1 - sqrt(g0/(2+g0)))/2;
    'bpsk-ebn0-closed-form' is Q(sqrt(2 gamma)) and averages to (1 - sqrt(g0/(1+g0)))/2.
    """
    if form == "bpsk-closed-form":
        return 0.5 * (1.0 - math.sqrt(mean_snr / (2.0 + mean_snr)))
    if form == "bpsk-ebn0-closed-form":
        return 0.5 * (1.0 - math.sqrt(mean_snr / (1.0 + mean_snr)))
    raise InvalidInputError(f"no Rayleigh closed form for {form!r}")
