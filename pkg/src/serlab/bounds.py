# File: src/serlab/bounds.py
# Description: Universal derivative envelopes, convexity regimes and curve-level checks
# Author: serlab developers
# Created: 2026-10-19

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import structlog

from serlab.config import Settings, settings as default_settings
from serlab.constellation import Constellation, DecisionRegion, decision_region, global_distances
from serlab.error_handling import InvalidInputError
from serlab.ser_engine import Axis, CurveEstimate, Quantity
from serlab.sphere_oracle import radial_kernel

logger = structlog.get_logger()


# ==================== Coefficients ====================

@dataclass(frozen=True)
class BoundSet:
    """
    Dimension-only coefficients of the derivative envelopes of P_e:

        SNR:   -c_n/gamma <= P_e' <= 0,      beta_l/gamma^2 <= P_e'' <= beta_u/gamma^2
        noise: 0 <= P_e' <= c_n/P_N,         b_l/P_N^2 <= P_e'' <= b_u/P_N^2

    beta_l and beta_u are the values attained by balls of radius R_l and R_u.
    The `*_literal` fields hold the alternative closed form that raises a_n
    (resp. b_n) to the n/2 power; it is None where that power is not real.
    """
    n: int
    c_n: float
    beta_l: float
    beta_u: float
    b_l: float
    b_u: float
    b_1: float
    b_2: float
    a_n: float
    b_n: float
    beta_u_literal: float
    beta_l_literal: Optional[float]

    def envelope(self, axis: Axis, order: int, x) -> Tuple[np.ndarray, np.ndarray]:
        """(lower, upper) envelope of the order-th derivative of P_e at x."""
        x = np.asarray(x, dtype=float)
        axis = Axis(axis)
        if order not in (1, 2):
            raise InvalidInputError(f"derivative order must be 1 or 2, got {order}")
        zeros = np.zeros_like(x)
        if axis is Axis.SNR:
            if order == 1:
                return -self.c_n / x, zeros
            return self.beta_l / x ** 2, self.beta_u / x ** 2
        if order == 1:
            return zeros, self.c_n / x
        return self.b_l / x ** 2, self.b_u / x ** 2


def coefficients(n: int) -> BoundSet:
    """
    Envelope coefficients for dimension n.

    Example:
        bs = coefficients(2)
        bs.c_n     # 1/e
        bs.beta_u  # 4/e^2
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidInputError(f"dimension must be an integer >= 1, got {n}")
    n = int(n)
    root = math.sqrt(2.0 * n)
    a_n = 0.5 * (2.0 + root)
    b_n = 0.5 * (2.0 - root)
    u_upper = 0.5 * (n + root)
    u_lower = max(0.0, 0.5 * (n - root))

    c_n = radial_kernel(n, 0.5 * n)
    beta_u = a_n * radial_kernel(n, u_upper)
    beta_l = min(0.0, b_n) * radial_kernel(n, u_lower)

    beta_u_literal = a_n * radial_kernel(n, a_n)
    if b_n >= 0:
        beta_l_literal = b_n * radial_kernel(n, b_n)
    elif n % 2 == 0:
        beta_l_literal = b_n * b_n ** (n // 2) * math.exp(-b_n - math.lgamma(0.5 * n))
    else:
        beta_l_literal = None

    noise_root = math.sqrt(2.0 * (n + 2))
    b_1 = 0.5 * (n + 2 + noise_root)
    b_2 = 0.5 * (n + 2 - noise_root)
    scale = math.sqrt(0.5 * (n + 2))
    return BoundSet(
        n=n, c_n=c_n, beta_l=beta_l, beta_u=beta_u,
        b_l=-scale * radial_kernel(n, b_2), b_u=scale * radial_kernel(n, b_1),
        b_1=b_1, b_2=b_2, a_n=a_n, b_n=b_n,
        beta_u_literal=beta_u_literal, beta_l_literal=beta_l_literal,
    )


@dataclass(frozen=True)
class BetaDiscrepancy:
    n: int
    beta_u: float
    beta_u_literal: float
    beta_l: float
    beta_l_literal: Optional[float]

    @property
    def differs(self) -> bool:
        if abs(self.beta_u - self.beta_u_literal) > 1e-12:
            return True
        return self.beta_l_literal is None or abs(self.beta_l - self.beta_l_literal) > 1e-12


def beta_form_discrepancy(n: int) -> BetaDiscrepancy:
    """Both forms of the second-derivative SNR coefficients, logged when they differ."""
    bs = coefficients(n)
    report = BetaDiscrepancy(n=bs.n, beta_u=bs.beta_u, beta_u_literal=bs.beta_u_literal,
                             beta_l=bs.beta_l, beta_l_literal=bs.beta_l_literal)
    if report.differs:
        logger.warning("Second-derivative coefficient forms disagree; using the ball-attained form",
                       n=n, beta_u=bs.beta_u, beta_u_literal=bs.beta_u_literal,
                       beta_l=bs.beta_l, beta_l_literal=bs.beta_l_literal)
    return report


# ==================== Regimes ====================

@dataclass(frozen=True)
class RegimeInterval:
    """
    Regime edges for one decision region (index) or the whole constellation
    (index None).

    SNR axis: convex for gamma >= convex_edge, concave for gamma <= concave_edge.
    Noise axis: convex for P_N <= convex_edge, concave for P_N >= concave_edge.
    concave_edge is None when that regime is empty.
    """
    axis: Axis
    index: Optional[int]
    d_min: float
    d_max: float
    convex_edge: float
    concave_edge: Optional[float]

    @property
    def inflection_bracket(self) -> Tuple[float, float]:
        """Interval that holds every inflection point."""
        if self.axis is Axis.SNR:
            return (self.concave_edge or 0.0, self.convex_edge)
        return (self.convex_edge, self.concave_edge if self.concave_edge is not None else math.inf)


@dataclass(frozen=True)
class RegimeReport:
    axis: Axis
    n: int
    convex_everywhere: bool
    intervals: Tuple[RegimeInterval, ...]

    @property
    def overall(self) -> RegimeInterval:
        return next(r for r in self.intervals if r.index is None)

    def summary(self) -> str:
        if self.convex_everywhere:
            return f"n = {self.n}: P_e is convex for all gamma"
        g = self.overall
        symbol = "gamma" if self.axis is Axis.SNR else "P_N"
        if self.axis is Axis.SNR:
            convex = f"convex for {symbol} >= {g.convex_edge:.6g}"
            concave = (f"concave for {symbol} <= {g.concave_edge:.6g}" if g.concave_edge is not None
                       else "no concave regime (d_max = inf)")
        else:
            convex = f"convex for {symbol} <= {g.convex_edge:.6g}"
            concave = (f"concave for {symbol} >= {g.concave_edge:.6g}" if g.concave_edge is not None
                       else "no concave regime (d_max = inf)")
        lo, hi = g.inflection_bracket
        return f"{convex}; {concave}; inflection bracket [{lo:.6g}, {hi:.6g}]"


def _interval(axis: Axis, n: int, d_min: float, d_max: float, index: Optional[int]) -> RegimeInterval:
    if axis is Axis.SNR:
        root = math.sqrt(2.0 * n)
        convex_edge = (n + root) / d_min ** 2
        concave_edge = None
        if math.isfinite(d_max) and n - root > 0:
            concave_edge = (n - root) / d_max ** 2
    else:
        root = math.sqrt(2.0 * (n + 2))
        convex_edge = d_min ** 2 / (n + 2 + root)
        concave_edge = d_max ** 2 / (n + 2 - root) if math.isfinite(d_max) else None
    return RegimeInterval(axis=axis, index=index, d_min=d_min, d_max=d_max,
                          convex_edge=convex_edge, concave_edge=concave_edge)


def _regimes(c: Constellation, axis: Axis, per_point: bool, settings: Settings) -> RegimeReport:
    d_min, d_max = global_distances(c, settings)
    intervals = [_interval(axis, c.n, d_min, d_max, None)]
    if per_point:
        for i in range(c.M):
            region = decision_region(c, i, settings)
            intervals.append(_interval(axis, c.n, region.d_min, region.d_max, i))
    convex_everywhere = axis is Axis.SNR and c.n <= 2
    return RegimeReport(axis=axis, n=c.n, convex_everywhere=convex_everywhere,
                        intervals=tuple(intervals))


def snr_regimes(c: Constellation, per_point: bool = False, settings: Optional[Settings] = None) -> RegimeReport:
    """
    SNR-axis regimes: convex above (n + sqrt(2n))/d_min^2, concave below
    (n - sqrt(2n))/d_max^2. For n <= 2 the curve is convex for every gamma.

    Example:
        snr_regimes(standard_constellation("cube", 3)).overall.convex_edge  # (3 + sqrt 6) * 3
    """
    return _regimes(c, Axis.SNR, per_point, settings or default_settings)


def noise_regimes(c: Constellation, per_point: bool = False, settings: Optional[Settings] = None) -> RegimeReport:
    """Noise-power regimes: convex below d_min^2/(n+2+sqrt(2(n+2))), concave above d_max^2/(n+2-sqrt(2(n+2)))."""
    return _regimes(c, Axis.NOISE, per_point, settings or default_settings)


def region_regimes(region: DecisionRegion, axis: Axis) -> RegimeInterval:
    """Regime edges of a single (possibly synthetic) region."""
    return _interval(Axis(axis), region.n, region.d_min, region.d_max, region.owner)


# ==================== Curve checks ====================

@dataclass(frozen=True)
class BoundCheckRow:
    value: float
    estimate: float
    std_error: float
    lower: float
    upper: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class BoundCheckReport:
    axis: Axis
    order: int
    sigma_k: float
    rows: Tuple[BoundCheckRow, ...]

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def closest(self) -> BoundCheckRow:
        """Grid point of closest approach (smallest margin)."""
        return min(self.rows, key=lambda row: row.margin)


def _require_derivative(curve: CurveEstimate) -> None:
    if curve.order == 0:
        raise InvalidInputError(f"expected a derivative curve, got quantity {curve.quantity.value}")


def check_derivative_bounds(
    curve: CurveEstimate,
    bs: BoundSet,
    sigma_k: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> BoundCheckReport:
    """
    Check a derivative curve of P_e against its envelope at every grid point.

    A point passes when the estimate lies within [lower - k*se, upper + k*se]
    up to floating-point slack. The margin is min(est - lower, upper - est).

    Raises:
        InvalidInputError: curve holds a probability rather than a derivative
    """
    settings = settings or default_settings
    _require_derivative(curve)
    k = settings.bound_sigma_k if sigma_k is None else sigma_k
    lower, upper = bs.envelope(curve.axis, curve.order, curve.grid)
    rows = []
    for x, est, se, lo, hi in zip(curve.grid, curve.values, curve.std_errors, lower, upper):
        margin = min(est - lo, hi - est)
        slack = max(settings.bound_abs_tol, 1e-9 * max(abs(lo), abs(hi)))
        rows.append(BoundCheckRow(value=float(x), estimate=float(est), std_error=float(se),
                                  lower=float(lo), upper=float(hi), margin=float(margin),
                                  passed=bool(margin >= -(k * se + slack))))
    report = BoundCheckReport(axis=curve.axis, order=curve.order, sigma_k=k, rows=tuple(rows))
    closest = report.closest
    logger.info("Derivative bounds checked", axis=curve.axis.value, order=curve.order,
                passed=report.passed, closest_value=closest.value, closest_margin=closest.margin)
    return report


@dataclass(frozen=True)
class SignCheckReport:
    axis: Axis
    violations: Tuple[float, ...]

    @property
    def passed(self) -> bool:
        return not self.violations


def sign_contract_check(curve: CurveEstimate, sigma_k: Optional[float] = None,
                        settings: Optional[Settings] = None) -> SignCheckReport:
    """P_e' <= 0 in SNR and P_e' >= 0 in noise power, within k standard errors."""
    settings = settings or default_settings
    if curve.quantity is not Quantity.D1:
        raise InvalidInputError("sign contract applies to first-derivative curves")
    k = settings.bound_sigma_k if sigma_k is None else sigma_k
    sign = 1.0 if curve.axis is Axis.SNR else -1.0
    bad = sign * curve.values > k * curve.std_errors + settings.bound_abs_tol
    return SignCheckReport(axis=curve.axis, violations=tuple(float(x) for x in curve.grid[bad]))


@dataclass(frozen=True)
class LimitCheckReport:
    value: float
    estimate: float
    envelope: float
    passed: bool


def limit_check(curve: CurveEstimate, bs: BoundSet, sigma_k: Optional[float] = None,
                settings: Optional[Settings] = None) -> LimitCheckReport:
    """Magnitude at the largest grid value stays below the envelope magnitude there."""
    settings = settings or default_settings
    _require_derivative(curve)
    k = settings.bound_sigma_k if sigma_k is None else sigma_k
    lower, upper = bs.envelope(curve.axis, curve.order, curve.grid[-1:])
    envelope = float(max(abs(lower[0]), abs(upper[0])))
    estimate = float(curve.values[-1])
    passed = abs(estimate) <= envelope + k * float(curve.std_errors[-1]) + settings.bound_abs_tol
    return LimitCheckReport(value=float(curve.grid[-1]), estimate=estimate,
                            envelope=envelope, passed=bool(passed))


@dataclass(frozen=True)
class InflectionReport:
    bracket: Tuple[float, float]
    crossings: Tuple[float, ...]
    unresolved: Tuple[Tuple[float, float], ...] = field(default=())

    @property
    def count(self) -> int:
        return len(self.crossings)

    @property
    def odd(self) -> bool:
        return self.count % 2 == 1


def inflection_scan(
    curve: CurveEstimate,
    bracket: Tuple[float, float],
    sigma_k: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> InflectionReport:
    """
    Sign changes of a second-derivative curve inside a bracket.

    Only estimates whose magnitude exceeds k standard errors take part; a
    crossing between two consecutive significant estimates of opposite sign is
    located by linear interpolation. Raw sign changes next to an insignificant
    estimate are listed as unresolved and not counted.

    Raises:
        InvalidInputError: not a second-derivative curve, or the bracket holds
            no grid point
    """
    settings = settings or default_settings
    if curve.quantity is not Quantity.D2:
        raise InvalidInputError("inflection scan needs a second-derivative curve")
    k = settings.inflection_sigma_k if sigma_k is None else sigma_k
    lo, hi = float(bracket[0]), float(bracket[1])
    inside = (curve.grid >= lo) & (curve.grid <= hi)
    if not np.any(inside):
        raise InvalidInputError(
            f"bracket [{lo:g}, {hi:g}] holds no grid point of [{curve.grid[0]:g}, {curve.grid[-1]:g}]"
        )
    x = curve.grid[inside]
    y = curve.values[inside]
    se = curve.std_errors[inside]
    significant = (np.abs(y) > k * se) & (y != 0)

    crossings: List[float] = []
    kept = np.flatnonzero(significant)
    for a, b in zip(kept[:-1], kept[1:]):
        if np.sign(y[a]) != np.sign(y[b]):
            crossings.append(float(x[a] - y[a] * (x[b] - x[a]) / (y[b] - y[a])))

    unresolved = []
    for a in range(len(x) - 1):
        if np.sign(y[a]) * np.sign(y[a + 1]) < 0 and not (significant[a] and significant[a + 1]):
            unresolved.append((float(x[a]), float(x[a + 1])))

    report = InflectionReport(bracket=(lo, hi), crossings=tuple(crossings), unresolved=tuple(unresolved))
    logger.info("Inflection scan completed", crossings=report.count, odd=report.odd,
                unresolved=len(unresolved))
    return report


def second_differences(grid: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Chord-minus-value at interior points of a non-uniform grid:

        w y_{k-1} + (1 - w) y_{k+1} - y_k,  w = (x_{k+1} - x_k)/(x_{k+1} - x_{k-1})

    Nonpositive for concave data, nonnegative for convex data. Returns the
    differences and the weights w.
    """
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 3:
        return np.zeros(0), np.zeros(0)
    w = (x[2:] - x[1:-1]) / (x[2:] - x[:-2])
    return w * y[:-2] + (1.0 - w) * y[2:] - y[1:-1], w


@dataclass(frozen=True)
class LogConcavityReport:
    grid: Tuple[float, ...]
    differences: Tuple[float, ...]
    tolerances: Tuple[float, ...]
    passed: bool
    worst_value: Optional[float]
    worst_margin: float


def log_concavity_check(
    curve: CurveEstimate,
    sigma_k: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> LogConcavityReport:
    """
    Discrete log-concavity of a P_c or P_ci curve in SNR.

    The second differences of log P_c must not exceed k times their
    propagated standard error (delta method, se/P_c per point).

    Raises:
        InvalidInputError: wrong quantity or axis, or nonpositive values
    """
    settings = settings or default_settings
    if curve.quantity not in (Quantity.PC, Quantity.PCI) or curve.axis is not Axis.SNR:
        raise InvalidInputError("log-concavity applies to P_c curves on the SNR axis")
    if np.any(curve.values <= 0):
        raise InvalidInputError("log-concavity needs strictly positive P_c values")
    k = settings.log_concavity_sigma_k if sigma_k is None else sigma_k
    logs = np.log(curve.values)
    log_se = curve.std_errors / curve.values
    diffs, w = second_differences(curve.grid, logs)
    spread = np.sqrt(w ** 2 * log_se[:-2] ** 2 + log_se[1:-1] ** 2 + (1.0 - w) ** 2 * log_se[2:] ** 2)
    tolerances = k * spread + settings.bound_abs_tol
    margins = tolerances - diffs
    worst = int(np.argmin(margins)) if margins.size else None
    return LogConcavityReport(
        grid=tuple(float(v) for v in curve.grid[1:-1]),
        differences=tuple(float(d) for d in diffs),
        tolerances=tuple(float(t) for t in tolerances),
        passed=bool(np.all(margins >= 0)),
        worst_value=float(curve.grid[1 + worst]) if worst is not None else None,
        worst_margin=float(margins[worst]) if worst is not None else math.inf,
    )
