# File: src/serlab/optimize.py
# Description: V-BLAST power allocation and two-level power/time sharing for jammer and transmitter
# Author: serlab developers
# Created: 2026-10-19

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import structlog

from serlab.bounds import second_differences
from serlab.config import Settings, settings as default_settings
from serlab.error_handling import (
    ConvergenceError,
    InvalidInputError,
    MultipleInflectionError,
    NoSignChangeError,
    NonConvexError,
)
from serlab.ser_engine import validate_grid

logger = structlog.get_logger()

ScalarFunction = Callable[[float], float]

MONOTONICITY_POINTS = 64
MAX_BISECTIONS = 400


# ==================== V-BLAST allocation ====================

@dataclass(frozen=True)
class AllocationResult:
    """
    Power fractions alpha_i (sum m) minimizing the block error rate.

    kkt_residual is the largest relative violation of stationarity on active
    streams and of complementary slackness on inactive ones.
    """
    fractions: Tuple[float, ...]
    multiplier: float
    objective: float
    kkt_residual: float
    snrs: Tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.fractions)


def blast_bler(pe: ScalarFunction, fractions: Sequence[float], snrs: Sequence[float]) -> float:
    """
    Block error rate 1 - prod(1 - pe(alpha_i gamma_i)) of independently
    detected streams.

    Example:
        blast_bler(bpsk.pe, [1, 1], [4, 4])  # 1 - (1 - Q(2))^2 = 0.04498...
    """
    alpha = np.asarray(fractions, dtype=float)
    gamma = np.asarray(snrs, dtype=float)
    if alpha.shape != gamma.shape or alpha.ndim != 1:
        raise InvalidInputError("fractions and SNRs must be 1-D sequences of equal length")
    if np.any(alpha < 0):
        raise InvalidInputError("power fractions must be nonnegative")
    errors = np.array([float(pe(a * g)) for a, g in zip(alpha, gamma)])
    if np.any(errors < 0) or np.any(errors > 1):
        raise InvalidInputError("pe returned a value outside [0, 1]")
    return float(-np.expm1(np.sum(np.log1p(-errors))))


class _Stream:
    """Marginal value h(alpha) = -gamma pe'(alpha gamma) / (1 - pe(alpha gamma)) of one stream."""

    def __init__(self, pe: ScalarFunction, pe_d1: ScalarFunction, snr: float, floor: float):
        self.pe = pe
        self.pe_d1 = pe_d1
        self.snr = snr
        self.floor = floor

    def marginal(self, alpha: float) -> float:
        x = max(alpha * self.snr, self.floor)
        return -self.snr * float(self.pe_d1(x)) / (1.0 - float(self.pe(x)))

    def solve(self, level: float, cap: float, tol: float) -> float:
        """alpha with marginal(alpha) = level, clamped to [0, cap]."""
        if self.marginal(0.0) <= level:
            return 0.0
        if self.marginal(cap) >= level:
            return cap
        lo, hi = 0.0, cap
        for _ in range(MAX_BISECTIONS):
            if hi - lo <= tol * cap:
                break
            mid = 0.5 * (lo + hi)
            if self.marginal(mid) > level:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


def _check_monotone(stream: _Stream, index: int, cap: float) -> None:
    alphas = np.linspace(0.0, cap, MONOTONICITY_POINTS)
    values = np.array([stream.marginal(a) for a in alphas])
    rises = np.diff(values) > 1e-9 * np.maximum(1.0, np.abs(values[:-1]))
    if np.any(rises):
        where = float(alphas[1:][rises][0])
        raise NonConvexError(
            f"marginal value of stream {index} increases near alpha = {where:.6g}; pe is not convex there",
            context={'stream': index, 'alpha': where, 'snr': stream.snr},
        )


def blast_allocate(
    pe: ScalarFunction,
    pe_d1: ScalarFunction,
    snrs: Sequence[float],
    settings: Optional[Settings] = None,
) -> AllocationResult:
    """
    Maximize sum ln(1 - pe(alpha_i gamma_i)) subject to sum alpha_i = m, alpha >= 0.

    Outer bisection on the shared multiplier lambda (log scale) drives the
    fraction sum to m; the inner bisection solves marginal_i(alpha_i) = lambda
    per stream, with alpha_i = 0 when even the first unit of power is worth
    less than lambda.

    Args:
        pe: Convex error probability as a function of SNR
        pe_d1: Its derivative
        snrs: Per-stream SNRs gamma_i > 0

    Raises:
        NonConvexError: a stream's marginal value is not nonincreasing
        InvalidInputError: empty or nonpositive SNRs

    Example:
        result = blast_allocate(bpsk.pe, bpsk.pe_d1, [10.0, 1.0])
    """
    settings = settings or default_settings
    gamma = np.asarray(snrs, dtype=float)
    if gamma.ndim != 1 or gamma.size < 1:
        raise InvalidInputError("need at least one stream SNR")
    if np.any(gamma <= 0) or np.any(~np.isfinite(gamma)):
        raise InvalidInputError("stream SNRs must be positive and finite")
    m = gamma.size
    cap = float(m)
    streams = [_Stream(pe, pe_d1, float(g), settings.allocation_floor_snr) for g in gamma]
    for i, stream in enumerate(streams):
        _check_monotone(stream, i, cap)

    if m == 1:
        fractions = np.array([1.0])
        multiplier = streams[0].marginal(1.0)
    else:
        tol = settings.allocation_inner_tol

        def allocation(level: float) -> np.ndarray:
            return np.array([s.solve(level, cap, tol) for s in streams])

        lo = max(min(s.marginal(cap) for s in streams), 1e-300)
        hi = max(s.marginal(0.0) for s in streams)
        if not hi > lo:
            raise ConvergenceError("multiplier bracket is empty", context={'lo': lo, 'hi': hi})
        fractions = allocation(lo)
        for iteration in range(MAX_BISECTIONS):
            mid = math.sqrt(lo * hi)
            fractions = allocation(mid)
            total = fractions.sum()
            if abs(total - m) <= settings.allocation_sum_tol or hi / lo - 1.0 < 1e-15:
                break
            if total > m:
                lo = mid
            else:
                hi = mid
        multiplier = mid
        total = fractions.sum()
        if total <= 0:
            raise ConvergenceError("allocation collapsed to zero power", context={'multiplier': mid})
        fractions = fractions * (m / total)
        logger.debug("Allocation multiplier found", iterations=iteration + 1, multiplier=multiplier)

    residual = 0.0
    for alpha, stream in zip(fractions, streams):
        if alpha > 0:
            residual = max(residual, abs(stream.marginal(alpha) - multiplier) / multiplier)
        else:
            residual = max(residual, max(0.0, stream.marginal(0.0) - multiplier) / multiplier)

    objective = blast_bler(pe, fractions, gamma)
    logger.info("V-BLAST allocation solved", streams=m, objective=objective, kkt_residual=residual)
    return AllocationResult(fractions=tuple(float(a) for a in fractions), multiplier=float(multiplier),
                            objective=objective, kkt_residual=float(residual),
                            snrs=tuple(float(g) for g in gamma))


# ==================== Power/time sharing ====================

class SharingKind(str, Enum):
    NONE = "none"
    ON_OFF_SUBOPTIMAL = "on_off_suboptimal"
    TANGENT_OPTIMAL = "tangent_optimal"


@dataclass(frozen=True)
class SharingStrategy:
    """
    At most two (fraction, level) pairs whose time-average equals the budget.

    achieved_ser is the time-averaged value of the shared function: the SER
    for the jammer, the probability of correct detection for the transmitter.
    """
    levels: Tuple[Tuple[float, float], ...]
    achieved_ser: float
    threshold: Optional[float]
    kind: SharingKind
    budget: float

    def __post_init__(self):
        object.__setattr__(self, 'kind', SharingKind(self.kind))
        if not 1 <= len(self.levels) <= 2:
            raise InvalidInputError("a sharing strategy has one or two levels")
        fractions = [a for a, _ in self.levels]
        if any(a <= 0 for a in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
            raise InvalidInputError("level fractions must be positive and sum to 1")
        average = sum(a * p for a, p in self.levels)
        if abs(average - self.budget) > 1e-9 * max(1.0, self.budget):
            raise InvalidInputError(f"levels average {average:.12g}, budget is {self.budget:.12g}")


def _single(f: ScalarFunction, budget: float, threshold: Optional[float]) -> SharingStrategy:
    return SharingStrategy(levels=((1.0, budget),), achieved_ser=float(f(budget)),
                           threshold=threshold, kind=SharingKind.NONE, budget=budget)


def _on_off(f: ScalarFunction, threshold: float, budget: float, off_value: float,
            kind: SharingKind) -> SharingStrategy:
    """Level `threshold` for a fraction budget/threshold of the time, 0 otherwise."""
    if budget >= threshold:
        return _single(f, budget, threshold)
    on = budget / threshold
    achieved = on * float(f(threshold)) + (1.0 - on) * off_value
    return SharingStrategy(levels=((on, threshold), (1.0 - on, 0.0)), achieved_ser=achieved,
                           threshold=threshold, kind=kind, budget=budget)


def _positive_budget(budget: float) -> None:
    if not (budget > 0 and math.isfinite(budget)):
        raise InvalidInputError(f"budget must be positive and finite, got {budget}")


def find_inflection_noise(
    pe_d2: ScalarFunction,
    bracket: Tuple[float, float],
    settings: Optional[Settings] = None,
) -> float:
    """
    Single sign change of the second derivative inside a bracket.

    A geometric pre-scan rejects brackets without a sign change or with more
    than one; bisection then refines the root to a relative tolerance.

    Raises:
        NoSignChangeError: no sign change on the pre-scan grid
        MultipleInflectionError: several sign changes on the pre-scan grid

    Example:
        find_inflection_noise(bpsk_noise.pe_d2, (0.18, 1.82))  # 1/3
    """
    settings = settings or default_settings
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi or not math.isfinite(hi):
        raise InvalidInputError(f"bracket must satisfy 0 < lo < hi < inf, got ({lo}, {hi})")
    grid = np.geomspace(lo, hi, settings.inflection_scan_points)
    signs = np.sign([float(pe_d2(x)) for x in grid])
    nonzero = np.flatnonzero(signs)
    changes = [(a, b) for a, b in zip(nonzero[:-1], nonzero[1:]) if signs[a] != signs[b]]
    if not changes:
        raise NoSignChangeError(f"second derivative keeps its sign on [{lo:g}, {hi:g}]",
                                context={'bracket': (lo, hi)})
    if len(changes) > 1:
        raise MultipleInflectionError(
            f"{len(changes)} sign changes on [{lo:g}, {hi:g}]; only a single inflection is supported",
            context={'locations': [float(grid[b]) for _, b in changes]},
        )
    a, b = changes[0]
    left, right = float(grid[a]), float(grid[b])
    left_sign = signs[a]
    for _ in range(MAX_BISECTIONS):
        if right - left <= settings.inflection_rel_tol * right:
            break
        mid = 0.5 * (left + right)
        value = np.sign(float(pe_d2(mid)))
        if value == 0:
            return mid
        if value == left_sign:
            left = mid
        else:
            right = mid
    return 0.5 * (left + right)


def jam_suboptimal(pe: ScalarFunction, P_0: float, budget: float,
                   settings: Optional[Settings] = None) -> SharingStrategy:
    """
    On/off sharing at the inflection threshold: noise power P_0 for a
    fraction budget/P_0 of the time and silence otherwise when budget < P_0,
    a single level otherwise. Achieves pe(P_0) budget/P_0 below the threshold.
    """
    settings = settings or default_settings
    _positive_budget(budget)
    if not P_0 > 0:
        raise InvalidInputError(f"threshold must be positive, got {P_0}")
    off_value = float(pe(settings.allocation_floor_snr))
    return _on_off(pe, P_0, budget, off_value, SharingKind.ON_OFF_SUBOPTIMAL)


def _tangent_gap(f: ScalarFunction, f_d1: ScalarFunction, off_value: float) -> ScalarFunction:
    """g(P) = P f'(P) - (f(P) - f(0+)); zero where the line from the origin touches f."""
    return lambda p: p * float(f_d1(p)) - (float(f(p)) - off_value)


def _tangent_root(gap: ScalarFunction, start: float, settings: Settings) -> float:
    """Root of a gap that is positive at start and turns nonpositive further out."""
    lo = start
    hi = 2.0 * start
    for _ in range(settings.tangent_max_expansions):
        if gap(hi) <= 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError(
            f"tangent threshold not bracketed after {settings.tangent_max_expansions} expansions",
            context={'start': start, 'last_high': hi, 'gap_at_high': gap(hi)},
        )
    for _ in range(MAX_BISECTIONS):
        if hi - lo <= settings.inflection_rel_tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def jam_optimal(
    pe: ScalarFunction,
    pe_d1: ScalarFunction,
    P_0: float,
    budget: float,
    settings: Optional[Settings] = None,
) -> SharingStrategy:
    """
    Optimal two-level jamming: on/off sharing at the tangent threshold P* where
    the line from (0, pe(0+)) touches pe, found by bisection from the
    inflection P_0 outwards.

    When the gap is already nonpositive at P_0 the function is concave from
    the origin on, and a single level is returned; a zero gap makes P* = P_0.

    Raises:
        ConvergenceError: pe never flattens enough to bracket P*
    """
    settings = settings or default_settings
    _positive_budget(budget)
    if not P_0 > 0:
        raise InvalidInputError(f"inflection must be positive, got {P_0}")
    off_value = float(pe(settings.allocation_floor_snr))
    gap = _tangent_gap(pe, pe_d1, off_value)
    at_inflection = gap(P_0)
    if abs(at_inflection) <= settings.concavity_tol:
        threshold = P_0
    elif at_inflection < 0:
        logger.info("Sharing cannot help: curve is concave from the origin", inflection=P_0)
        return _single(pe, budget, None)
    else:
        threshold = _tangent_root(gap, P_0, settings)
    logger.info("Tangent threshold found", inflection=P_0, threshold=threshold, budget=budget)
    return _on_off(pe, threshold, budget, off_value, SharingKind.TANGENT_OPTIMAL)


def transmitter_sharing(
    pc: ScalarFunction,
    pc_d1: ScalarFunction,
    snr_budget: float,
    settings: Optional[Settings] = None,
) -> SharingStrategy:
    """
    Best two-level SNR sharing for the transmitter, maximizing time-averaged P_c.

    The jammer construction applies with P_c in place of P_e and the SNR in
    place of the noise power. A log-spaced scan for a positive tangent gap
    decides whether P_c has a convex part at all; a concave P_c gives kind none.
    """
    settings = settings or default_settings
    _positive_budget(snr_budget)
    off_value = float(pc(settings.allocation_floor_snr))
    gap = _tangent_gap(pc, pc_d1, off_value)
    scan = np.geomspace(1e-6, settings.tangent_scan_high, settings.inflection_scan_points)
    gaps = np.array([gap(x) for x in scan])
    if not np.any(gaps > settings.concavity_tol):
        logger.info("Always on: P_c is concave on the scan range", budget=snr_budget)
        return _single(pc, snr_budget, None)
    start = float(scan[int(np.argmax(gaps))])
    threshold = _tangent_root(gap, start, settings)
    logger.info("Transmitter threshold found", threshold=threshold, budget=snr_budget)
    return _on_off(pc, threshold, snr_budget, off_value, SharingKind.TANGENT_OPTIMAL)


def sharing_grid_search(
    f: ScalarFunction,
    budget: float,
    levels: Sequence[float],
    settings: Optional[Settings] = None,
) -> SharingStrategy:
    """
    Brute-force best one- or two-level strategy over a level grid.

    Every pair P_1 <= budget <= P_2 from the grid (plus the off level 0 and
    the budget itself) is tried with the fractions that meet the budget. Two
    level optima are labelled tangent_optimal.
    """
    settings = settings or default_settings
    _positive_budget(budget)
    grid = np.unique(np.concatenate([[0.0, budget], np.asarray(levels, dtype=float)]))
    if np.any(grid < 0):
        raise InvalidInputError("sharing levels must be nonnegative")
    values = np.array([float(f(max(p, settings.allocation_floor_snr))) for p in grid])
    low = grid <= budget
    high = grid >= budget
    p1, f1 = grid[low][:, None], values[low][:, None]
    p2, f2 = grid[high][None, :], values[high][None, :]
    span = p2 - p1
    with np.errstate(divide='ignore', invalid='ignore'):
        weight = np.where(span > 0, (p2 - budget) / span, 1.0)
    score = weight * f1 + (1.0 - weight) * f2
    i, j = np.unravel_index(int(np.argmax(score)), score.shape)
    best = float(score[i, j])
    single = float(f(budget))
    if best <= single or span[i, j] == 0 or weight[i, j] in (0.0, 1.0):
        return _single(f, budget, None)
    w = float(weight[i, j])
    return SharingStrategy(levels=((w, float(p1[i, 0])), (1.0 - w, float(p2[0, j]))),
                           achieved_ser=best, threshold=float(p2[0, j]),
                           kind=SharingKind.TANGENT_OPTIMAL, budget=budget)


@dataclass(frozen=True)
class EnvelopeReport:
    budgets: Tuple[float, ...]
    values: Tuple[float, ...]
    violations: Tuple[float, ...]
    kink: Optional[float]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def violations_at_kink_only(self) -> bool:
        """Every violating interior budget has the kink in one of its adjacent cells."""
        if self.kink is None:
            return self.passed
        grid = np.asarray(self.budgets)
        for x in self.violations:
            k = int(np.searchsorted(grid, x))
            if not grid[k - 1] <= self.kink <= grid[k + 1]:
                return False
        return True


def envelope_concavity_check(
    strategy_fn: ScalarFunction,
    budgets: Sequence[float],
    tol: Optional[float] = None,
    kink: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> EnvelopeReport:
    """
    Midpoint concavity of a budget-to-SER map: at every interior grid point
    the value must not fall below the chord of its neighbours by more than tol.

    `kink` marks a known derivative discontinuity (the on/off threshold)
    so callers can tell a kink violation from a general one.
    """
    settings = settings or default_settings
    tol = settings.concavity_tol if tol is None else tol
    grid = validate_grid(budgets)
    values = np.array([float(strategy_fn(b)) for b in grid])
    diffs, _ = second_differences(grid, values)
    bad = diffs > tol
    return EnvelopeReport(budgets=tuple(float(b) for b in grid),
                          values=tuple(float(v) for v in values),
                          violations=tuple(float(b) for b in grid[1:-1][bad]), kink=kink)
