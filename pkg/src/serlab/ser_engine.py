# File: src/serlab/ser_engine.py
# Description: Noise model, ML detection, Monte Carlo and quadrature SER with score-weight derivatives
# Author: serlab developers
# Created: 2026-10-19

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy.integrate import quad
from scipy.spatial import HalfspaceIntersection
from scipy.stats import norm

from serlab.config import Settings, settings as default_settings
from serlab.constellation import Constellation, decision_region, ml_detect_batch
from serlab.error_handling import CapabilityError, InvalidInputError, RefinementHandler

logger = structlog.get_logger()

Membership = Callable[[np.ndarray], np.ndarray]


class Axis(str, Enum):
    """Abscissa of a curve: SNR gamma or per-dimension noise power P_N = 1/gamma."""
    SNR = "snr"
    NOISE = "noise"


class Quantity(str, Enum):
    """What a curve holds."""
    PE = "pe"     # average error probability
    PEI = "pei"   # error probability of one point
    PC = "pc"     # average probability of correct detection
    PCI = "pci"   # correct-detection probability of one point
    D1 = "d1"     # first derivative of P_e (or P_ei with an index)
    D2 = "d2"     # second derivative of P_e (or P_ei with an index)

    @property
    def order(self) -> int:
        return {Quantity.D1: 1, Quantity.D2: 2}.get(self, 0)

    @property
    def is_probability(self) -> bool:
        return self.order == 0

    @property
    def per_point(self) -> bool:
        return self in (Quantity.PEI, Quantity.PCI)


class Method(str, Enum):
    MC = "mc"
    QUADRATURE = "quadrature"
    ORACLE = "oracle"


@dataclass(frozen=True)
class NoiseModel:
    """
    White Gaussian noise with per-dimension variance P_N = 1/gamma.

    Example:
        model = NoiseModel(n=2, snr=4.0)
        model.noise_power  # 0.25
    """
    n: int
    snr: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"dimension must be positive, got {self.n}")
        if not self.snr > 0:
            raise InvalidInputError(f"SNR must be positive, got {self.snr}")

    @classmethod
    def from_noise_power(cls, n: int, noise_power: float) -> 'NoiseModel':
        if not noise_power > 0:
            raise InvalidInputError(f"noise power must be positive, got {noise_power}")
        return cls(n=n, snr=1.0 / noise_power)

    @property
    def noise_power(self) -> float:
        return 1.0 / self.snr

    @property
    def sigma(self) -> float:
        return math.sqrt(self.noise_power)


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    """
    Sampled estimate of an SER-type quantity over an SNR or noise-power grid.

    Business Purpose: The common currency between estimators, bound checks,
    inflection scans and reports. Closed forms carry zero standard errors.
    """
    axis: Axis
    grid: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    quantity: Quantity
    method: Method
    sample_count: int = 0
    seed: Optional[int] = None
    index: Optional[int] = None

    def __post_init__(self):
        for name in ('grid', 'values', 'std_errors'):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        object.__setattr__(self, 'axis', Axis(self.axis))
        object.__setattr__(self, 'quantity', Quantity(self.quantity))
        object.__setattr__(self, 'method', Method(self.method))
        validate_grid(self.grid)
        if self.values.shape != self.grid.shape or self.std_errors.shape != self.grid.shape:
            raise InvalidInputError("values and std_errors must match the grid length")
        if self.quantity.is_probability and (np.any(self.values < 0) or np.any(self.values > 1)):
            raise InvalidInputError("probability curve values must lie in [0, 1]")

    @property
    def order(self) -> int:
        return self.quantity.order


@dataclass(frozen=True)
class SerEstimate:
    """Monte Carlo SER at one SNR."""
    per_point: np.ndarray
    per_point_std: np.ndarray
    average: float
    average_std: float
    samples_per_point: Tuple[int, ...]
    seed: int


def validate_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise InvalidInputError("grid must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(grid)) or np.any(grid <= 0):
        raise InvalidInputError("grid values must be positive and finite")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly ascending")
    return grid


def noise_scale(axis: Axis, value: float) -> float:
    """Per-dimension noise standard deviation at a grid value."""
    if not value > 0:
        raise InvalidInputError(f"{Axis(axis).value} value must be positive, got {value}")
    return 1.0 / math.sqrt(value) if Axis(axis) is Axis.SNR else math.sqrt(value)


def noise_pdf(x: Sequence[float], snr: float) -> float:
    """
    Gaussian noise density (gamma/2pi)^(n/2) exp(-gamma |x|^2 / 2).

    Example:
        noise_pdf([0.0], 1.0)  # 0.3989422804014327
    """
    if not snr > 0:
        raise InvalidInputError(f"SNR must be positive, got {snr}")
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    t = np.sum(x ** 2, axis=-1)
    density = (snr / (2.0 * math.pi)) ** (n / 2.0) * np.exp(-snr * t / 2.0)
    return float(density) if np.ndim(density) == 0 else density


def _snr_weight(t, n: int, snr: float, order: int):
    if order == 1:
        return 0.5 * (n / snr - t)
    root = math.sqrt(2.0 * n)
    return 0.25 * (t - (n + root) / snr) * (t - (n - root) / snr)


def _noise_weight(t, n: int, noise_power: float, order: int):
    first = t / (2.0 * noise_power ** 2) - n / (2.0 * noise_power)
    if order == 1:
        return first
    return first ** 2 + n / (2.0 * noise_power ** 2) - t / noise_power ** 3


def _check_order(order: int) -> None:
    if order not in (1, 2):
        raise InvalidInputError(f"derivative order must be 1 or 2, got {order}")


def deriv_weight_snr(x: Sequence[float], snr: float, order: int):
    """
    Ratio (d^k p / d gamma^k) / p of the noise density.

    Order 1 is (n/gamma - |x|^2)/2; order 2 is (t - a1/gamma)(t - a2/gamma)/4
    with t = |x|^2 and a1,2 = n +- sqrt(2n).
    """
    _check_order(order)
    if not snr > 0:
        raise InvalidInputError(f"SNR must be positive, got {snr}")
    x = np.asarray(x, dtype=float)
    return _snr_weight(np.sum(x ** 2, axis=-1), x.shape[-1], snr, order)


def deriv_weight_noise(x: Sequence[float], noise_power: float, order: int):
    """
    Ratio (d^k p / dP_N^k) / p of the noise density.

    Order 1 is |x|^2/(2 P^2) - n/(2P); order 2 is that squared plus
    n/(2 P^2) - |x|^2/P^3.
    """
    _check_order(order)
    if not noise_power > 0:
        raise InvalidInputError(f"noise power must be positive, got {noise_power}")
    x = np.asarray(x, dtype=float)
    return _noise_weight(np.sum(x ** 2, axis=-1), x.shape[-1], noise_power, order)


def _weight(t, n: int, axis: Axis, value: float, order: int):
    if axis is Axis.SNR:
        return _snr_weight(t, n, value, order)
    return _noise_weight(t, n, value, order)


# ==================== Monte Carlo kernel ====================

def _partition_sizes(samples: int, chunk: int) -> List[int]:
    full, rest = divmod(samples, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _standard_normals(seed: int, stream: int, part: int, size: int, n: int) -> np.ndarray:
    """Substream for (seed, stream, partition); independent of worker count."""
    rng = np.random.default_rng([seed, stream, part])
    return rng.standard_normal((size, n))


def _region_statistics(
    membership: Membership,
    n: int,
    axis: Axis,
    grid: np.ndarray,
    orders: Sequence[int],
    samples: int,
    seed: int,
    stream: int,
    settings: Settings,
) -> Dict[str, np.ndarray]:
    """
    Hit counts and weighted sums for a region over a whole grid.

    The same standard-normal draws are reused at every grid value (common
    random numbers), scaled by the grid's noise standard deviation.
    """
    if samples < 1:
        raise InvalidInputError(f"samples must be >= 1, got {samples}")
    sizes = _partition_sizes(samples, settings.mc_chunk_size)
    scales = np.array([noise_scale(axis, v) for v in grid])

    def run_partition(part: int) -> np.ndarray:
        z = _standard_normals(seed, stream, part, sizes[part], n)
        z_sq = np.sum(z ** 2, axis=1)
        out = np.zeros((1 + 2 * len(orders), len(grid)))
        for g, (value, scale) in enumerate(zip(grid, scales)):
            inside = membership(scale * z)
            out[0, g] = np.count_nonzero(inside)
            t = scale ** 2 * z_sq
            for k, order in enumerate(orders):
                contribution = np.where(inside, _weight(t, n, axis, value, order), 0.0)
                out[1 + 2 * k, g] = contribution.sum()
                out[2 + 2 * k, g] = np.dot(contribution, contribution)
        return out

    if settings.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            partials = list(pool.map(run_partition, range(len(sizes))))
    else:
        partials = [run_partition(part) for part in range(len(sizes))]

    totals = np.zeros_like(partials[0])
    for partial in partials:
        totals = totals + partial

    stats = {'hits': totals[0]}
    for k, order in enumerate(orders):
        mean = totals[1 + 2 * k] / samples
        second = totals[2 + 2 * k] / samples
        variance = np.maximum(second - mean ** 2, 0.0)
        if samples > 1:
            variance = variance * samples / (samples - 1)
        stats[f'd{order}'] = mean
        stats[f'd{order}_se'] = np.sqrt(variance / samples)
    return stats


def _binomial(hits: np.ndarray, samples: int) -> Tuple[np.ndarray, np.ndarray]:
    p = hits / samples
    return p, np.sqrt(p * (1.0 - p) / samples)


def _point_membership(c: Constellation, i: int) -> Membership:
    anchor = c.points[i]
    return lambda x: ml_detect_batch(x + anchor, c.points) == i


def region_probability_mc(
    membership: Membership,
    n: int,
    snr: float,
    samples: int,
    seed: int,
    settings: Optional[Settings] = None,
) -> Tuple[float, float]:
    """
    Probability that Gaussian noise lands in a region, with its binomial
    standard error. The membership predicate takes an (N, n) block.

    Example:
        ball = lambda x: np.sum(x ** 2, axis=1) <= 1.0
        p, se = region_probability_mc(ball, 2, 2.0, 100_000, seed=1)
    """
    settings = settings or default_settings
    stats = _region_statistics(membership, n, Axis.SNR, np.array([float(snr)]), (),
                               samples, seed, 0, settings)
    p, se = _binomial(stats['hits'], samples)
    return float(p[0]), float(se[0])


def region_derivative_mc(
    membership: Membership,
    n: int,
    axis: Axis,
    value: float,
    order: int,
    samples: int,
    seed: int,
    settings: Optional[Settings] = None,
) -> Tuple[float, float]:
    """
    Derivative of the region probability by differentiation under the
    integral: E[weight(xi) 1{xi in region}] with xi drawn from the noise law.
    """
    _check_order(order)
    settings = settings or default_settings
    axis = Axis(axis)
    stats = _region_statistics(membership, n, axis, np.array([float(value)]), (order,),
                               samples, seed, 0, settings)
    return float(stats[f'd{order}'][0]), float(stats[f'd{order}_se'][0])


def _split_budget(c: Constellation, samples: int) -> List[int]:
    """Budget split by priors; every point keeps at least one draw."""
    return [max(1, int(round(samples * p))) for p in c.priors]


def ser_mc(
    c: Constellation,
    snr: float,
    samples: int,
    seed: int,
    settings: Optional[Settings] = None,
) -> SerEstimate:
    """
    Monte Carlo SER at one SNR, conditioned on each transmitted point.

    Args:
        c: Constellation
        snr: gamma > 0
        samples: Total budget, split across points by their priors
        seed: Base seed; point i draws from substream (seed, i, partition)

    Returns:
        SerEstimate with per-point P_ei, the prior-weighted average and
        binomial standard errors
    """
    settings = settings or default_settings
    NoiseModel(n=c.n, snr=snr)
    if samples < 1:
        raise InvalidInputError(f"samples must be >= 1, got {samples}")
    budgets = _split_budget(c, samples)
    grid = np.array([float(snr)])
    per_point = np.zeros(c.M)
    per_point_std = np.zeros(c.M)
    for i, budget in enumerate(budgets):
        stats = _region_statistics(_point_membership(c, i), c.n, Axis.SNR, grid, (),
                                   budget, seed, i, settings)
        pc, se = _binomial(stats['hits'], budget)
        per_point[i] = 1.0 - pc[0]
        per_point_std[i] = se[0]
    average = float(np.dot(c.priors, per_point))
    average_std = float(np.sqrt(np.dot(c.priors ** 2, per_point_std ** 2)))
    logger.debug("Monte Carlo SER estimated", snr=snr, samples=samples, average=average)
    return SerEstimate(per_point=per_point, per_point_std=per_point_std, average=average,
                       average_std=average_std, samples_per_point=tuple(budgets), seed=seed)


def ser_derivative_mc(
    c: Constellation,
    i: int,
    axis: Axis,
    value: float,
    order: int,
    samples: int,
    seed: int,
    settings: Optional[Settings] = None,
) -> Tuple[float, float]:
    """
    Derivative of P_ci in SNR or noise power with its standard error.

    The derivative of P_ei is the negation.

    Example:
        d, se = ser_derivative_mc(bpsk, 0, Axis.SNR, 1.0, 1, 400_000, seed=3)
        # d ~ phi(1)/2 = 0.120985
    """
    if not 0 <= i < c.M:
        raise InvalidInputError(f"index {i} out of range for M = {c.M}")
    _check_order(order)
    settings = settings or default_settings
    axis = Axis(axis)
    stats = _region_statistics(_point_membership(c, i), c.n, axis, np.array([float(value)]),
                               (order,), samples, seed, i, settings)
    return float(stats[f'd{order}'][0]), float(stats[f'd{order}_se'][0])


# ==================== Quadrature ====================

def _point_error_1d(c: Constellation, i: int, sigma: float) -> float:
    region = decision_region(c, i)
    up = region.offsets[region.normals[:, 0] > 0]
    down = region.offsets[region.normals[:, 0] < 0]
    upper = up.min() if up.size else math.inf
    lower = -down.min() if down.size else -math.inf
    return float(norm.cdf(lower / sigma) + norm.sf(upper / sigma))


def _interior_breaks(xs: np.ndarray, x_lo: float, x_hi: float, rel_tol: float = 1e-9) -> np.ndarray:
    """Vertex abscissae strictly inside (x_lo, x_hi), merged within rel_tol of the span."""
    tol = rel_tol * (x_hi - x_lo)
    inner = np.sort(xs[(xs > x_lo + tol) & (xs < x_hi - tol)])
    if inner.size == 0:
        return inner
    # clip-box corners and wedge vertices repeat up to rounding
    keep = [inner[0]]
    for x in inner[1:]:
        if x - keep[-1] > tol:
            keep.append(x)
    return np.array(keep)


def _point_error_2d(c: Constellation, i: int, sigma: float, settings: Settings) -> float:
    region = decision_region(c, i)
    radius = settings.quadrature_box_sigmas * sigma
    box = np.vstack([np.eye(2), -np.eye(2)])
    normals = np.vstack([region.normals, box])
    offsets = np.concatenate([region.offsets, np.full(4, radius)])
    polygon = HalfspaceIntersection(np.column_stack([normals, -offsets]), np.zeros(2))
    xs = polygon.intersections[:, 0]
    x_lo, x_hi = xs.min(), xs.max()

    ay = normals[:, 1]
    ceiling = ay > 1e-14
    floor = ay < -1e-14

    def strip(x: float) -> float:
        hi = np.min((offsets[ceiling] - normals[ceiling, 0] * x) / ay[ceiling])
        lo = np.max((offsets[floor] - normals[floor, 0] * x) / ay[floor])
        if hi <= lo:
            return 0.0
        return norm.pdf(x, scale=sigma) * (norm.cdf(hi / sigma) - norm.cdf(lo / sigma))

    breaks = _interior_breaks(xs, x_lo, x_hi)
    handler = RefinementHandler()
    inside = handler.execute_with_refinement(
        operation=lambda limit: quad(strip, x_lo, x_hi, epsabs=settings.quadrature_abs_tol / 10,
                                     epsrel=1e-12, limit=int(limit),
                                     points=breaks if breaks.size else None)[0],
        operation_name="ser_quadrature",
        initial_effort=max(settings.quadrature_limit, 2 * breaks.size + 50),
        max_refinements=settings.quadrature_max_refinements,
    )
    return float(min(1.0, max(0.0, 1.0 - inside)))


def point_errors_quadrature(
    c: Constellation,
    snr: float,
    settings: Optional[Settings] = None,
) -> np.ndarray:
    """Deterministic P_ei for every point (n <= 2)."""
    settings = settings or default_settings
    model = NoiseModel(n=c.n, snr=snr)
    if c.n > 2:
        raise CapabilityError(f"quadrature supports n <= 2, got n = {c.n}", context={'n': c.n})
    if c.n == 1:
        return np.array([_point_error_1d(c, i, model.sigma) for i in range(c.M)])
    return np.array([_point_error_2d(c, i, model.sigma, settings) for i in range(c.M)])


def ser_quadrature(c: Constellation, snr: float, settings: Optional[Settings] = None) -> float:
    """
    Average P_e by deterministic integration of the noise density over each
    decision region: interval CDF differences for n = 1, adaptive quadrature
    over the clipped polygon for n = 2.

    Raises:
        CapabilityError: n > 2
    """
    errors = point_errors_quadrature(c, snr, settings)
    return float(min(1.0, max(0.0, np.dot(c.priors, errors))))


# ==================== Curves ====================

def curve(
    c: Constellation,
    axis: Axis,
    grid: Sequence[float],
    quantity: Quantity,
    method: Method = Method.MC,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    index: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> CurveEstimate:
    """
    Estimate a quantity at every grid point with common random numbers.

    Args:
        c: Constellation
        axis: SNR or noise-power abscissa
        grid: Strictly ascending positive values
        quantity: pe, pei, pc, pci, d1 or d2
        method: mc or quadrature (quadrature only for probabilities, n <= 2)
        samples: Monte Carlo budget (split by priors for averages, the full
            budget for a single point)
        seed: Base seed
        index: Point index, required for pei/pci, optional for d1/d2

    Raises:
        CapabilityError: incompatible method and quantity, or quadrature for n > 2
        InvalidInputError: bad grid, missing or invalid index

    Example:
        bpsk = standard_constellation("bpsk")
        est = curve(bpsk, Axis.SNR, [0.5, 1, 2], Quantity.PE, samples=100_000, seed=7)
    """
    settings = settings or default_settings
    axis, quantity, method = Axis(axis), Quantity(quantity), Method(method)
    grid = validate_grid(grid)
    samples = settings.default_samples if samples is None else int(samples)
    seed = settings.default_seed if seed is None else int(seed)

    if quantity.per_point and index is None:
        raise InvalidInputError(f"{quantity.value} needs a point index")
    if index is not None and not 0 <= index < c.M:
        raise InvalidInputError(f"index {index} out of range for M = {c.M}")

    if method is Method.QUADRATURE:
        return _quadrature_curve(c, axis, grid, quantity, index, settings)
    if method is not Method.MC:
        raise CapabilityError(f"method {method.value} is not available for constellation curves")

    order = quantity.order
    orders = (order,) if order else ()
    points = [index] if index is not None else list(range(c.M))
    weights = [1.0] if index is not None else list(c.priors)
    budgets = [samples] if index is not None else _split_budget(c, samples)

    values = np.zeros(grid.size)
    variances = np.zeros(grid.size)
    for i, weight, budget in zip(points, weights, budgets):
        stats = _region_statistics(_point_membership(c, i), c.n, axis, grid, orders,
                                   budget, seed, i, settings)
        if order:
            # derivative of P_ei is minus the derivative of P_ci
            values -= weight * stats[f'd{order}']
            variances += weight ** 2 * stats[f'd{order}_se'] ** 2
        else:
            pc, se = _binomial(stats['hits'], budget)
            values += weight * pc
            variances += weight ** 2 * se ** 2

    if quantity in (Quantity.PE, Quantity.PEI):
        values = 1.0 - values
    if quantity.is_probability:
        values = np.clip(values, 0.0, 1.0)

    logger.info("Monte Carlo curve estimated", constellation=c.name, axis=axis.value,
                quantity=quantity.value, points=int(grid.size), samples=samples, seed=seed)
    return CurveEstimate(axis=axis, grid=grid, values=values, std_errors=np.sqrt(variances),
                         quantity=quantity, method=method, sample_count=samples,
                         seed=seed, index=index)


def _quadrature_curve(
    c: Constellation,
    axis: Axis,
    grid: np.ndarray,
    quantity: Quantity,
    index: Optional[int],
    settings: Settings,
) -> CurveEstimate:
    if not quantity.is_probability:
        raise CapabilityError(
            f"quadrature estimates probabilities only, not {quantity.value}",
            context={'quantity': quantity.value},
        )
    snrs = grid if axis is Axis.SNR else 1.0 / grid
    values = np.empty(grid.size)
    for g, snr in enumerate(snrs):
        errors = point_errors_quadrature(c, float(snr), settings)
        error = errors[index] if quantity.per_point else float(np.dot(c.priors, errors))
        values[g] = error if quantity in (Quantity.PE, Quantity.PEI) else 1.0 - error
    return CurveEstimate(axis=axis, grid=grid, values=np.clip(values, 0.0, 1.0),
                         std_errors=np.zeros(grid.size), quantity=quantity,
                         method=Method.QUADRATURE, index=index)
