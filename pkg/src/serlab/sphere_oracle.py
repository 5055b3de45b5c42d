# File: src/serlab/sphere_oracle.py
# Description: Closed-form SER and derivatives of a spherical decision region
# Author: serlab developers
# Created: 2026-10-19

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from serlab.error_handling import InvalidInputError
from serlab.ser_engine import Axis, CurveEstimate, Method, Quantity, validate_grid


@dataclass(frozen=True)
class SphereRegion:
    """
    Ball of radius R about the transmitted point.

    The correct-detection probability is a chi-square CDF with n degrees of
    freedom, which makes the ball the extremal region for every derivative
    envelope.
    """
    n: int
    radius: float

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError(f"dimension must be >= 1, got {self.n}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidInputError(f"radius must be positive and finite, got {self.radius}")

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.sum(x ** 2, axis=1) <= self.radius ** 2


def radial_kernel(n: int, u):
    """u^(n/2) e^(-u) / Gamma(n/2), evaluated in the log domain; 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    with np.errstate(divide='ignore'):
        out = np.exp(0.5 * n * np.log(u) - u - gammaln(0.5 * n))
    out = np.where(u > 0, out, 0.0)
    return float(out) if out.ndim == 0 else out


def _positive(name: str, value: float) -> None:
    if not value > 0:
        raise InvalidInputError(f"{name} must be positive, got {value}")


def _order(order: int) -> None:
    if order not in (1, 2):
        raise InvalidInputError(f"derivative order must be 1 or 2, got {order}")


def sphere_pc(s: SphereRegion, snr: float) -> float:
    """
    Pr[|xi|^2 <= R^2] = P(n/2, gamma R^2 / 2).

    Example:
        sphere_pc(SphereRegion(n=2, radius=math.sqrt(2)), 1.0)  # 1 - 1/e
    """
    _positive("SNR", snr)
    return float(gammainc(0.5 * s.n, 0.5 * snr * s.radius ** 2))


def sphere_pe(s: SphereRegion, snr: float) -> float:
    """Complement of sphere_pc, computed directly to keep tail accuracy."""
    _positive("SNR", snr)
    return float(gammaincc(0.5 * s.n, 0.5 * snr * s.radius ** 2))


def sphere_pc_d(s: SphereRegion, snr: float, order: int) -> float:
    """
    SNR derivatives of P_c at fixed radius, with u = gamma R^2 / 2:

        order 1: u^(n/2) e^(-u) / (gamma Gamma(n/2))
        order 2: u^(n/2) e^(-u) (n/2 - 1 - u) / (gamma^2 Gamma(n/2))

    Derivatives of P_e are the negations.
    """
    _positive("SNR", snr)
    _order(order)
    u = 0.5 * snr * s.radius ** 2
    kernel = radial_kernel(s.n, u)
    if order == 1:
        return kernel / snr
    return kernel * (0.5 * s.n - 1.0 - u) / snr ** 2


def sphere_pe_noise(s: SphereRegion, noise_power: float) -> float:
    _positive("noise power", noise_power)
    return float(gammaincc(0.5 * s.n, s.radius ** 2 / (2.0 * noise_power)))


def sphere_pe_noise_d(s: SphereRegion, noise_power: float, order: int) -> float:
    """
    Noise-power derivatives of P_e at fixed radius, with v = R^2 / (2 P_N):

        order 1: v^(n/2) e^(-v) / (P_N Gamma(n/2))
        order 2: v^(n/2) e^(-v) (v - (n+2)/2) / (P_N^2 Gamma(n/2))
    """
    _positive("noise power", noise_power)
    _order(order)
    v = s.radius ** 2 / (2.0 * noise_power)
    kernel = radial_kernel(s.n, v)
    if order == 1:
        return kernel / noise_power
    return kernel * (v - 0.5 * (s.n + 2)) / noise_power ** 2


class ExtremalRadii(NamedTuple):
    lower: float
    upper: float
    first_order: float


def extremal_radii(n: int, axis: Axis, value: float) -> ExtremalRadii:
    """
    Radii of the balls that attain the derivative envelopes at one grid value.

    SNR axis: R_l = sqrt((n - sqrt(2n))_+ / gamma), R_u = sqrt((n + sqrt(2n)) / gamma),
    first order sqrt(n / gamma). Noise axis: R_l = sqrt(2 b_2 P_N),
    R_u = sqrt(2 b_1 P_N), first order sqrt(n P_N).

    Example:
        extremal_radii(2, Axis.SNR, 1.0)  # ExtremalRadii(lower=0.0, upper=2.0, first_order=1.414...)
    """
    if n < 1:
        raise InvalidInputError(f"dimension must be >= 1, got {n}")
    _positive("axis value", value)
    axis = Axis(axis)
    if axis is Axis.SNR:
        root = math.sqrt(2.0 * n)
        return ExtremalRadii(
            lower=math.sqrt(max(0.0, n - root) / value),
            upper=math.sqrt((n + root) / value),
            first_order=math.sqrt(n / value),
        )
    root = math.sqrt(2.0 * (n + 2))
    b_1 = 0.5 * (n + 2 + root)
    b_2 = 0.5 * (n + 2 - root)
    return ExtremalRadii(
        lower=math.sqrt(2.0 * b_2 * value),
        upper=math.sqrt(2.0 * b_1 * value),
        first_order=math.sqrt(n * value),
    )


class RadiusRule(str, Enum):
    """How a sphere curve picks its radius at each grid value."""
    FIXED = "fixed"
    FIRST_ORDER = "first-order"
    LOWER = "lower"
    UPPER = "upper"


def _radius_at(n: int, axis: Axis, value: float, rule: RadiusRule, radius: Optional[float]) -> float:
    if rule is RadiusRule.FIXED:
        return radius
    radii = extremal_radii(n, axis, value)
    chosen = {
        RadiusRule.FIRST_ORDER: radii.first_order,
        RadiusRule.LOWER: radii.lower,
        RadiusRule.UPPER: radii.upper,
    }[rule]
    if chosen <= 0:
        raise InvalidInputError(
            f"{rule.value} radius is zero for n = {n}; the lower envelope is attained in the limit R -> 0"
        )
    return chosen


def _sphere_value(s: SphereRegion, axis: Axis, value: float, quantity: Quantity) -> float:
    if axis is Axis.SNR:
        if quantity is Quantity.PE:
            return sphere_pe(s, value)
        if quantity is Quantity.PC:
            return sphere_pc(s, value)
        return -sphere_pc_d(s, value, quantity.order)
    if quantity is Quantity.PE:
        return sphere_pe_noise(s, value)
    if quantity is Quantity.PC:
        return 1.0 - sphere_pe_noise(s, value)
    return sphere_pe_noise_d(s, value, quantity.order)


def sphere_curve(
    n: int,
    axis: Axis,
    grid: Sequence[float],
    quantity: Quantity,
    radius_rule: RadiusRule = RadiusRule.FIXED,
    radius: Optional[float] = None,
) -> CurveEstimate:
    """
    Oracle curve of P_e, P_c or a derivative of P_e for a ball whose radius
    is fixed or follows one of the extremal rules at each grid value.

    Standard errors are zero.

    Example:
        est = sphere_curve(2, Axis.SNR, [1, 10, 100], Quantity.D1, RadiusRule.FIRST_ORDER)
        # est.values == -c_2 / grid
    """
    axis, quantity, rule = Axis(axis), Quantity(quantity), RadiusRule(radius_rule)
    if quantity.per_point:
        quantity = Quantity.PE if quantity is Quantity.PEI else Quantity.PC
    grid = validate_grid(grid)
    if rule is RadiusRule.FIXED:
        if radius is None:
            raise InvalidInputError("a fixed radius rule needs --radius")
        SphereRegion(n=n, radius=radius)
    values = np.array([
        _sphere_value(SphereRegion(n=n, radius=_radius_at(n, axis, x, rule, radius)), axis, x, quantity)
        for x in grid
    ])
    return CurveEstimate(axis=axis, grid=grid, values=values, std_errors=np.zeros(grid.size),
                         quantity=quantity, method=Method.ORACLE)
