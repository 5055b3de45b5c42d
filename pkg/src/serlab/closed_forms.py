# File: src/serlab/closed_forms.py
# Description: Registry of exact SER curves and derivatives used as smooth optimizer inputs
# Author: serlab developers
# Created: 2026-10-19

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr

from serlab.error_handling import InvalidInputError
from serlab.ser_engine import Axis, CurveEstimate, Method, Quantity, validate_grid
from serlab.sphere_oracle import SphereRegion, sphere_pc_d, sphere_pe

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _scalar(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def q_function(x):
    """Gaussian tail Q(x) = Pr[N(0,1) > x]."""
    return _scalar(ndtr(-np.asarray(x, dtype=float)))


def gaussian_density(x):
    x = np.asarray(x, dtype=float)
    return _scalar(np.exp(-0.5 * x ** 2) / SQRT_2PI)


class ClosedFormSer(ABC):
    """
    Exact P_e(x) with its first two derivatives on one axis.

    Business Purpose: Optimizers bisect on derivative signs and break on
    Monte Carlo noise, so they take these smooth callables instead.
    """

    name: str = "closed-form"
    axis: Axis = Axis.SNR

    @abstractmethod
    def pe(self, x):
        """Error probability at axis value x."""

    @abstractmethod
    def pe_d(self, x, order: int):
        """Derivative of P_e of the given order at axis value x."""

    def pc(self, x):
        return _scalar(1.0 - np.asarray(self.pe(x)))

    def pc_d(self, x, order: int):
        return _scalar(-np.asarray(self.pe_d(x, order)))

    def pe_d1(self, x):
        return self.pe_d(x, 1)

    def pe_d2(self, x):
        return self.pe_d(x, 2)

    def pc_d1(self, x):
        return self.pc_d(x, 1)

    def in_noise_power(self) -> 'ClosedFormSer':
        """Same curve as a function of P_N = 1/gamma."""
        if self.axis is Axis.NOISE:
            return self
        return NoisePowerSer(self)

    def curve(self, grid: Sequence[float], quantity: Quantity) -> CurveEstimate:
        """Evaluate on a grid; standard errors are zero."""
        quantity = Quantity(quantity)
        grid = validate_grid(grid)
        if quantity in (Quantity.PE, Quantity.PEI):
            values = self.pe(grid)
        elif quantity in (Quantity.PC, Quantity.PCI):
            values = self.pc(grid)
        else:
            values = self.pe_d(grid, quantity.order)
        return CurveEstimate(axis=self.axis, grid=grid, values=np.atleast_1d(values),
                             std_errors=np.zeros(grid.size), quantity=quantity,
                             method=Method.ORACLE)


def _check_order(order: int) -> None:
    if order not in (1, 2):
        raise InvalidInputError(f"derivative order must be 1 or 2, got {order}")


@dataclass(frozen=True)
class ProductRegionSer(ClosedFormSer):
    """
    Decision region that is a product of `dims` identical intervals, each
    with `sides` (1 or 2) boundaries at distance `half_distance`.

    Per dimension F(gamma) = 1 - sides * Q(d sqrt(gamma)) and P_c = F^dims.

    Example:
        bpsk = ProductRegionSer(dims=1, sides=1, half_distance=1.0)
        bpsk.pe(1.0)  # Q(1) = 0.158655...
    """
    dims: int
    sides: int
    half_distance: float
    name: str = "product-region"

    def __post_init__(self):
        if self.dims < 1 or self.sides not in (1, 2) or not self.half_distance > 0:
            raise InvalidInputError("product region needs dims >= 1, sides in {1, 2}, d > 0")

    def _factor(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        if np.any(gamma < 0):
            raise InvalidInputError("SNR must be nonnegative")
        root = np.sqrt(gamma)
        z = self.half_distance * root
        density = self.sides * self.half_distance * np.exp(-0.5 * z ** 2) / SQRT_2PI
        with np.errstate(divide='ignore', invalid='ignore'):
            first = density / (2.0 * root)
            second = -density * (z ** 2 + 1.0) / (4.0 * gamma * root)
        value = 1.0 - self.sides * ndtr(-z)
        return value, first, second

    def pe(self, gamma):
        z = self.half_distance * np.sqrt(np.asarray(gamma, dtype=float))
        if self.sides == 1:
            log_f = np.log1p(-np.exp(log_ndtr(-z)))
        else:
            log_f = np.log1p(-2.0 * ndtr(-z))
        return _scalar(-np.expm1(self.dims * log_f))

    def pe_d(self, gamma, order: int):
        _check_order(order)
        value, first, second = self._factor(gamma)
        n = self.dims
        if order == 1:
            pc_d = n * value ** (n - 1) * first
        else:
            pc_d = n * value ** (n - 1) * second
            if n > 1:
                pc_d = pc_d + n * (n - 1) * value ** (n - 2) * first ** 2
        return _scalar(-pc_d)


@dataclass(frozen=True)
class SphereSer(ClosedFormSer):
    """Ball of radius R: chi-square closed forms in the SNR."""
    n: int
    radius: float
    name: str = "sphere"

    def __post_init__(self):
        SphereRegion(n=self.n, radius=self.radius)

    def pe(self, gamma):
        region = SphereRegion(n=self.n, radius=self.radius)
        return _scalar(np.vectorize(lambda g: sphere_pe(region, g))(gamma))

    def pe_d(self, gamma, order: int):
        _check_order(order)
        region = SphereRegion(n=self.n, radius=self.radius)
        return _scalar(np.vectorize(lambda g: -sphere_pc_d(region, g, order))(gamma))


class NoisePowerSer(ClosedFormSer):
    """
    An SNR-axis closed form re-expressed in P_N = 1/gamma:

        f_N'(P)  = -f'(1/P) / P^2
        f_N''(P) = f''(1/P) / P^4 + 2 f'(1/P) / P^3
    """

    axis = Axis.NOISE

    def __init__(self, base: ClosedFormSer):
        self.base = base
        self.name = base.name

    def __repr__(self) -> str:
        return f"NoisePowerSer({self.base!r})"

    def pe(self, noise_power):
        p = np.asarray(noise_power, dtype=float)
        if np.any(p <= 0):
            raise InvalidInputError("noise power must be positive")
        return self.base.pe(1.0 / p)

    def pe_d(self, noise_power, order: int):
        _check_order(order)
        p = np.asarray(noise_power, dtype=float)
        if np.any(p <= 0):
            raise InvalidInputError("noise power must be positive")
        first = np.asarray(self.base.pe_d(1.0 / p, 1))
        if order == 1:
            return _scalar(-first / p ** 2)
        second = np.asarray(self.base.pe_d(1.0 / p, 2))
        return _scalar(second / p ** 4 + 2.0 * first / p ** 3)


_NAMED: Dict[str, Callable[[], ClosedFormSer]] = {
    "bpsk-closed-form": lambda: ProductRegionSer(1, 1, 1.0, name="bpsk-closed-form"),
    "bpsk-ebn0-closed-form": lambda: ProductRegionSer(1, 1, math.sqrt(2.0), name="bpsk-ebn0-closed-form"),
    "qpsk-closed-form": lambda: ProductRegionSer(2, 1, 1.0 / math.sqrt(2.0), name="qpsk-closed-form"),
}


def available_closed_forms() -> list:
    return sorted(_NAMED) + ["sphere:n:R", "box:n:h"]


def resolve_closed_form(name: str) -> ClosedFormSer:
    """
    Look up a registered closed form by name.

    Accepts 'bpsk-closed-form' (Q(sqrt(gamma))), 'bpsk-ebn0-closed-form'
    (Q(sqrt(2 gamma))), 'qpsk-closed-form', 'sphere:n:R' and 'box:n:h'.

    Raises:
        InvalidInputError: unknown name or malformed parameters
    """
    key = name.strip().lower()
    if key in _NAMED:
        return _NAMED[key]()
    family, _, rest = key.partition(':')
    parts = rest.split(':') if rest else []
    if family in ("sphere", "box") and len(parts) == 2:
        try:
            n = int(parts[0])
            size = float(parts[1])
        except ValueError as e:
            raise InvalidInputError(f"bad parameters in closed form {name!r}") from e
        if family == "sphere":
            return SphereSer(n=n, radius=size, name=key)
        return ProductRegionSer(dims=n, sides=2, half_distance=size, name=key)
    raise InvalidInputError(
        f"unknown closed form {name!r}; available: {', '.join(available_closed_forms())}"
    )
