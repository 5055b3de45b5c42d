# File: src/serlab/constellation.py
# Description: Constellations, Voronoi decision polyhedra and their distance extremes
# Author: serlab developers
# Created: 2026-10-19

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from serlab.config import Settings, load_constellation_file, settings as default_settings
from serlab.error_handling import CapabilityError, InvalidInputError

logger = structlog.get_logger()

ENERGY_TOL = 1e-9
PRIOR_TOL = 1e-12
UNIT_NORM_TOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Constellation:
    """
    M points in n dimensions with their prior probabilities.

    Business Purpose: The single source of geometry for every estimator,
    regime threshold and bound check. Instances are validated on creation and
    immutable afterwards.

    Example:
        c = build_constellation([[1.0], [-1.0]])
        assert c.M == 2 and c.n == 1
    """
    points: np.ndarray
    priors: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, 'points', _frozen(self.points))
        object.__setattr__(self, 'priors', _frozen(self.priors))
        if self.points.ndim != 2:
            raise InvalidInputError("points must be an (M, n) array")
        if self.M < 2:
            raise InvalidInputError(f"need at least 2 points, got {self.M}")
        if len(self.priors) != self.M:
            raise InvalidInputError(
                f"{len(self.priors)} priors for {self.M} points"
            )
        if np.any(self.priors < 0):
            raise InvalidInputError("priors must be nonnegative")
        if abs(self.priors.sum() - 1.0) > PRIOR_TOL:
            raise InvalidInputError(f"priors sum to {self.priors.sum():.15g}, not 1")
        if pdist(self.points).min() == 0.0:
            raise InvalidInputError("constellation points must be pairwise distinct")
        if abs(self.energy - 1.0) > ENERGY_TOL:
            raise InvalidInputError(f"average energy is {self.energy:.12g}, not 1")

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def energy(self) -> float:
        """Unweighted average symbol energy (1/M) sum |s_i|^2."""
        return float(np.mean(np.sum(self.points ** 2, axis=1)))

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.priors, 1.0 / self.M, rtol=0, atol=PRIOR_TOL))


@dataclass(frozen=True, eq=False)
class DecisionRegion:
    """
    Convex polyhedron {x | A x <= b} in the frame centred on its owner point.

    Rows are a_j = (s_j - s_i)/|s_j - s_i| and b_j = |s_j - s_i|/2 for every
    neighbour j != i. Redundant rows are kept. `neighbors` holds the index j of
    every row (-1 for synthetic rows) so membership can reproduce the
    lowest-index tie rule of the detector.
    """
    owner: int
    normals: np.ndarray
    offsets: np.ndarray
    neighbors: Tuple[int, ...] = field(default=())
    settings: Settings = field(default_factory=lambda: default_settings, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'normals', _frozen(self.normals))
        object.__setattr__(self, 'offsets', _frozen(self.offsets))
        if not self.neighbors:
            object.__setattr__(self, 'neighbors', tuple([-1] * len(self.offsets)))
        if self.normals.ndim != 2 or self.normals.shape[0] != self.offsets.shape[0]:
            raise InvalidInputError("normals must be (K, n) with K offsets")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise InvalidInputError("constraint normals must have unit length")
        if np.any(self.offsets <= 0):
            raise InvalidInputError("constraint offsets must be positive")

    @classmethod
    def from_halfspaces(cls, normals, offsets, owner: int = 0) -> 'DecisionRegion':
        """Synthetic region; normals are normalized and offsets scaled with them."""
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float)
        scale = np.linalg.norm(normals, axis=1)
        if np.any(scale == 0):
            raise InvalidInputError("zero constraint normal")
        return cls(owner=owner, normals=normals / scale[:, None], offsets=offsets / scale)

    @classmethod
    def box(cls, n: int, half_width: float = 1.0) -> 'DecisionRegion':
        """Bounded box {x | |x_k| <= half_width}: d_min = h, d_max = h*sqrt(n)."""
        if n < 1 or half_width <= 0:
            raise InvalidInputError("box needs n >= 1 and a positive half width")
        eye = np.eye(n)
        return cls.from_halfspaces(np.vstack([eye, -eye]), np.full(2 * n, float(half_width)))

    @property
    def n(self) -> int:
        return self.normals.shape[1]

    @property
    def d_min(self) -> float:
        return float(self.offsets.min())

    @cached_property
    def extremes(self) -> Tuple[float, float, bool]:
        return region_extremes(self, self.settings)

    @property
    def d_max(self) -> float:
        return self.extremes[1]

    @property
    def bounded(self) -> bool:
        return self.extremes[2]

    def contains(self, x: np.ndarray) -> np.ndarray:
        """
        Vectorized membership of offsets x (shape (N, n) or (n,)).

        Rows whose neighbour has a lower index than the owner are strict, so a
        point on a shared boundary belongs to the lower-indexed region.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        slack = self.offsets[None, :] - x @ self.normals.T
        strict = np.array([0 <= j < self.owner for j in self.neighbors], dtype=bool)
        ok = np.where(strict[None, :], slack > 0, slack >= 0)
        return np.all(ok, axis=1)


ConstellationLike = Union[Sequence[Sequence[float]], np.ndarray]


def build_constellation(
    points: ConstellationLike,
    priors: Optional[Sequence[float]] = None,
    rescale: bool = False,
    name: str = "custom",
) -> Constellation:
    """
    Validate points and priors into an energy-normalized Constellation.

    Args:
        points: M points of equal dimension n
        priors: Optional prior probabilities, uniform when omitted
        rescale: Multiply all points by the common factor restoring unit
            average energy instead of rejecting unnormalized input
        name: Label carried into reports

    Returns:
        Constellation

    Raises:
        InvalidInputError: duplicate points, dimension mismatch, negative or
            unnormalized priors, zero or unnormalized energy

    Example:
        c = build_constellation([[2.0], [-2.0]], rescale=True)
        # c.points == [[1.0], [-1.0]]
    """
    rows = [np.ravel(np.asarray(p, dtype=float)) for p in points]
    if len(rows) < 2:
        raise InvalidInputError(f"need at least 2 points, got {len(rows)}")
    dims = {row.shape[0] for row in rows}
    if len(dims) != 1:
        raise InvalidInputError(f"dimension mismatch among points: {sorted(dims)}")
    array = np.vstack(rows)
    if array.shape[1] < 1:
        raise InvalidInputError("points must have at least one coordinate")
    if pdist(array).min() == 0.0:
        raise InvalidInputError("constellation points must be pairwise distinct")

    energy = float(np.mean(np.sum(array ** 2, axis=1)))
    if energy == 0.0:
        raise InvalidInputError("zero total energy")
    if abs(energy - 1.0) > ENERGY_TOL:
        if not rescale:
            raise InvalidInputError(
                f"average energy is {energy:.12g}; pass rescale=True to normalize",
                context={'energy': energy},
            )
        array = array / math.sqrt(energy)

    if priors is None:
        prior_array = np.full(array.shape[0], 1.0 / array.shape[0])
    else:
        prior_array = np.asarray(priors, dtype=float)
        if np.any(prior_array < 0):
            raise InvalidInputError("negative prior")

    return Constellation(points=array, priors=prior_array, name=name)


class ConstellationFamily(str, Enum):
    """Standard constellation families."""
    BPSK = "bpsk"
    QPSK = "qpsk"
    MPSK = "mpsk"
    MQAM = "mqam"
    ORTHOGONAL = "orthogonal"
    CUBE = "cube"


def standard_constellation(
    family: Union[ConstellationFamily, str],
    parameter: Optional[int] = None,
) -> Constellation:
    """
    Canonical energy-normalized layouts.

    MPSK(M): unit circle at angles 2*pi*k/M (M >= 2).
    MQAM(M): square grid, M a power of 4.
    ORTHOGONAL(n): standard basis vectors (n >= 2).
    CUBE(n): the 2^n corners of {+-1/sqrt(n)}^n.

    Raises:
        InvalidInputError: unknown family or unsupported parameter
    """
    try:
        family = ConstellationFamily(family)
    except ValueError as e:
        raise InvalidInputError(f"unknown constellation family: {family}") from e

    if family is ConstellationFamily.BPSK:
        return build_constellation([[1.0], [-1.0]], name="BPSK")

    if family is ConstellationFamily.QPSK:
        angles = np.deg2rad([45.0, 135.0, 225.0, 315.0])
        return build_constellation(np.column_stack([np.cos(angles), np.sin(angles)]), name="QPSK")

    if parameter is None:
        raise InvalidInputError(f"{family.value} needs a parameter")
    parameter = int(parameter)

    if family is ConstellationFamily.MPSK:
        if parameter < 2:
            raise InvalidInputError(f"MPSK needs M >= 2, got {parameter}")
        angles = 2.0 * np.pi * np.arange(parameter) / parameter
        return build_constellation(np.column_stack([np.cos(angles), np.sin(angles)]),
                                   rescale=True, name=f"{parameter}PSK")

    if family is ConstellationFamily.MQAM:
        side = math.isqrt(parameter)
        if parameter < 4 or side * side != parameter or side & (side - 1):
            raise InvalidInputError(f"MQAM needs M a power of 4, got {parameter}")
        levels = np.arange(-(side - 1), side, 2, dtype=float)
        grid = np.array([(x, y) for y in levels[::-1] for x in levels])
        return build_constellation(grid, rescale=True, name=f"{parameter}QAM")

    if family is ConstellationFamily.ORTHOGONAL:
        if parameter < 2:
            raise InvalidInputError(f"ORTHOGONAL needs n >= 2, got {parameter}")
        return build_constellation(np.eye(parameter), name=f"ORTHOGONAL({parameter})")

    if parameter < 1:
        raise InvalidInputError(f"CUBE needs n >= 1, got {parameter}")
    corners = np.array(np.meshgrid(*([[1.0, -1.0]] * parameter), indexing='ij'))
    corners = corners.reshape(parameter, -1).T / math.sqrt(parameter)
    return build_constellation(corners, name=f"CUBE({parameter})")


def parse_constellation_name(text: str) -> Constellation:
    """
    Resolve 'bpsk', 'qpsk', 'mpsk:8', 'mqam:16', 'orthogonal:3', 'cube:3'.
    """
    family, _, parameter = text.strip().lower().partition(':')
    if parameter:
        try:
            value = int(parameter)
        except ValueError as e:
            raise InvalidInputError(f"bad constellation parameter in {text!r}") from e
        return standard_constellation(family, value)
    return standard_constellation(family)


def constellation_from_file(path: str) -> Constellation:
    """Load a constellation from its JSON/YAML description."""
    spec = load_constellation_file(path)
    for point in spec.points:
        if len(point) != spec.n:
            raise InvalidInputError(
                f"point {point} does not have n = {spec.n} coordinates",
                context={'path': path},
            )
    return build_constellation(spec.points, spec.priors, rescale=spec.rescale, name=path)


def ml_detect(r: Sequence[float], c: Constellation) -> int:
    """Index of the nearest constellation point; ties go to the lowest index."""
    r = np.ravel(np.asarray(r, dtype=float))
    if r.shape[0] != c.n:
        raise InvalidInputError(f"received vector has {r.shape[0]} coordinates, expected {c.n}")
    return int(ml_detect_batch(r[None, :], c.points)[0])


def ml_detect_batch(received: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Vectorized minimum-distance detection of an (N, n) block."""
    # |r - s|^2 = |r|^2 - 2 r.s + |s|^2; |r|^2 is common to every candidate
    scores = np.sum(points ** 2, axis=1)[None, :] - 2.0 * received @ points.T
    return np.argmin(scores, axis=1)


def decision_region(c: Constellation, i: int, settings: Optional[Settings] = None) -> DecisionRegion:
    """
    Voronoi region of point i as half-spaces centred on s_i.

    Example:
        r = decision_region(standard_constellation("bpsk"), 0)
        # one row: a = (-1), b = 1
    """
    if not 0 <= i < c.M:
        raise InvalidInputError(f"index {i} out of range for M = {c.M}")
    others = [j for j in range(c.M) if j != i]
    diffs = c.points[others] - c.points[i]
    lengths = np.linalg.norm(diffs, axis=1)
    return DecisionRegion(
        owner=i,
        normals=diffs / lengths[:, None],
        offsets=lengths / 2.0,
        neighbors=tuple(others),
        settings=settings or default_settings,
    )


def _recession_cone_is_trivial(normals: np.ndarray) -> bool:
    """True when {x | A x <= 0} = {0}, tested by 2n bounded LPs."""
    n = normals.shape[1]
    zeros = np.zeros(normals.shape[0])
    for k in range(n):
        for sign in (1.0, -1.0):
            objective = np.zeros(n)
            objective[k] = -sign
            result = linprog(objective, A_ub=normals, b_ub=zeros,
                             bounds=[(-1.0, 1.0)] * n, method="highs")
            if result.status == 0 and -result.fun > 1e-9:
                return False
    return True


def _max_vertex_norm(normals: np.ndarray, offsets: np.ndarray, batch: int = 50_000) -> float:
    k, n = normals.shape
    subsets = np.array(list(combinations(range(k), n)), dtype=np.intp)
    best = 0.0
    found = False
    for start in range(0, len(subsets), batch):
        block = subsets[start:start + batch]
        systems = normals[block]
        rhs = offsets[block]
        dets = np.linalg.det(systems)
        keep = np.abs(dets) > 1e-12
        if not np.any(keep):
            continue
        vertices = np.linalg.solve(systems[keep], rhs[keep][..., None])[..., 0]
        feasible = np.all(vertices @ normals.T <= offsets[None, :] + 1e-9, axis=1)
        if np.any(feasible):
            found = True
            best = max(best, float(np.linalg.norm(vertices[feasible], axis=1).max()))
    if not found:
        raise CapabilityError("bounded region without feasible vertices; degenerate constraints")
    return best


def region_extremes(r: DecisionRegion, settings: Optional[Settings] = None) -> Tuple[float, float, bool]:
    """
    (d_min, d_max, bounded) of a decision region.

    Boundedness comes from the recession cone; d_max is the largest vertex
    norm over all feasible n-subsets of rows, +inf for unbounded regions.

    Raises:
        CapabilityError: bounded region with n or the number of rows beyond
            the enumeration limits, or more row subsets than the configured budget
    """
    settings = settings or default_settings
    k, n = r.normals.shape
    d_min = float(r.offsets.min())
    if not _recession_cone_is_trivial(r.normals):
        return d_min, math.inf, False

    if n > settings.vertex_max_dim or k + 1 > settings.vertex_max_points:
        raise CapabilityError(
            f"vertex enumeration limited to n <= {settings.vertex_max_dim} and "
            f"M <= {settings.vertex_max_points}; got n = {n}, {k} rows",
            context={'n': n, 'rows': k},
        )

    subsets = math.comb(k, n)
    if subsets > settings.vertex_max_subsets:
        raise CapabilityError(
            f"{subsets} row subsets exceed the enumeration budget {settings.vertex_max_subsets}",
            context={'subsets': subsets},
        )
    d_max = _max_vertex_norm(r.normals, r.offsets)
    logger.debug("Region extremes computed", owner=r.owner, d_min=d_min, d_max=d_max)
    return d_min, d_max, True


def global_distances(c: Constellation, settings: Optional[Settings] = None) -> Tuple[float, float]:
    """(min_i d_min,i, max_i d_max,i); d_max is +inf if any region is unbounded."""
    d_min = math.inf
    d_max = 0.0
    for i in range(c.M):
        lo, hi, _ = region_extremes(decision_region(c, i, settings), settings)
        d_min = min(d_min, lo)
        d_max = max(d_max, hi)
    return d_min, d_max
