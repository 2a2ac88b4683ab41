"""
Joint priors over value grids, suffix revenues, marginal profit contributions,
revenue curves and the cell masses of continuous density oracles.

Discrete quantities are exact Fractions held in numpy object arrays; floats
appear only on the density-oracle path.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from optauction.config import get_settings
from optauction.errors import OracleRejectedError, PriorValidationError
from optauction.services.oracles import DensityOracle
from optauction.utils.rationals import parse_rational, quantize, zeros
from optauction.utils.warning_suppressor import suppress_numeric_warnings

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValueGrid:
    """Per-bidder strictly increasing, nonnegative valuation levels."""

    levels: Tuple[Tuple[Fraction, ...], ...]

    def __post_init__(self):
        if not self.levels:
            raise PriorValidationError("Value grid needs at least one bidder")
        normalized = []
        for bidder, values in enumerate(self.levels):
            values = tuple(parse_rational(v) for v in values)
            if not values:
                raise PriorValidationError(f"Bidder {bidder} has no value levels")
            if values[0] < 0:
                raise PriorValidationError(f"Bidder {bidder} has a negative value {values[0]}")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise PriorValidationError(f"Bidder {bidder} values are not strictly increasing")
            normalized.append(values)
        object.__setattr__(self, "levels", tuple(normalized))

    @classmethod
    def from_lists(cls, lists: Sequence[Sequence]) -> "ValueGrid":
        return cls(tuple(tuple(v) for v in lists))

    @classmethod
    def integers(cls, shape: Sequence[int]) -> "ValueGrid":
        """Grid with levels 1..N_i per bidder."""
        return cls(tuple(tuple(Fraction(k) for k in range(1, n + 1)) for n in shape))

    @property
    def n_bidders(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(v) for v in self.levels)

    def value(self, bidder: int, index: int) -> Fraction:
        return self.levels[bidder][index]

    def axis_values(self, bidder: int) -> np.ndarray:
        """Levels of one bidder shaped to broadcast along that axis."""
        arr = np.array(self.levels[bidder], dtype=object)
        shape = [1] * self.n_bidders
        shape[bidder] = -1
        return arr.reshape(shape)

    def subgrid(self, bidders: Sequence[int]) -> "ValueGrid":
        return ValueGrid(tuple(self.levels[b] for b in bidders))


@dataclass(frozen=True, eq=False)
class JointPrior:
    """Dense mass function over a ValueGrid, not necessarily normalized."""

    grid: ValueGrid
    masses: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=object)
        if masses.shape != self.grid.shape:
            raise PriorValidationError(
                f"Mass array shape {masses.shape} does not match grid {self.grid.shape}"
            )
        exact = np.empty(masses.shape, dtype=object)
        for idx in np.ndindex(masses.shape):
            value = parse_rational(masses[idx])
            if value < 0:
                raise PriorValidationError(f"Negative mass {value} at {idx}", {"point": list(idx)})
            exact[idx] = value
        exact.setflags(write=False)
        object.__setattr__(self, "masses", exact)
        total = self.total_mass
        if total <= 0:
            raise PriorValidationError("Prior has zero total mass")
        if self.normalized and total != 1:
            raise PriorValidationError(f"Prior flagged normalized but total mass is {total}")

    @classmethod
    def from_lists(cls, values: Sequence[Sequence], masses, normalized: bool = False) -> "JointPrior":
        return cls(ValueGrid.from_lists(values), np.array(masses, dtype=object), normalized)

    @classmethod
    def uniform(cls, values: Sequence[Sequence]) -> "JointPrior":
        grid = ValueGrid.from_lists(values)
        size = int(np.prod(grid.shape))
        masses = np.empty(grid.shape, dtype=object)
        masses.fill(Fraction(1, size))
        return cls(grid, masses, normalized=True)

    @classmethod
    def point_mass(cls, values: Sequence[Sequence], point: Sequence[int]) -> "JointPrior":
        grid = ValueGrid.from_lists(values)
        masses = zeros(grid.shape)
        masses[tuple(point)] = Fraction(1)
        return cls(grid, masses, normalized=True)

    @classmethod
    def product(cls, values: Sequence[Sequence], marginals: Sequence[Sequence]) -> "JointPrior":
        grid = ValueGrid.from_lists(values)
        masses = np.array(Fraction(1), dtype=object)
        for marginal in marginals:
            masses = np.multiply.outer(masses, np.array([parse_rational(m) for m in marginal], dtype=object))
        return cls(grid, masses)

    @cached_property
    def total_mass(self) -> Fraction:
        return sum(self.masses.flat, Fraction(0))

    @property
    def n_bidders(self) -> int:
        return self.grid.n_bidders

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.grid.shape

    def normalize(self) -> "JointPrior":
        if self.normalized:
            return self
        return JointPrior(self.grid, self.masses / self.total_mass, normalized=True)

    def marginal(self, bidder: int) -> np.ndarray:
        axes = tuple(a for a in range(self.n_bidders) if a != bidder)
        return np.sum(self.masses, axis=axes) if axes else self.masses.copy()

    def support(self) -> List[Tuple[int, ...]]:
        return [idx for idx in np.ndindex(self.shape) if self.masses[idx] > 0]


@dataclass(frozen=True, eq=False)
class MarginalProfitGrid:
    """Nonnegative marginal profit contribution of one bidder at every grid point."""

    bidder: int
    values: np.ndarray

    def __getitem__(self, point):
        return self.values[tuple(point)]

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def total(self) -> Fraction:
        return sum(self.values.flat, Fraction(0))

    def positive_points(self) -> List[Tuple[int, ...]]:
        return [idx for idx in np.ndindex(self.shape) if self.values[idx] > 0]


def _check_bidder(prior: JointPrior, bidder: int):
    if not 0 <= bidder < prior.n_bidders:
        raise PriorValidationError(f"Bidder index {bidder} out of range for {prior.n_bidders} bidders")


def suffix_mass_table(prior: JointPrior, bidder: int) -> np.ndarray:
    """Sum of masses at or above each point along the bidder's axis."""
    _check_bidder(prior, bidder)
    flipped = np.flip(prior.masses, axis=bidder)
    return np.flip(np.cumsum(flipped, axis=bidder), axis=bidder)


def suffix_revenue_table(prior: JointPrior, bidder: int) -> np.ndarray:
    """v_i * sum_{i' >= i} phi for every grid point."""
    return suffix_mass_table(prior, bidder) * prior.grid.axis_values(bidder)


def suffix_revenue(prior: JointPrior, bidder: int, point: Sequence[int]) -> Fraction:
    _check_bidder(prior, bidder)
    point = tuple(point)
    if len(point) != prior.n_bidders or any(not 0 <= p < n for p, n in zip(point, prior.shape)):
        raise PriorValidationError(f"Point {point} outside grid {prior.shape}")
    line = list(point)
    line[bidder] = slice(point[bidder], None)
    tail = sum(prior.masses[tuple(line)], Fraction(0))
    return prior.grid.value(bidder, point[bidder]) * tail


def skyline_table(prior: JointPrior, bidder: int) -> np.ndarray:
    """Suffix maximum of the revenue table along the bidder's axis."""
    rev = np.moveaxis(suffix_revenue_table(prior, bidder), bidder, 0)
    sky = rev.copy()
    for k in range(rev.shape[0] - 2, -1, -1):
        sky[k] = np.maximum(rev[k], sky[k + 1])
    return np.moveaxis(sky, 0, bidder)


def mpc_discrete(prior: JointPrior, bidder: int) -> MarginalProfitGrid:
    """
    Marginal profit contribution along one bidder's axis.

    f(i) = max(v_i * S_i - sum_{i'>i} f(i'), 0), evaluated highest value
    first, which telescopes to the difference of consecutive skyline values.
    """
    sky = np.moveaxis(skyline_table(prior, bidder), bidder, 0)
    mpc = np.empty(sky.shape, dtype=object)
    mpc[-1] = sky[-1]
    mpc[:-1] = sky[:-1] - sky[1:]
    result = np.moveaxis(mpc, 0, bidder)
    logger.debug(f"mpc for bidder {bidder}: {sum(1 for x in result.flat if x > 0)} positive points")
    return MarginalProfitGrid(bidder=bidder, values=result)


def marginalize(prior: JointPrior, bidders: Sequence[int]) -> JointPrior:
    """Joint prior of the given bidders, in the given order."""
    bidders = tuple(bidders)
    if prior.n_bidders < 2:
        raise PriorValidationError("Marginalizing needs at least two bidders")
    if len(set(bidders)) != len(bidders):
        raise PriorValidationError(f"Duplicate bidder indices {bidders}")
    for b in bidders:
        _check_bidder(prior, b)
    others = tuple(a for a in range(prior.n_bidders) if a not in bidders)
    masses = np.sum(prior.masses, axis=others) if others else prior.masses
    kept = sorted(bidders)
    masses = np.transpose(np.asarray(masses, dtype=object), [kept.index(b) for b in bidders])
    return JointPrior(prior.grid.subgrid(bidders), masses, normalized=prior.normalized)


# --------------------------------------------------------------------------
# Revenue curves
# --------------------------------------------------------------------------

@dataclass
class RevenueCurve:
    """Revenue R as a function of sale probability q, with skyline and hull."""

    bidder: int
    fixed: Tuple[int, ...]
    q: List = field(default_factory=list)
    R: List = field(default_factory=list)
    Rprime: List = field(default_factory=list)
    Rhat: List = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "q": [float(v) for v in self.q],
                "R": [float(v) for v in self.R],
                "Rprime": [float(v) for v in self.Rprime],
                "Rhat": [float(v) for v in self.Rhat],
            }
        )

    def skyline_at(self, q) -> Union[Fraction, float]:
        """R' at an arbitrary quantile: best revenue with sale probability <= q."""
        best = 0
        for qk, rk in zip(self.q, self.R):
            if qk <= q:
                best = max(best, rk)
        return best


def upper_hull(points: Sequence[Tuple[Fraction, Fraction]]) -> List[Tuple[Fraction, Fraction]]:
    """Upper concave hull of points sorted by x; collinear middle points are dropped."""
    hull = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return hull


def _hull_values(q, R):
    hull = upper_hull(list(zip(q, R)))
    out, seg = [], 0
    for qk in q:
        while seg + 1 < len(hull) - 1 and hull[seg + 1][0] < qk:
            seg += 1
        if len(hull) == 1:
            out.append(hull[0][1])
            continue
        (x1, y1), (x2, y2) = hull[seg], hull[seg + 1]
        out.append(y1 if x2 == x1 else y1 + (y2 - y1) * (qk - x1) / (x2 - x1))
    return out


def _finish_curve(curve: RevenueCurve, points) -> RevenueCurve:
    dedup = {}
    for qk, rk in points:
        dedup[qk] = max(rk, dedup.get(qk, rk))
    qs = sorted(dedup)
    curve.q = qs
    curve.R = [dedup[qk] for qk in qs]
    running = []
    for rk in curve.R:
        running.append(max(rk, running[-1]) if running else rk)
    curve.Rprime = running
    curve.Rhat = _hull_values(curve.q, curve.R)
    return curve


def revenue_curve(
    source: Union[JointPrior, DensityOracle],
    bidder: int,
    fixed: Sequence,
    samples: int = 200,
) -> RevenueCurve:
    """
    Revenue curve of one bidder conditional on the other coordinates.

    For a JointPrior, ``fixed`` holds grid indices of the other bidders and
    every grid level is a candidate price. For a DensityOracle, ``fixed`` is
    the other bidder's value in [0,1] and prices are sampled on a uniform
    grid of ``samples`` steps.
    """
    fixed = tuple(fixed)
    if isinstance(source, DensityOracle):
        return _oracle_revenue_curve(source, bidder, fixed, samples)

    prior = source
    _check_bidder(prior, bidder)
    if len(fixed) != prior.n_bidders - 1:
        raise PriorValidationError(f"Expected {prior.n_bidders - 1} fixed coordinates, got {len(fixed)}")
    index: List = list(fixed)
    index.insert(bidder, slice(None))
    try:
        line = prior.masses[tuple(index)]
    except IndexError as exc:
        raise PriorValidationError(f"Fixed coordinates {fixed} outside grid {prior.shape}") from exc
    total = sum(line, Fraction(0))
    if total == 0:
        raise PriorValidationError(f"No mass on the line through {fixed} for bidder {bidder}")

    points = [(Fraction(0), Fraction(0))]
    tail = Fraction(0)
    for k in range(len(line) - 1, -1, -1):
        tail += line[k]
        q = tail / total
        points.append((q, prior.grid.value(bidder, k) * q))
    return _finish_curve(RevenueCurve(bidder=bidder, fixed=fixed), points)


@suppress_numeric_warnings
def _oracle_revenue_curve(oracle: DensityOracle, bidder: int, fixed, samples: int) -> RevenueCurve:
    if bidder not in (0, 1) or len(fixed) != 1 or not 0.0 <= float(fixed[0]) <= 1.0:
        raise PriorValidationError("Oracle curves need bidder 0 or 1 and one fixed value in [0,1]")
    if bidder == 1:
        oracle = oracle.transposed()
    fine = samples * 16
    t = (np.arange(fine) + 0.5) / fine
    dens = oracle(t, np.full(fine, float(fixed[0])))
    tail = np.concatenate([np.cumsum(dens[::-1])[::-1], [0.0]]) / fine
    prices = np.arange(samples + 1) / samples
    q = tail[np.arange(samples + 1) * 16] / tail[0]
    points = [(0.0, 0.0)] + [(float(qk), float(pk * qk)) for qk, pk in zip(q, prices)]
    return _finish_curve(RevenueCurve(bidder=bidder, fixed=tuple(float(v) for v in fixed)), points)


# --------------------------------------------------------------------------
# Continuous cell masses
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Subsampling:
    """Midpoint-rule sub-samples per cell and the error bound they imply."""

    resolution: int
    per_cell_x: int
    per_cell_y: int

    @classmethod
    def for_oracle(cls, oracle: DensityOracle, resolution: int) -> "Subsampling":
        settings = get_settings()
        delta = 1.0 / resolution
        smoothness = 1.0 + oracle.lipschitz
        # fine x spacing h <= delta^2 / (4 (1 + lambda)) keeps the per-cell error below delta^3 / 2
        sx = int(np.ceil(4.0 * smoothness / delta))
        sy = int(np.ceil(max(1.0, oracle.lipschitz * resolution)))
        return cls(resolution, max(1, min(sx, settings.max_subsamples_x)), max(1, min(sy, settings.max_subsamples_y)))

    def error_bound(self, oracle: DensityOracle) -> float:
        """Worst-case total quadrature error summed over all cells of one bidder."""
        delta = 1.0 / self.resolution
        h = delta / self.per_cell_x
        per_cell = 2.0 * (1.0 + oracle.lipschitz) * h * delta + oracle.lipschitz * delta ** 2 / (2.0 * self.per_cell_y)
        return per_cell * self.resolution ** 2


def _mass_strip(oracle: DensityOracle, row: int, sub: Subsampling):
    """mpc cell masses and plain cell masses for the horizontal strip ``row``."""
    n, sx, sy = sub.resolution, sub.per_cell_x, sub.per_cell_y
    delta = 1.0 / n
    h = delta / sx
    xs = (np.arange(n * sx) + 0.5) * h
    ys = delta * (row + (np.arange(sy) + 0.5) / sy)
    dens = oracle(xs[None, :], ys[:, None])
    low = float(dens.min())
    if low < oracle.floor - oracle.tolerance:
        raise OracleRejectedError(
            f"Oracle {oracle.name} returned {low:.6g} below its floor {oracle.floor:.6g}",
            {"row": row},
        )

    tail = np.concatenate([np.cumsum(dens[:, ::-1], axis=1)[:, ::-1], np.zeros((sy, 1))], axis=1) * h
    edges = np.arange(n * sx + 1) * h
    sky = np.maximum.accumulate((edges[None, :] * tail)[:, ::-1], axis=1)[:, ::-1]
    coarse = sky[:, ::sx]
    mpc = np.clip(coarse[:, :-1] - coarse[:, 1:], 0.0, None).sum(axis=0) * (delta / sy)
    cells = dens.reshape(sy, n, sx).sum(axis=(0, 2)) * h * (delta / sy)
    return mpc, cells


@suppress_numeric_warnings
def _strip_tables(oracle: DensityOracle, sub: Subsampling):
    settings = get_settings()
    strips = Parallel(n_jobs=settings.n_jobs)(
        delayed(_mass_strip)(oracle, row, sub) for row in range(sub.resolution)
    )
    # strips are rows j; transpose so tables are indexed [i, j]
    mpc = np.array([s[0] for s in strips]).T
    cells = np.array([s[1] for s in strips]).T
    return mpc, cells


def cell_mass_table(oracle: DensityOracle, bidder: int, resolution: int,
                    sub: Optional[Subsampling] = None) -> np.ndarray:
    """Float table of mpc cell masses, indexed [i, j] with i the x cell."""
    if resolution < 2:
        raise PriorValidationError(f"Resolution must be at least 2, got {resolution}")
    if bidder not in (0, 1):
        raise PriorValidationError("Continuous priors have exactly two bidders")
    sub = sub or Subsampling.for_oracle(oracle, resolution)
    if bidder == 0:
        return _strip_tables(oracle, sub)[0]
    return _strip_tables(oracle.transposed(), sub)[0].T


def cell_mass_continuous(oracle: DensityOracle, bidder: int, cell: Tuple[int, int], epsilon: float) -> float:
    """
    Integral of the marginal profit contribution over one cell.

    Computed as a difference of suffix maxima of x' * int_{x'}^1 phi, so the
    value is nonnegative by construction.
    """
    resolution = int(round(1.0 / epsilon))
    if resolution < 2 or abs(resolution * epsilon - 1.0) > 1e-9:
        raise PriorValidationError(f"epsilon must be 1/n for an integer n >= 2, got {epsilon}")
    i, j = cell
    if not (0 <= i < resolution and 0 <= j < resolution):
        raise PriorValidationError(f"Cell {cell} outside the {resolution}x{resolution} grid")
    sub = Subsampling.for_oracle(oracle, resolution)
    if bidder == 0:
        return float(_mass_strip(oracle, j, sub)[0][i])
    if bidder == 1:
        return float(_mass_strip(oracle.transposed(), i, sub)[0][j])
    raise PriorValidationError("Continuous priors have exactly two bidders")


@dataclass(frozen=True, eq=False)
class Discretization:
    """Exact (quantized) cell masses of a density oracle at one resolution."""

    resolution: int
    f: MarginalProfitGrid
    g: MarginalProfitGrid
    prior: JointPrior
    subsampling: Subsampling
    quantization_error: float


def discretize_oracle(oracle: DensityOracle, resolution: int, bits: Optional[int] = None) -> Discretization:
    """
    Cell masses for both bidders plus the lower-edge discretized prior.

    Floats are rounded to multiples of 2**-bits so the downstream min-cut and
    revenue computations stay exact.
    """
    bits = bits or get_settings().quantization_bits
    sub = Subsampling.for_oracle(oracle, resolution)
    logger.info(f"Discretizing {oracle.name} at n={resolution} "
                f"({sub.per_cell_x}x{sub.per_cell_y} sub-samples per cell)")

    f_table, cells = _strip_tables(oracle, sub)
    g_table = _strip_tables(oracle.transposed(), sub)[0].T

    def exact(table):
        out = np.empty(table.shape, dtype=object)
        for idx in np.ndindex(table.shape):
            out[idx] = quantize(max(float(table[idx]), 0.0), bits)
        return out

    levels = tuple(Fraction(i, resolution) for i in range(resolution))
    prior = JointPrior(ValueGrid((levels, levels)), exact(cells))
    # three tables of n^2 entries, each rounded by at most half a unit
    quantization_error = 3 * resolution ** 2 / float(1 << (bits + 1))
    return Discretization(
        resolution=resolution,
        f=MarginalProfitGrid(0, exact(f_table)),
        g=MarginalProfitGrid(1, exact(g_table)),
        prior=prior,
        subsampling=sub,
        quantization_error=quantization_error,
    )
