"""
Allocations, threshold payments and truthfulness checks.

A deterministic mechanism is ex-post IC, IR and makes no positive transfers
exactly when its allocation is monotone and every winner pays their
threshold value. Two-bidder allocations are also described by an
AllocationPair: alpha(j) is the lowest winning index of bidder 0 in row j,
beta(i) the lowest winning index of bidder 1 in column i, and the grid
length on that axis means "never".
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from optauction.errors import (
    ConflictingSelectionError,
    ImproperPairError,
    NonMonotoneAllocationError,
    PriorValidationError,
)
from optauction.services.oracles import DensityOracle
from optauction.services.priors import JointPrior, MarginalProfitGrid, ValueGrid, suffix_revenue_table
from optauction.utils.warning_suppressor import suppress_numeric_warnings

logger = logging.getLogger(__name__)

Point = Tuple[int, ...]


@dataclass(frozen=True)
class AllocationPair:
    """Boundary curves (alpha, beta) of a two-bidder allocation."""

    shape: Tuple[int, int]
    alpha: Tuple[int, ...]
    beta: Tuple[int, ...]

    def __post_init__(self):
        n1, n2 = self.shape
        object.__setattr__(self, "alpha", tuple(int(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(int(b) for b in self.beta))
        if len(self.alpha) != n2 or len(self.beta) != n1:
            raise PriorValidationError(f"alpha needs {n2} entries and beta {n1} for shape {self.shape}")
        if any(not 0 <= a <= n1 for a in self.alpha) or any(not 0 <= b <= n2 for b in self.beta):
            raise PriorValidationError("Thresholds out of range")

    @classmethod
    def empty(cls, shape: Tuple[int, int]) -> "AllocationPair":
        n1, n2 = shape
        return cls(shape, (n1,) * n2, (n2,) * n1)

    @classmethod
    def from_matrix(cls, alloc: "AllocationMatrix") -> "AllocationPair":
        if alloc.n_bidders != 2:
            raise PriorValidationError("Allocation pairs describe two-bidder mechanisms only")
        alloc.check_monotone()
        n1, n2 = alloc.shape
        alpha = [next((i for i in range(n1) if alloc.winners[i, j] == 1), n1) for j in range(n2)]
        beta = [next((j for j in range(n2) if alloc.winners[i, j] == 2), n2) for i in range(n1)]
        return cls((n1, n2), tuple(alpha), tuple(beta))

    def region_a(self) -> List[Point]:
        return [(i, j) for j in range(self.shape[1]) for i in range(self.alpha[j], self.shape[0])]

    def region_b(self) -> List[Point]:
        return [(i, j) for i in range(self.shape[0]) for j in range(self.beta[i], self.shape[1])]

    def to_matrix(self) -> "AllocationMatrix":
        if not noncrossing(self):
            raise PriorValidationError("Allocation pair crosses: regions A and B overlap")
        winners = np.zeros(self.shape, dtype=int)
        for i, j in self.region_a():
            winners[i, j] = 1
        for i, j in self.region_b():
            winners[i, j] = 2
        return AllocationMatrix(winners)


def noncrossing(pair: AllocationPair, strict: bool = True) -> bool:
    """
    Non-crossing predicate.

    Strict (discrete points carry mass): j >= beta(i) implies i < alpha(j).
    Non-strict (continuous boundaries may touch): j >= beta(i) implies
    i <= alpha(j).
    """
    n1, _ = pair.shape
    for i in range(n1):
        for j in range(pair.beta[i], pair.shape[1]):
            a = pair.alpha[j]
            if (i >= a) if strict else (i > a):
                return False
    return True


def feasible_beta_floor(alpha: Sequence[int], n1: int) -> List[int]:
    """Lowest admissible beta(i) per column given alpha, under the strict form."""
    floors = []
    for i in range(n1):
        blocked = [j for j, a in enumerate(alpha) if a <= i]
        floors.append(max(blocked) + 1 if blocked else 0)
    return floors


@dataclass(frozen=True, eq=False)
class AllocationMatrix:
    """Winner map over the grid: 0 keeps the item, k > 0 gives it to bidder k-1."""

    winners: np.ndarray

    def __post_init__(self):
        winners = np.asarray(self.winners, dtype=int)
        if winners.min(initial=0) < 0 or winners.max(initial=0) > winners.ndim:
            raise PriorValidationError(f"Winner ids must lie in 0..{winners.ndim}")
        object.__setattr__(self, "winners", winners)

    @property
    def n_bidders(self) -> int:
        return self.winners.ndim

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.winners.shape

    def monotonicity_violation(self) -> Optional[Tuple[int, Point, Point]]:
        """First (bidder, winning point, losing point one step higher), if any."""
        for bidder in range(self.n_bidders):
            wins = self.winners == bidder + 1
            lower = np.take(wins, range(self.shape[bidder] - 1), axis=bidder)
            upper = np.take(wins, range(1, self.shape[bidder]), axis=bidder)
            bad = np.argwhere(lower & ~upper)
            if len(bad):
                low = tuple(int(x) for x in bad[0])
                high = list(low)
                high[bidder] += 1
                return bidder, low, tuple(high)
        return None

    def is_monotone(self) -> bool:
        return self.monotonicity_violation() is None

    def check_monotone(self) -> "AllocationMatrix":
        violation = self.monotonicity_violation()
        if violation:
            raise NonMonotoneAllocationError(*violation)
        return self


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Allocation, per-bidder thresholds t_i(v_-i) and payments p_i(v)."""

    grid: ValueGrid
    allocation: AllocationMatrix
    thresholds: Tuple[np.ndarray, ...]
    payments: np.ndarray

    @property
    def n_bidders(self) -> int:
        return self.grid.n_bidders

    def payment(self, point: Sequence[int], bidder: int) -> Fraction:
        return self.payments[tuple(point) + (bidder,)]

    def threshold(self, bidder: int, others: Sequence[int]) -> Optional[Fraction]:
        return self.thresholds[bidder][tuple(others)]

    def with_payments(self, payments: np.ndarray) -> "Mechanism":
        return Mechanism(self.grid, self.allocation, self.thresholds, payments)


def thresholds_and_payments(alloc: AllocationMatrix, grid: ValueGrid) -> Mechanism:
    """Threshold payments for a monotone allocation; losers pay nothing."""
    if alloc.shape != grid.shape:
        raise PriorValidationError(f"Allocation shape {alloc.shape} does not match grid {grid.shape}")
    alloc.check_monotone()

    n = grid.n_bidders
    payments = np.empty(grid.shape + (n,), dtype=object)
    payments.fill(Fraction(0))
    thresholds = []
    for bidder in range(n):
        wins = np.moveaxis(alloc.winners == bidder + 1, bidder, -1)
        table = np.empty(wins.shape[:-1], dtype=object)
        for others in np.ndindex(table.shape):
            hits = np.flatnonzero(wins[others])
            table[others] = grid.value(bidder, int(hits[0])) if len(hits) else None
        thresholds.append(table)
        for point in zip(*np.nonzero(alloc.winners == bidder + 1)):
            others = point[:bidder] + point[bidder + 1:]
            payments[point + (bidder,)] = table[others]
    logger.debug(f"Threshold payments computed for {n} bidders on grid {grid.shape}")
    return Mechanism(grid, alloc, tuple(thresholds), payments)


@dataclass(frozen=True)
class Violation:
    kind: str
    bidder: int
    point: Point
    deviation: Optional[int]
    truthful_utility: Fraction
    deviation_utility: Optional[Fraction] = None

    def to_dict(self):
        return {
            "kind": self.kind,
            "bidder": self.bidder,
            "point": list(self.point),
            "deviation": self.deviation,
            "truthful_utility": str(self.truthful_utility),
            "deviation_utility": None if self.deviation_utility is None else str(self.deviation_utility),
        }


@dataclass(frozen=True)
class TruthfulnessReport:
    ok: bool
    violation: Optional[Violation] = None
    checked: int = 0


def verify_truthful(mech: Mechanism, grid: Optional[ValueGrid] = None) -> TruthfulnessReport:
    """
    Exhaustive ex-post check over bidders, grid points and unilateral
    deviations. Per point the order is NPT, IR, IC; the first violation in
    (bidder, point, deviation) lexicographic order is reported.
    """
    grid = grid or mech.grid
    if mech.allocation.shape != grid.shape:
        raise PriorValidationError("Mechanism and grid shapes differ")
    winners = mech.allocation.winners
    checked = 0
    for bidder in range(grid.n_bidders):
        values = grid.levels[bidder]
        for point in np.ndindex(grid.shape):
            wins = winners[point] == bidder + 1
            pay = mech.payments[point + (bidder,)]
            if pay < 0:
                return TruthfulnessReport(False, Violation("NPT", bidder, point, None, -pay), checked)
            utility = (values[point[bidder]] if wins else 0) - pay
            if utility < 0:
                return TruthfulnessReport(False, Violation("IR", bidder, point, None, utility), checked)
            for dev in range(grid.shape[bidder]):
                if dev == point[bidder]:
                    continue
                other = point[:bidder] + (dev,) + point[bidder + 1:]
                dev_wins = winners[other] == bidder + 1
                dev_utility = (values[point[bidder]] if dev_wins else 0) - mech.payments[other + (bidder,)]
                checked += 1
                if dev_utility > utility:
                    return TruthfulnessReport(
                        False, Violation("IC", bidder, point, dev, utility, dev_utility), checked
                    )
    return TruthfulnessReport(True, None, checked)


def expected_revenue(mech: Mechanism, prior: JointPrior, normalize: bool = True) -> Fraction:
    if mech.allocation.shape != prior.shape:
        raise PriorValidationError(f"Mechanism shape {mech.allocation.shape} does not match prior {prior.shape}")
    total = Fraction(0)
    for point in zip(*np.nonzero(mech.allocation.winners)):
        mass = prior.masses[point]
        if mass:
            total += mass * sum(mech.payments[point], Fraction(0))
    return total / prior.total_mass if normalize else total


def is_proper(pair: AllocationPair, prior: JointPrior) -> bool:
    """Every finite threshold attains the suffix maximum of its line revenue."""
    rev_a = suffix_revenue_table(prior, 0)
    rev_b = suffix_revenue_table(prior, 1)
    n1, n2 = pair.shape
    for j, a in enumerate(pair.alpha):
        if a < n1 and rev_a[a, j] < max(rev_a[a:, j]):
            return False
    for i, b in enumerate(pair.beta):
        if b < n2 and rev_b[i, b] < max(rev_b[i, b:]):
            return False
    return True


def revenue_via_mpc(
    pair: AllocationPair,
    f: MarginalProfitGrid,
    g: MarginalProfitGrid,
    prior: Optional[JointPrior] = None,
    require_proper: bool = False,
) -> Fraction:
    """
    Sum of f over region A plus g over region B (unnormalized mass units).

    Equals the payment revenue only for proper pairs; when a prior is given
    the pair is checked and an improper pair is logged or, with
    ``require_proper``, rejected.
    """
    if f.shape != pair.shape or g.shape != pair.shape:
        raise PriorValidationError("mpc grids and allocation pair have different shapes")
    if prior is not None and not is_proper(pair, prior):
        if require_proper:
            raise ImproperPairError("Pair is not proper; mpc revenue is only a bound")
        logger.warning("revenue_via_mpc called on an improper pair; result is not the payment revenue")
    total = sum((f[p] for p in pair.region_a()), Fraction(0))
    return total + sum((g[p] for p in pair.region_b()), Fraction(0))


def _largest_argmax(values: Sequence) -> int:
    best = max(values)
    return max(k for k, v in enumerate(values) if v == best)


@dataclass(frozen=True)
class CurvePair:
    """
    Continuous boundary curves sampled at cell midpoints.

    alpha[k] is the winning threshold of bidder 0 at y = (k + 1/2)/len(alpha),
    beta[k] that of bidder 1 at x = (k + 1/2)/len(beta); inf means never.
    """

    alpha: Tuple[float, ...]
    beta: Tuple[float, ...]

    def noncrossing(self) -> bool:
        ny, nx = len(self.alpha), len(self.beta)
        for k, b in enumerate(self.beta):
            x = (k + 0.5) / nx
            for m, a in enumerate(self.alpha):
                y = (m + 0.5) / ny
                if y >= b and x > a:
                    return False
        return True


def make_proper(
    pair: Union[AllocationPair, CurvePair],
    source: Union[JointPrior, DensityOracle],
    fine: int = 4000,
) -> Union[AllocationPair, CurvePair]:
    """
    Move every threshold up to the largest suffix maximiser of its line
    revenue. Regions only shrink, so validity is preserved and payment
    revenue does not decrease.
    """
    if isinstance(pair, CurvePair):
        if not isinstance(source, DensityOracle):
            raise PriorValidationError("Continuous curves need a density oracle")
        return _make_proper_curves(pair, source, fine)
    if not isinstance(source, JointPrior):
        raise PriorValidationError("Discrete pairs need a JointPrior")
    if source.shape != pair.shape:
        raise PriorValidationError("Pair and prior shapes differ")

    n1, n2 = pair.shape
    rev_a = suffix_revenue_table(source, 0)
    rev_b = suffix_revenue_table(source, 1)
    alpha = [a if a == n1 else a + _largest_argmax(list(rev_a[a:, j])) for j, a in enumerate(pair.alpha)]
    beta = [b if b == n2 else b + _largest_argmax(list(rev_b[i, b:])) for i, b in enumerate(pair.beta)]
    result = AllocationPair(pair.shape, tuple(alpha), tuple(beta))
    if result != pair:
        logger.debug(f"make_proper moved {sum(a != b for a, b in zip(alpha, pair.alpha))} alpha "
                     f"and {sum(a != b for a, b in zip(beta, pair.beta))} beta thresholds")
    return result


@suppress_numeric_warnings
def _line_argmax(oracle: DensityOracle, other: float, start: float, fine: int) -> float:
    t = (np.arange(fine) + 0.5) / fine
    dens = oracle(t, np.full(fine, other))
    tail = np.concatenate([np.cumsum(dens[::-1])[::-1], [0.0]]) / fine
    edges = np.arange(fine + 1) / fine
    revenue = edges * tail
    first = int(np.ceil(start * fine - 1e-9))
    window = revenue[first:]
    best = window.max()
    hits = np.flatnonzero(window >= best - 1e-12 * max(1.0, abs(best)))
    return float(edges[first + hits[-1]])


def _make_proper_curves(curves: CurvePair, oracle: DensityOracle, fine: int) -> CurvePair:
    ny, nx = len(curves.alpha), len(curves.beta)
    alpha = tuple(
        a if not np.isfinite(a) else _line_argmax(oracle, (k + 0.5) / ny, a, fine)
        for k, a in enumerate(curves.alpha)
    )
    flipped = oracle.transposed()
    beta = tuple(
        b if not np.isfinite(b) else _line_argmax(flipped, (k + 0.5) / nx, b, fine)
        for k, b in enumerate(curves.beta)
    )
    return CurvePair(alpha, beta)


def monotone_closure(
    selected_u: Iterable[Point],
    selected_w: Iterable[Point],
    shape: Tuple[int, int],
) -> AllocationPair:
    """
    Close selected U points rightward and W points upward.

    Inputs must be conflict-free under weak southeast dominance (u at (i,j)
    and w at (i',j') with i <= i' and j >= j'); the closure then adds only
    points that conflict with nothing selected.
    """
    selected_u, selected_w = sorted(set(selected_u)), sorted(set(selected_w))
    n1, n2 = shape
    for u in selected_u:
        for w in selected_w:
            if u[0] <= w[0] and u[1] >= w[1]:
                raise ConflictingSelectionError(u, w)
    alpha = [n1] * n2
    beta = [n2] * n1
    for i, j in selected_u:
        alpha[j] = min(alpha[j], i)
    for i, j in selected_w:
        beta[i] = min(beta[i], j)
    return AllocationPair(shape, tuple(alpha), tuple(beta))
