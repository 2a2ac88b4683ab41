"""
n-bidder auctions: exhaustive optimum for small grids, the best two-bidder
sub-auction and Myerson's auction for independent priors.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from optauction.config import get_settings
from optauction.errors import PriorValidationError, SizeGuardError, SolverInvariantError
from optauction.services.mechanism import (
    AllocationMatrix,
    Mechanism,
    expected_revenue,
    thresholds_and_payments,
)
from optauction.services.priors import JointPrior, marginalize, suffix_revenue_table, upper_hull
from optauction.services.solve2 import Solve2Result, solve_discrete2

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MultiResult:
    revenue: Fraction
    mechanism: Mechanism
    explored: int = 0


@dataclass
class _Line:
    bidder: int
    points: List[Tuple[int, ...]]
    candidates: List[Tuple[int, Fraction]]

    @property
    def best(self) -> Fraction:
        return self.candidates[0][1]


def _threshold_candidates(revenues: List[Fraction]) -> List[Tuple[int, Fraction]]:
    """
    Thresholds worth trying on one line, best revenue first.

    A threshold that is not the largest maximiser of its suffix can be
    raised to one without losing revenue while only shrinking the winning
    set, so only strict suffix records (plus 'never') remain.
    """
    never = len(revenues)
    out = [(never, Fraction(0))]
    record = Fraction(0)
    for t in range(never - 1, -1, -1):
        if revenues[t] > record:
            record = revenues[t]
            out.append((t, revenues[t]))
    return sorted(out, key=lambda c: (-c[1], c[0]))


def _lines(prior: JointPrior) -> List[_Line]:
    lines = []
    for bidder in range(prior.n_bidders):
        rev = suffix_revenue_table(prior, bidder)
        other_shape = prior.shape[:bidder] + prior.shape[bidder + 1:]
        for others in np.ndindex(other_shape):
            points = [others[:bidder] + (k,) + others[bidder:] for k in range(prior.shape[bidder])]
            lines.append(_Line(bidder, points, _threshold_candidates([rev[p] for p in points])))
    return lines


def brute_force_n(prior: JointPrior, limit: Optional[int] = None) -> MultiResult:
    """
    Exact optimal deterministic ex-post IC/IR auction by branch and bound.

    A monotone allocation is a threshold per (bidder, line of the others'
    values); its revenue is the sum of the line revenues. Lines are fixed
    in lexicographic (bidder, others) order, the bound is the sum of the
    best remaining line revenues and a threshold is rejected as soon as it
    would hand an already-won point to a second bidder.
    """
    settings = get_settings()
    limit = limit or settings.brute_force_points
    size = int(np.prod(prior.shape))
    if size > limit:
        raise SizeGuardError(
            f"brute_force_n refuses a grid of {size} points (limit {limit})",
            {"shape": list(prior.shape), "limit": limit},
        )

    lines = _lines(prior)
    remaining = [Fraction(0)] * (len(lines) + 1)
    for k in range(len(lines) - 1, -1, -1):
        remaining[k] = remaining[k + 1] + lines[k].best

    owner = np.zeros(prior.shape, dtype=int)
    best = {"value": Fraction(-1), "owner": owner.copy()}
    explored = 0

    def search(k: int, value: Fraction):
        nonlocal explored
        explored += 1
        if value + remaining[k] <= best["value"]:
            return
        if k == len(lines):
            best["value"], best["owner"] = value, owner.copy()
            return
        line = lines[k]
        for t, revenue in line.candidates:
            claimed = line.points[t:]
            if any(owner[p] for p in claimed):
                continue
            for p in claimed:
                owner[p] = line.bidder + 1
            search(k + 1, value + revenue)
            for p in claimed:
                owner[p] = 0

    search(0, Fraction(0))
    mechanism = thresholds_and_payments(AllocationMatrix(best["owner"]), prior.grid)
    revenue = expected_revenue(mechanism, prior)
    if revenue != best["value"] / prior.total_mass:
        raise SolverInvariantError("Line revenues disagree with the payment revenue")
    logger.info(f"brute_force_n on {prior.shape}: revenue {revenue} after {explored} nodes")
    return MultiResult(revenue, mechanism, explored)


@dataclass(frozen=True, eq=False)
class BestPairResult:
    pair: Tuple[int, int]
    revenue: Fraction
    mechanism: Mechanism
    pair_result: Solve2Result
    table: Dict[Tuple[int, int], Fraction] = field(default_factory=dict)


def lift_pair_mechanism(pair_result: Solve2Result, pair: Tuple[int, int], prior: JointPrior) -> Mechanism:
    """Extend a two-bidder mechanism to all bidders; the rest never win."""
    a, b = pair
    sub = pair_result.mechanism.allocation.winners
    winners = np.zeros(prior.shape, dtype=int)
    for point in np.ndindex(prior.shape):
        w = sub[point[a], point[b]]
        winners[point] = 0 if w == 0 else (a + 1 if w == 1 else b + 1)
    return thresholds_and_payments(AllocationMatrix(winners), prior.grid)


def best_pair(prior: JointPrior) -> BestPairResult:
    """Most profitable two-bidder auction, lifted to the full bidder set."""
    if prior.n_bidders < 2:
        raise PriorValidationError("best_pair needs at least two bidders")
    pairs = list(itertools.combinations(range(prior.n_bidders), 2))
    results = Parallel(n_jobs=get_settings().n_jobs)(
        delayed(solve_discrete2)(marginalize(prior, pair)) for pair in pairs
    )
    table = {pair: res.revenue for pair, res in zip(pairs, results)}
    # max keeps the first of equal revenues, i.e. the lexicographically smallest pair
    k = max(range(len(pairs)), key=lambda idx: results[idx].revenue)
    pair, chosen = pairs[k], results[k]

    mechanism = lift_pair_mechanism(chosen, pair, prior)
    revenue = expected_revenue(mechanism, prior)
    if revenue != chosen.revenue:
        raise SolverInvariantError(
            "Lifted mechanism revenue differs from the pair revenue",
            {"pair": list(pair), "lifted": str(revenue), "pair_revenue": str(chosen.revenue)},
        )
    logger.info(f"best_pair chose bidders {pair} with revenue {revenue}")
    return BestPairResult(pair, revenue, mechanism, chosen, table)


# --------------------------------------------------------------------------
# Independent priors
# --------------------------------------------------------------------------

def is_independent(prior: JointPrior) -> bool:
    normalized = prior.normalize()
    marginals = [normalized.marginal(k) for k in range(prior.n_bidders)]
    for point in np.ndindex(prior.shape):
        expected = Fraction(1)
        for k, idx in enumerate(point):
            expected *= marginals[k][idx]
        if normalized.masses[point] != expected:
            return False
    return True


def ironed_virtual_values(values, marginal) -> List[Optional[Fraction]]:
    """
    Ironed virtual value per valuation level.

    Slopes of the concave hull of the revenue curve in quantile space.
    A zero-probability level copies the closest lower level with mass, so a
    threshold never lands on it; levels below all mass get None (never win).
    """
    n = len(values)
    survival = [sum(marginal[i:], Fraction(0)) for i in range(n)] + [Fraction(0)]
    points = [(Fraction(0), Fraction(0))] + [(survival[i], values[i] * survival[i]) for i in range(n - 1, -1, -1)]
    dedup: Dict[Fraction, Fraction] = {}
    for q, r in points:
        dedup[q] = max(r, dedup.get(q, r))
    hull = upper_hull(sorted(dedup.items()))

    def hull_at(q):
        for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
            if x1 <= q <= x2:
                return y1 + (y2 - y1) * (q - x1) / (x2 - x1)
        return hull[-1][1]

    phi: List[Optional[Fraction]] = [None] * n
    for i in range(n):
        if marginal[i] > 0:
            phi[i] = (hull_at(survival[i]) - hull_at(survival[i + 1])) / marginal[i]
    fill: Optional[Fraction] = None
    for i in range(n):
        if phi[i] is None:
            phi[i] = fill
        else:
            fill = phi[i]
    return phi


def myerson_independent(prior: JointPrior) -> MultiResult:
    """
    Myerson's optimal auction for a product prior: highest positive ironed
    virtual value wins, ties go to the lowest bidder index.
    """
    if not is_independent(prior):
        raise PriorValidationError("myerson_independent needs a product prior")
    normalized = prior.normalize()
    phis = [
        ironed_virtual_values(prior.grid.levels[k], normalized.marginal(k))
        for k in range(prior.n_bidders)
    ]
    winners = np.zeros(prior.shape, dtype=int)
    for point in np.ndindex(prior.shape):
        best_k, best_phi = 0, Fraction(0)
        for k, idx in enumerate(point):
            if phis[k][idx] is not None and phis[k][idx] > best_phi:
                best_k, best_phi = k + 1, phis[k][idx]
        winners[point] = best_k
    mechanism = thresholds_and_payments(AllocationMatrix(winners), prior.grid)
    revenue = expected_revenue(mechanism, prior)
    logger.info(f"Myerson auction on {prior.shape}: revenue {revenue}")
    return MultiResult(revenue, mechanism)
