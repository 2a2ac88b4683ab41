"""
Two-bidder pipelines.

solve_discrete2: exact optimum for a discrete joint prior.
brute_force2:    exhaustive reference over all valid allocation pairs.
solve_continuous: discretize a density oracle, solve the strict conflict
                 instance and emit a proper stair mechanism.
transport_witness_continuous: product-form dual witness for the continuous
                 covering problem, built from a transshipment plan.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from optauction.config import get_settings
from optauction.errors import PriorValidationError, SizeGuardError, SolverInvariantError
from optauction.services.mechanism import (
    AllocationPair,
    CurvePair,
    Mechanism,
    expected_revenue,
    feasible_beta_floor,
    make_proper,
    monotone_closure,
    thresholds_and_payments,
)
from optauction.services.mwis import (
    DualityReport,
    IndependentSetSolution,
    TransshipmentPlan,
    build_conflict_instance,
    check_duality,
    extract_transshipment,
    solve_mwis_lex,
)
from optauction.services.oracles import DensityOracle
from optauction.services.priors import (
    Discretization,
    JointPrior,
    MarginalProfitGrid,
    discretize_oracle,
    mpc_discrete,
    suffix_revenue_table,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Solve2Result:
    prior: JointPrior
    pair: AllocationPair
    mechanism: Mechanism
    revenue: Fraction
    solution: IndependentSetSolution
    plan: TransshipmentPlan
    duality: DualityReport


def _require_two_bidders(prior: JointPrior):
    if prior.n_bidders != 2:
        raise PriorValidationError(f"Two-bidder solver called with {prior.n_bidders} bidders")


def solve_discrete2(prior: JointPrior, network: Optional[str] = None) -> Solve2Result:
    """Optimal deterministic ex-post IC/IR auction for a two-bidder discrete prior."""
    _require_two_bidders(prior)
    f = mpc_discrete(prior, 0)
    g = mpc_discrete(prior, 1)
    instance = build_conflict_instance(f, g, strict=False)
    solution = solve_mwis_lex(instance, network=network)
    pair = monotone_closure(solution.selected_u, solution.selected_w, prior.shape)
    mechanism = thresholds_and_payments(pair.to_matrix(), prior.grid)
    revenue = expected_revenue(mechanism, prior)
    if revenue != solution.objective / prior.total_mass:
        raise SolverInvariantError(
            "Payment revenue differs from the independent set weight",
            {"revenue": str(revenue), "objective": str(solution.objective / prior.total_mass)},
        )
    plan = extract_transshipment(instance, solution)
    duality = check_duality(solution, plan)
    logger.info(f"solve_discrete2 on {prior.shape}: revenue {revenue}, duality gap {duality.gap}")
    return Solve2Result(prior, pair, mechanism, revenue, solution, plan, duality)


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    revenue: Fraction
    mechanism: Mechanism
    pair: Optional[AllocationPair] = None
    explored: int = 0


def brute_force2(prior: JointPrior, limit: Optional[int] = None) -> BruteForceResult:
    """
    Enumerate every alpha; for each column pick the best admissible beta.

    Bidder 1's revenue in column i depends only on beta(i) and the
    non-crossing floor set by alpha, so columns are optimised independently.
    """
    _require_two_bidders(prior)
    limit = limit or get_settings().brute_force_limit
    n1, n2 = prior.shape
    if (n1 + 1) ** n2 > limit:
        raise SizeGuardError(
            f"brute_force2 would enumerate {(n1 + 1) ** n2} alpha vectors (limit {limit})",
            {"shape": [n1, n2], "limit": limit},
        )

    rev_a = suffix_revenue_table(prior, 0)
    rev_b = suffix_revenue_table(prior, 1)
    row_rev = [[rev_a[i, j] for i in range(n1)] + [Fraction(0)] for j in range(n2)]
    col_rev = [[rev_b[i, j] for j in range(n2)] + [Fraction(0)] for i in range(n1)]

    best_value, best_pair, explored = Fraction(-1), None, 0
    for alpha in itertools.product(range(n1 + 1), repeat=n2):
        explored += 1
        value = sum((row_rev[j][a] for j, a in enumerate(alpha)), Fraction(0))
        beta = []
        for i, floor in enumerate(feasible_beta_floor(alpha, n1)):
            options = col_rev[i][floor:]
            k = max(range(len(options)), key=options.__getitem__)
            beta.append(floor + k)
            value += options[k]
        if value > best_value:
            best_value, best_pair = value, AllocationPair((n1, n2), alpha, tuple(beta))

    mechanism = thresholds_and_payments(best_pair.to_matrix(), prior.grid)
    revenue = expected_revenue(mechanism, prior)
    if revenue != best_value / prior.total_mass:
        raise SolverInvariantError("Enumerated pair value differs from its payment revenue")
    logger.info(f"brute_force2 explored {explored} alpha vectors, revenue {revenue}")
    return BruteForceResult(revenue, mechanism, best_pair, explored)


# --------------------------------------------------------------------------
# Continuous densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorLedger:
    """Additive error terms of the discretization, in probability units."""

    epsilon: float
    resolution: int
    boundary: float
    properness: float
    quadrature: float
    quantization: float

    @property
    def total(self) -> float:
        return self.boundary + self.properness + self.quadrature + self.quantization

    def to_dict(self) -> Dict[str, float]:
        return {
            "epsilon": self.epsilon,
            "resolution": self.resolution,
            "boundary": self.boundary,
            "properness": self.properness,
            "quadrature": self.quadrature,
            "quantization": self.quantization,
            "total": self.total,
        }


def default_resolution(oracle: DensityOracle, epsilon: float) -> int:
    factor = get_settings().resolution_factor
    return max(2, int(math.ceil(factor * (1.0 + oracle.lipschitz) / epsilon)))


def _pair_weight(pair: AllocationPair, f: np.ndarray, g: np.ndarray) -> Fraction:
    return sum((f[p] for p in pair.region_a()), Fraction(0)) + sum((g[p] for p in pair.region_b()), Fraction(0))


def staircase_pair(solution: IndependentSetSolution) -> AllocationPair:
    """
    Stair boundaries read from a strict-edge independent set.

    Closing the selection rightward and upward can make both bidders claim
    cells on a shared row or column; those cells are removed from whichever
    side keeps the larger mpc weight.
    """
    inst = solution.instance
    n1, n2 = inst.shape
    alpha = [n1] * n2
    beta = [n2] * n1
    for i, j in solution.selected_u:
        alpha[j] = min(alpha[j], i)
    for i, j in solution.selected_w:
        beta[i] = min(beta[i], j)

    trim_b = AllocationPair((n1, n2), tuple(alpha), tuple(max(b, lo) for b, lo in zip(beta, feasible_beta_floor(alpha, n1))))
    trimmed_alpha = []
    for j in range(n2):
        blocked = [i for i in range(n1) if beta[i] <= j]
        trimmed_alpha.append(max(alpha[j], max(blocked) + 1) if blocked else alpha[j])
    trim_a = AllocationPair((n1, n2), tuple(trimmed_alpha), tuple(beta))

    if trim_a == trim_b:
        return trim_a
    keep_a = _pair_weight(trim_b, inst.f, inst.g)
    keep_b = _pair_weight(trim_a, inst.f, inst.g)
    logger.debug(f"Stair overlap: trimming B keeps {keep_a}, trimming A keeps {keep_b}")
    return trim_b if keep_a >= keep_b else trim_a


def curves_from_pair(pair: AllocationPair) -> CurvePair:
    n1, n2 = pair.shape
    alpha = tuple(a / n1 if a < n1 else math.inf for a in pair.alpha)
    beta = tuple(b / n2 if b < n2 else math.inf for b in pair.beta)
    return CurvePair(alpha, beta)


@dataclass(frozen=True)
class WitnessEntry:
    u: Tuple[int, int]
    w: Tuple[int, int]
    kind: str
    scale: Fraction


@dataclass
class WitnessReport:
    ok: bool
    cost: Fraction
    plan_cost: Fraction
    entries: List[WitnessEntry] = field(default_factory=list)
    violation: Optional[str] = None
    cell: Optional[Tuple[str, Tuple[int, int]]] = None


def _weights(table: Union[MarginalProfitGrid, np.ndarray]) -> np.ndarray:
    return table.values if isinstance(table, MarginalProfitGrid) else np.asarray(table, dtype=object)


def transport_witness_continuous(
    plan: TransshipmentPlan,
    f_d: Union[MarginalProfitGrid, np.ndarray],
    g_d: Union[MarginalProfitGrid, np.ndarray],
    epsilon: float,
) -> WitnessReport:
    """
    Piecewise-product covering density from a cell-level plan.

    On an edge between positive cells the density is
    f(x1,y1) * g(x2,y2) * y_uv / (w_u w_v); when one endpoint has zero mass
    the plan mass is spread uniformly over that cell instead. The report
    replays the covering constraint of every positive cell and compares the
    total witness mass with the plan cost.
    """
    f, g = _weights(f_d), _weights(g_d)
    area = Fraction(1) / (int(round(1.0 / epsilon)) ** 2)
    report = WitnessReport(ok=True, cost=Fraction(0), plan_cost=plan.cost())
    cover_u: Dict[Tuple[int, int], Fraction] = {}
    cover_w: Dict[Tuple[int, int], Fraction] = {}

    for (u, w), y in sorted(plan.flows.items()):
        wu, ww = f[u], g[w]
        if y == 0:
            continue
        if wu == 0 and ww == 0:
            report.ok = False
            report.violation = f"flow {y} between zero-mass cells u{u} and w{w}"
            report.cell = ("u", u)
            return report
        if wu > 0 and ww > 0:
            entry = WitnessEntry(u, w, "product", y / (wu * ww))
            cover_u[u] = cover_u.get(u, Fraction(0)) + entry.scale * ww
            cover_w[w] = cover_w.get(w, Fraction(0)) + entry.scale * wu
            report.cost += entry.scale * wu * ww
        elif wu > 0:
            entry = WitnessEntry(u, w, "spread_w", y / (wu * area))
            cover_u[u] = cover_u.get(u, Fraction(0)) + y / wu
            report.cost += entry.scale * wu * area
        else:
            entry = WitnessEntry(u, w, "spread_u", y / (ww * area))
            cover_w[w] = cover_w.get(w, Fraction(0)) + y / ww
            report.cost += entry.scale * ww * area
        report.entries.append(entry)

    # isolated cells pair with points of their own cell
    for (side, p), y in sorted(plan.isolated.items()):
        weight = f[p] if side == "u" else g[p]
        rate = y / weight if weight else Fraction(0)
        report.entries.append(WitnessEntry(p, p, "self", rate))
        cover = cover_u if side == "u" else cover_w
        cover[p] = cover.get(p, Fraction(0)) + rate
        report.cost += y

    for p in np.ndindex(f.shape):
        if f[p] > 0 and cover_u.get(p, Fraction(0)) < 1:
            report.ok, report.cell = False, ("u", p)
            report.violation = f"cell u{p} covered at rate {cover_u.get(p, Fraction(0))} < 1"
            return report
        if g[p] > 0 and cover_w.get(p, Fraction(0)) < 1:
            report.ok, report.cell = False, ("w", p)
            report.violation = f"cell w{p} covered at rate {cover_w.get(p, Fraction(0))} < 1"
            return report
    if report.cost != report.plan_cost:
        report.ok = False
        report.violation = f"witness cost {report.cost} differs from plan cost {report.plan_cost}"
    return report


@dataclass(frozen=True, eq=False)
class ContinuousResult:
    resolution: int
    pair: AllocationPair
    curves: CurvePair
    mechanism: Mechanism
    revenue: Fraction
    upper_bound: Fraction
    ledger: ErrorLedger
    duality: DualityReport
    witness: WitnessReport
    discretization: Discretization
    solution: IndependentSetSolution


def solve_continuous(
    oracle: DensityOracle,
    epsilon: float,
    resolution: Optional[int] = None,
    network: Optional[str] = None,
) -> ContinuousResult:
    """
    Additively approximate optimal auction for a Lipschitz density.

    The reported revenue is the exact revenue of the emitted grid mechanism
    under the discretized prior; the dual plan cost is reported beside it
    as an upper bound, and the error ledger lists the a priori terms.
    """
    if not 0 < epsilon <= 0.25:
        raise PriorValidationError(f"epsilon must lie in (0, 1/4], got {epsilon}")
    settings = get_settings()
    oracle.check()
    n = resolution or default_resolution(oracle, epsilon)
    if n > settings.max_resolution:
        raise SizeGuardError(
            f"Resolution {n} exceeds the limit {settings.max_resolution}",
            {"resolution": n, "lipschitz": oracle.lipschitz, "epsilon": epsilon},
        )

    disc = discretize_oracle(oracle, n)
    instance = build_conflict_instance(disc.f, disc.g, strict=True)
    solution = solve_mwis_lex(instance, network=network or settings.continuous_network)
    stair = staircase_pair(solution)
    pair = make_proper(stair, disc.prior)
    mechanism = thresholds_and_payments(pair.to_matrix(), disc.prior.grid)
    revenue = expected_revenue(mechanism, disc.prior)

    plan = extract_transshipment(instance, solution)
    duality = check_duality(solution, plan)
    witness = transport_witness_continuous(plan, disc.f, disc.g, 1.0 / n)

    delta = 1.0 / n
    ledger = ErrorLedger(
        epsilon=epsilon,
        resolution=n,
        boundary=2.0 * delta,
        properness=8.0 * (1.0 + oracle.lipschitz) * delta,
        quadrature=2.0 * disc.subsampling.error_bound(oracle),
        quantization=disc.quantization_error,
    )
    logger.info(f"solve_continuous n={n}: revenue {float(revenue):.6f}, "
                f"upper bound {float(plan.cost()):.6f}, ledger total {ledger.total:.4g}")
    return ContinuousResult(
        resolution=n,
        pair=pair,
        curves=curves_from_pair(pair),
        mechanism=mechanism,
        revenue=revenue,
        upper_bound=plan.cost(),
        ledger=ledger,
        duality=duality,
        witness=witness,
        discretization=disc,
        solution=solution,
    )
