"""
Hardness instances for three bidders.

Max3Sat formulas are rewritten as categorized formulas (every clause holds
at most one literal per category x, y, z) and then embedded into a
three-bidder prior whose segment structure encodes the formula. An exact
segment solver checks the predicted profits on desk-scale instances.

Levels are 1-based throughout this module: level k carries value h(k).
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pulp

from optauction.config import get_settings
from optauction.errors import (
    ConflictingSelectionError,
    PriorValidationError,
    ReductionError,
    SizeGuardError,
    SolverInvariantError,
)
from optauction.services.mechanism import (
    AllocationMatrix,
    Mechanism,
    expected_revenue,
    thresholds_and_payments,
)
from optauction.services.priors import (
    JointPrior,
    ValueGrid,
    mpc_discrete,
    skyline_table,
    suffix_revenue_table,
)
from optauction.utils.rationals import common_denominator, format_rational

logger = logging.getLogger(__name__)

AXES = "xyz"
Level = Tuple[int, int, int]


# --------------------------------------------------------------------------
# Formulas
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CnfFormula:
    """Plain CNF with DIMACS-style signed integer literals."""

    n_vars: int
    clauses: Tuple[Tuple[int, ...], ...]

    def satisfied(self, assignment: Sequence[bool]) -> int:
        return sum(
            any(assignment[abs(lit) - 1] == (lit > 0) for lit in clause)
            for clause in self.clauses
        )


def parse_dimacs(text: str) -> CnfFormula:
    n_vars, expected, clauses, current = None, None, [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ReductionError(f"Malformed DIMACS header: {line}")
            n_vars, expected = int(parts[2]), int(parts[3])
            continue
        if n_vars is None:
            raise ReductionError("DIMACS clause before the 'p cnf' header")
        for token in line.split():
            lit = int(token)
            if lit == 0:
                clauses.append(tuple(current))
                current = []
            elif abs(lit) > n_vars:
                raise ReductionError(f"Literal {lit} exceeds the declared {n_vars} variables")
            else:
                current.append(lit)
    if current:
        clauses.append(tuple(current))
    if n_vars is None:
        raise ReductionError("Missing DIMACS header")
    if expected != len(clauses):
        logger.warning(f"DIMACS header declares {expected} clauses, found {len(clauses)}")
    return CnfFormula(n_vars, tuple(clauses))


@dataclass(frozen=True, order=True)
class CatLiteral:
    category: int
    index: int
    positive: bool = True

    @property
    def variable(self) -> Tuple[int, int]:
        return self.category, self.index

    def __str__(self):
        name = f"{AXES[self.category]}{self.index}"
        return name if self.positive else f"~{name}"


def variable_name(variable: Tuple[int, int]) -> str:
    return f"{AXES[variable[0]]}{variable[1]}"


def parse_cat_literal(token: str) -> CatLiteral:
    token = token.strip()
    positive = not token.startswith(("~", "-", "!"))
    body = token.lstrip("~-!")
    if len(body) < 2 or body[0] not in AXES or not body[1:].isdigit():
        raise ReductionError(f"Bad categorized literal: {token!r}")
    return CatLiteral(AXES.index(body[0]), int(body[1:]), positive)


@dataclass(frozen=True)
class CatFormula:
    """CNF whose clauses hold at most one literal from each category."""

    n_x: int
    n_y: int
    n_z: int
    clauses: Tuple[Tuple[CatLiteral, ...], ...] = ()

    def __post_init__(self):
        counts = self.counts
        if min(counts) < 0:
            raise ReductionError("Variable counts must be nonnegative")
        for l, clause in enumerate(self.clauses, start=1):
            if len(clause) > 3:
                raise ReductionError(f"Clause {l} has {len(clause)} literals")
            cats = [lit.category for lit in clause]
            if len(set(cats)) != len(cats):
                raise ReductionError(f"Clause {l} repeats a category")
            for lit in clause:
                if not 1 <= lit.index <= counts[lit.category]:
                    raise ReductionError(f"Clause {l}: literal {lit} out of range")

    @classmethod
    def from_strings(cls, n_x: int, n_y: int, n_z: int, clauses: Iterable[Iterable[str]]) -> "CatFormula":
        return cls(n_x, n_y, n_z, tuple(tuple(parse_cat_literal(t) for t in c) for c in clauses))

    @property
    def counts(self) -> Tuple[int, int, int]:
        return self.n_x, self.n_y, self.n_z

    @property
    def m(self) -> int:
        return len(self.clauses)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def n_bar(self) -> int:
        return sum(len(c) for c in self.clauses)

    @property
    def n_hat(self) -> int:
        return max(self.counts)

    def variables(self) -> List[Tuple[int, int]]:
        return [(c, i) for c in range(3) for i in range(1, self.counts[c] + 1)]

    def satisfied(self, assignment: Dict[Tuple[int, int], bool]) -> int:
        return sum(
            any(assignment.get(lit.variable, False) == lit.positive for lit in clause)
            for clause in self.clauses
        )

    def max_satisfied(self, limit: Optional[int] = None) -> Tuple[int, Dict[Tuple[int, int], bool]]:
        """Exhaustive Max-Sat; returns the best count and the first assignment attaining it."""
        limit = limit or get_settings().brute_force_limit
        variables = self.variables()
        if 2 ** len(variables) > limit:
            raise SizeGuardError(
                f"Exhaustive search over {len(variables)} variables exceeds the limit {limit}",
                {"variables": len(variables), "limit": limit},
            )
        best, best_assignment = -1, {}
        for bits in itertools.product((False, True), repeat=len(variables)):
            assignment = dict(zip(variables, bits))
            count = self.satisfied(assignment)
            if count > best:
                best, best_assignment = count, assignment
                if best == self.m:
                    break
        return max(best, 0), best_assignment

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_x": self.n_x,
            "n_y": self.n_y,
            "n_z": self.n_z,
            "clauses": [[str(lit) for lit in clause] for clause in self.clauses],
        }


def max3sat_to_catsat(cnf: CnfFormula) -> CatFormula:
    """
    Categorized copy of a 3-CNF.

    The literal in position k of a clause uses the copy of its variable in
    category k; every used variable gets the cycle (~x v y), (~y v z),
    (~z v x) so its three copies agree in any satisfying assignment.
    """
    for l, clause in enumerate(cnf.clauses, start=1):
        if len(clause) > 3:
            raise ReductionError(f"Clause {l} has {len(clause)} literals; expected a 3-CNF")
    used = sorted({abs(lit) for clause in cnf.clauses for lit in clause})
    index = {v: k for k, v in enumerate(used, start=1)}
    clauses = [
        tuple(CatLiteral(pos, index[abs(lit)], lit > 0) for pos, lit in enumerate(clause))
        for clause in cnf.clauses
    ]
    for k in range(1, len(used) + 1):
        for cat in range(3):
            nxt = (cat + 1) % 3
            pair = sorted([CatLiteral(cat, k, False), CatLiteral(nxt, k, True)])
            clauses.append(tuple(pair))
    n = len(used)
    formula = CatFormula(n, n, n, tuple(clauses))
    logger.info(f"Categorized {len(cnf.clauses)} clauses into {formula.m} over {3 * n} variables")
    return formula


# --------------------------------------------------------------------------
# Instance construction
# --------------------------------------------------------------------------

class ConstantScheme(str, Enum):
    """
    Mass constants for the five point families.

    FRACTIONAL uses c1 = 1/(n^2 m), c4 = 3/n^2, c5 = 2/(5 n m). BALANCED scales
    c1, c4 and c5 up by n^2 m so that a literal segment is worth at least a
    clause segment, which keeps the optimum equal to
    F + nbar h(n+2) c1 + (max satisfied) h(1) c2 on every formula.
    """

    BALANCED = "balanced"
    FRACTIONAL = "fractional"

    def constants(self, n_hat: int, m: int) -> Dict[str, Fraction]:
        m = max(m, 1)
        if self is ConstantScheme.FRACTIONAL:
            return {
                "c1": Fraction(1, n_hat * n_hat * m),
                "c2": Fraction(1),
                "c3": Fraction(1),
                "c4": Fraction(3, n_hat * n_hat),
                "c5": Fraction(2, 5 * n_hat * m),
            }
        return {
            "c1": Fraction(1),
            "c2": Fraction(1),
            "c3": Fraction(1),
            "c4": Fraction(3 * m),
            "c5": Fraction(2 * n_hat, 5),
        }


@dataclass(frozen=True)
class Placement:
    """One point carrying mass, with the segment direction it is meant to start."""

    point: Level
    role: str
    axis: int
    mass: Fraction
    clause: Optional[int] = None
    literal: Optional[CatLiteral] = None
    dummy: bool = False

    @property
    def group(self) -> Optional[str]:
        """'pos' for positive and dummy-positive literal segments, 'neg' otherwise."""
        if self.role != "literal":
            return None
        return "pos" if self.literal.positive != self.dummy else "neg"

    def to_dict(self) -> Dict[str, object]:
        out = {"point": list(self.point), "role": self.role, "axis": AXES[self.axis],
               "mass": format_rational(self.mass)}
        if self.clause is not None:
            out["clause"] = self.clause
        if self.literal is not None:
            out["literal"] = str(self.literal)
            out["dummy"] = self.dummy
        return out


def level_values(n_hat: int, m: int) -> Tuple[Fraction, ...]:
    side = n_hat + 2 * m + 4
    low = [1 + Fraction(i - 1, n_hat + 2 * m + 1) for i in range(1, side - 1)]
    return tuple(low + [Fraction(4), Fraction(5)])


@dataclass(frozen=True, eq=False)
class ReductionInstance:
    formula: CatFormula
    scheme: ConstantScheme
    side: int
    h: Tuple[Fraction, ...]
    constants: Dict[str, Fraction]
    prior: JointPrior
    placements: Tuple[Placement, ...]

    def value(self, level: int) -> Fraction:
        return self.h[level - 1]

    @property
    def normalization(self) -> Fraction:
        return self.prior.total_mass

    @property
    def literal_weight(self) -> Fraction:
        return self.value(self.formula.n_hat + 2) * self.constants["c1"]

    @property
    def clause_weight(self) -> Fraction:
        return self.value(1) * self.constants["c2"]

    @property
    def scaffolding_profit(self) -> Fraction:
        f, c = self.formula, self.constants
        top, cap = self.value(self.side - 1), self.value(self.side)
        return 6 * f.m * top * c["c3"] + 2 * f.n * top * c["c4"] + 12 * f.m * cap * c["c5"]

    def cost1(self) -> Fraction:
        return self.formula.m * self.clause_weight + self.formula.n_bar * self.literal_weight + self.scaffolding_profit

    def cost2(self, rho: Fraction) -> Fraction:
        return rho * self.formula.m * self.clause_weight + self.formula.n_bar * self.literal_weight + self.scaffolding_profit

    def by_role(self, *roles: str) -> List[Placement]:
        return [p for p in self.placements if p.role in roles]

    def literal_map(self) -> Dict[str, List[Dict[str, object]]]:
        out: Dict[str, List[Dict[str, object]]] = {}
        for p in self.by_role("literal"):
            out.setdefault(variable_name(p.literal.variable), []).append(p.to_dict())
        return out

    def clause_map(self) -> Dict[int, List[Dict[str, object]]]:
        out: Dict[int, List[Dict[str, object]]] = {}
        for p in self.by_role("clause"):
            out.setdefault(p.clause, []).append(p.to_dict())
        return out

    def bookkeeping(self) -> Dict[str, object]:
        return {
            "formula": self.formula.to_dict(),
            "scheme": self.scheme.value,
            "side": self.side,
            "h": [format_rational(v) for v in self.h],
            "constants": {k: format_rational(v) for k, v in self.constants.items()},
            "normalization": format_rational(self.normalization),
            "literals": self.literal_map(),
            "clauses": {str(k): v for k, v in self.clause_map().items()},
            "scaffolding": [p.to_dict() for p in self.by_role("c3", "c4", "c5")],
            "F": format_rational(self.scaffolding_profit),
            "cost1": format_rational(self.cost1()),
        }


def _point(axis_values: Dict[int, int]) -> Level:
    return tuple(axis_values[a] for a in range(3))


def _placements(formula: CatFormula, c: Dict[str, Fraction]) -> List[Placement]:
    n_hat, m = formula.n_hat, formula.m
    base, top, cap = n_hat + 2, n_hat + 2 * m + 3, n_hat + 2 * m + 4
    out: List[Placement] = []

    for l, clause in enumerate(formula.clauses, start=1):
        for lit in clause:
            a = lit.category
            p, q = (a + 1) % 3, (a + 2) % 3
            own = lit.index + 1
            if lit.positive:
                real = _point({a: own, p: base, q: base + l}), p
                dummy = _point({a: own, p: base + m + l, q: base}), q
            else:
                real = _point({a: own, p: base + l, q: base}), q
                dummy = _point({a: own, p: base, q: base + m + l}), p
            out.append(Placement(real[0], "literal", real[1], c["c1"], l, lit, False))
            out.append(Placement(dummy[0], "literal", dummy[1], c["c1"], l, lit, True))
            out.append(Placement(_point({a: 1, p: base + l, q: base + l}), "clause", a, c["c2"], l, lit))

    for l in range(1, m + 1):
        for a in range(3):
            p, q = (a + 1) % 3, (a + 2) % 3
            out.append(Placement(_point({a: 1, p: base + l, q: top}), "c3", q, c["c3"], l))
            out.append(Placement(_point({a: 1, p: top, q: base + l}), "c3", p, c["c3"], l))

    for a, idx in formula.variables():
        p, q = (a + 1) % 3, (a + 2) % 3
        out.append(Placement(_point({a: idx + 1, p: base, q: top}), "c4", q, c["c4"]))
        out.append(Placement(_point({a: idx + 1, p: top, q: base}), "c4", p, c["c4"]))

    for i in range(n_hat + 3, n_hat + 2 * m + 3):
        for a in range(3):
            p, q = (a + 1) % 3, (a + 2) % 3
            out.append(Placement(_point({a: cap, p: i, q: base}), "c5", a, c["c5"]))
            out.append(Placement(_point({a: cap, p: base, q: i}), "c5", a, c["c5"]))
    return out


def check_inequalities(formula: CatFormula, h: Sequence[Fraction], c: Dict[str, Fraction]) -> List[str]:
    """The three scaffolding inequalities, evaluated exactly; returns the failures."""
    n_hat, m = formula.n_hat, formula.m

    def hv(k: int) -> Fraction:
        return h[k - 1]

    failures = []
    for l in range(1, m + 1):
        if not hv(n_hat + l + 2) * (c["c2"] + c["c3"]) < hv(n_hat + 2 * m + 3) * c["c3"]:
            failures.append(f"clause scaffold fails at l={l}")
    for l in range(1, 2 * m + 1):
        if not hv(n_hat + l + 2) * (2 * m * c["c1"] + c["c4"]) < hv(n_hat + 2 * m + 3) * c["c4"]:
            failures.append(f"row scaffold fails at l={l}")
    if not n_hat * hv(n_hat + 1) * c["c1"] < hv(n_hat + 2 * m + 4) * c["c5"]:
        failures.append("plane scaffold fails")
    return failures


def catsat_to_instance(formula: CatFormula, scheme: ConstantScheme = ConstantScheme.BALANCED) -> ReductionInstance:
    if formula.n_hat < 1:
        raise ReductionError("The formula declares no variables")
    n_hat, m = formula.n_hat, formula.m
    side = n_hat + 2 * m + 4
    h = level_values(n_hat, m)
    constants = scheme.constants(n_hat, m)
    failures = check_inequalities(formula, h, constants)
    if failures:
        raise ReductionError("Scaffolding inequalities violated", {"failures": failures})

    placements = _placements(formula, constants)
    masses = np.empty((side,) * 3, dtype=object)
    masses.fill(Fraction(0))
    for pl in placements:
        idx = tuple(k - 1 for k in pl.point)
        if masses[idx] != 0:
            raise ReductionError(f"Two placements collide at {pl.point}")
        masses[idx] = pl.mass

    prior = JointPrior(ValueGrid((h, h, h)), masses)
    logger.info(f"Reduction instance: side {side}, {len(placements)} mass points, "
                f"m={m}, nbar={formula.n_bar}, nhat={n_hat}, scheme={scheme.value}")
    return ReductionInstance(formula, scheme, side, h, constants, prior, tuple(placements))


# --------------------------------------------------------------------------
# Segments
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Segment:
    """Axis-parallel run of grid levels from ``apex`` to the grid boundary."""

    axis: int
    apex: Level
    end: int
    weight: Fraction = field(compare=False)

    def covered(self) -> List[Level]:
        out = []
        for k in range(self.apex[self.axis], self.end + 1):
            point = list(self.apex)
            point[self.axis] = k
            out.append(tuple(point))
        return out

    def __str__(self):
        return f"{AXES[self.axis]}@{self.apex}"


def extract_segments(prior: JointPrior) -> List[Segment]:
    """All segments of a three-bidder prior: apices where a bidder's mpc is positive."""
    if prior.n_bidders != 3:
        raise PriorValidationError(f"Segments need a three-bidder prior, got {prior.n_bidders}")
    segments = []
    for axis in range(3):
        mpc = mpc_discrete(prior, axis)
        sky = skyline_table(prior, axis)
        for idx in mpc.positive_points():
            apex = tuple(k + 1 for k in idx)
            segments.append(Segment(axis, apex, prior.shape[axis], sky[idx]))
    logger.debug(f"Extracted {len(segments)} segments")
    return sorted(segments)


def segments_intersect(a: Segment, b: Segment) -> bool:
    if a.axis == b.axis:
        return all(a.apex[k] == b.apex[k] for k in range(3) if k != a.axis)
    i, j = a.axis, b.axis
    k = 3 - i - j
    return a.apex[k] == b.apex[k] and b.apex[i] >= a.apex[i] and a.apex[j] >= b.apex[j]


@dataclass(frozen=True)
class SegmentSolution:
    value: Fraction
    selected: Tuple[Segment, ...]
    components: int


def _scaled_weights(nodes: List[Segment]) -> Dict[Segment, int]:
    denom = common_denominator(s.weight for s in nodes)
    return {s: int(s.weight * denom) for s in nodes}


def _component_clique(nodes: List[Segment], graph: nx.Graph) -> List[Segment]:
    # independent sets of the intersection graph are cliques of its complement
    weights = _scaled_weights(nodes)
    complement = nx.complement(graph.subgraph(nodes))
    for s in nodes:
        complement.nodes[s]["weight"] = weights[s]
    clique, _ = nx.max_weight_clique(complement, weight="weight")
    return sorted(clique)


def _line_groups(nodes: List[Segment]) -> Dict[Tuple[int, Tuple[int, ...]], List[Segment]]:
    lines: Dict[Tuple[int, Tuple[int, ...]], List[Segment]] = {}
    for s in nodes:
        key = (s.axis, tuple(s.apex[k] for k in range(3) if k != s.axis))
        lines.setdefault(key, []).append(s)
    return lines


def _component_program(nodes: List[Segment], graph: nx.Graph) -> List[Segment]:
    """
    Binary program over the component: segments on one line form a clique
    constraint, crossing segments of different axes a pairwise one. The
    objective is integral, so an absolute gap below one is exact.
    """
    weights = _scaled_weights(nodes)
    index = {s: k for k, s in enumerate(nodes)}
    problem = pulp.LpProblem("segments", pulp.LpMaximize)
    pick = [pulp.LpVariable(f"s{k}", cat=pulp.LpBinary) for k in range(len(nodes))]
    problem += pulp.lpSum(weights[s] * pick[index[s]] for s in nodes)

    for line in _line_groups(nodes).values():
        if len(line) > 1:
            problem += pulp.lpSum(pick[index[s]] for s in line) <= 1
    for a, b in graph.subgraph(nodes).edges():
        if a.axis != b.axis:
            problem += pick[index[a]] + pick[index[b]] <= 1

    status = problem.solve(pulp.PULP_CBC_CMD(msg=False, gapRel=0, gapAbs=0.5))
    if pulp.LpStatus[status] != "Optimal":
        raise SolverInvariantError(
            f"Segment program ended with status {pulp.LpStatus[status]}",
            {"segments": len(nodes)},
        )
    return sorted(s for s in nodes if pick[index[s]].varValue > 0.5)


def solve_3segments_exact(
    segments: Sequence[Segment],
    limit: Optional[int] = None,
    clique_limit: Optional[int] = None,
) -> SegmentSolution:
    """
    Maximum-weight set of pairwise non-intersecting segments.

    The intersection graph is split into connected components. Small ones
    are solved as a maximum-weight clique of the complement, larger ones as
    a binary program; every selection is re-checked and summed exactly.
    """
    settings = get_settings()
    limit = limit or settings.segment_limit
    if clique_limit is None:
        clique_limit = settings.segment_clique_limit
    graph = nx.Graph()
    graph.add_nodes_from(segments)
    for a, b in itertools.combinations(segments, 2):
        if segments_intersect(a, b):
            graph.add_edge(a, b)

    total, selected, components = Fraction(0), [], 0
    for component in nx.connected_components(graph):
        components += 1
        if len(component) > limit:
            raise SizeGuardError(
                f"Segment component of size {len(component)} exceeds the limit {limit}",
                {"size": len(component), "limit": limit},
            )
        nodes = sorted(component)
        if len(nodes) <= clique_limit:
            chosen = _component_clique(nodes, graph)
        else:
            logger.debug(f"Component of {len(nodes)} segments goes to the binary program")
            chosen = _component_program(nodes, graph)
        for a, b in itertools.combinations(chosen, 2):
            if graph.has_edge(a, b):
                raise SolverInvariantError(f"Selected segments {a} and {b} intersect")
        total += sum((s.weight for s in chosen), Fraction(0))
        selected.extend(chosen)
    logger.info(f"Segment optimum {total} over {components} components ({len(segments)} segments)")
    return SegmentSolution(total, tuple(sorted(selected)), components)


def segments_to_mechanism(segments: Iterable[Segment], grid: ValueGrid) -> Mechanism:
    """Give every covered point to the segment's bidder; the rest stay unsold."""
    winners = np.zeros(grid.shape, dtype=int)
    owner: Dict[Level, Segment] = {}
    for seg in segments:
        for point in seg.covered():
            if point in owner:
                raise ConflictingSelectionError(owner[point].apex, seg.apex)
            owner[point] = seg
            winners[tuple(k - 1 for k in point)] = seg.axis + 1
    return thresholds_and_payments(AllocationMatrix(winners), grid)


def mechanism_to_segments(allocation: AllocationMatrix, prior: JointPrior) -> List[Segment]:
    """
    One segment per bidder line that sells: it starts at the lowest
    winning level, and its weight is the line revenue at that level.
    """
    if allocation.n_bidders != 3 or allocation.shape != prior.shape:
        raise PriorValidationError("Allocation must be three-dimensional and match the prior")
    allocation.check_monotone()
    out = []
    for axis in range(3):
        rev = suffix_revenue_table(prior, axis)
        wins = allocation.winners == axis + 1
        for idx in zip(*np.nonzero(wins)):
            idx = tuple(int(k) for k in idx)
            below = list(idx)
            below[axis] -= 1
            if idx[axis] == 0 or not wins[tuple(below)]:
                out.append(Segment(axis, tuple(k + 1 for k in idx), prior.shape[axis], rev[idx]))
    return sorted(out)


@dataclass(frozen=True)
class SegmentCertificate:
    ok: bool
    primal: Fraction
    dual: Fraction
    gap: Fraction
    selected: int


def certify_segments(prior: JointPrior) -> SegmentCertificate:
    """Segment optimum against the payment revenue of the mechanism built from it."""
    solution = solve_3segments_exact(extract_segments(prior))
    mechanism = segments_to_mechanism(solution.selected, prior.grid)
    revenue = expected_revenue(mechanism, prior, normalize=False)
    gap = solution.value - revenue
    return SegmentCertificate(gap == 0, solution.value, revenue, gap, len(solution.selected))


# --------------------------------------------------------------------------
# Checks on generated instances
# --------------------------------------------------------------------------

def intended_segments(instance: ReductionInstance, roles: Sequence[str] = ("literal", "clause")) -> Dict[Segment, Placement]:
    """Extracted segments that start at a placement and run along its intended axis."""
    by_start = {(p.point, p.axis): p for p in instance.placements if p.role in roles}
    return {s: by_start[(s.apex, s.axis)] for s in extract_segments(instance.prior) if (s.apex, s.axis) in by_start}


def _intersection_kind(a: Placement, b: Placement) -> str:
    if a.role == "literal" and b.role == "literal":
        if a.literal.variable == b.literal.variable and a.group != b.group:
            return "literal-negation"
    elif a.role == "clause" and b.role == "clause":
        if a.clause == b.clause:
            return "clause-clause"
    else:
        lit, cl = (a, b) if a.role == "literal" else (b, a)
        if not lit.dummy and lit.clause == cl.clause and lit.literal.category == cl.axis:
            return "clause-literal"
    return "other"


@dataclass
class IntersectionCensus:
    counts: Dict[str, int] = field(default_factory=dict)
    unexpected: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.unexpected


def intersection_census(instance: ReductionInstance) -> IntersectionCensus:
    """Classify every intersecting pair of literal and clause segments."""
    census = IntersectionCensus(counts={"literal-negation": 0, "clause-clause": 0, "clause-literal": 0})
    segments = intended_segments(instance)
    for a, b in itertools.combinations(sorted(segments), 2):
        if not segments_intersect(a, b):
            continue
        kind = _intersection_kind(segments[a], segments[b])
        if kind == "other":
            census.unexpected.append((str(a), str(b)))
        else:
            census.counts[kind] += 1
    return census


def decode_assignment(instance: ReductionInstance, selected: Iterable[Segment]) -> Dict[Tuple[int, int], bool]:
    """Variables whose negative literal segments are selected are true; all others false."""
    placements = intended_segments(instance, ("literal",))
    assignment = {v: False for v in instance.formula.variables()}
    for seg in selected:
        p = placements.get(seg)
        if p is not None and p.group == "neg":
            assignment[p.literal.variable] = True
    return assignment


@dataclass
class ReductionReport:
    ok: bool
    satisfiable: bool
    max_satisfied: int
    rho: Fraction
    optimum: Fraction
    scaffolding: Fraction
    cost1: Fraction
    cost2: Fraction
    predicted: Fraction
    decoded_satisfied: int
    clause_segments: int
    census: IntersectionCensus
    messages: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "ok": self.ok,
            "satisfiable": self.satisfiable,
            "max_satisfied": self.max_satisfied,
            "rho": format_rational(self.rho),
            "optimum": format_rational(self.optimum),
            "F": format_rational(self.scaffolding),
            "cost1": format_rational(self.cost1),
            "cost2": format_rational(self.cost2),
            "predicted": format_rational(self.predicted),
            "decoded_satisfied": self.decoded_satisfied,
            "clause_segments": self.clause_segments,
            "census": {"counts": self.census.counts, "unexpected": [list(p) for p in self.census.unexpected]},
            "messages": self.messages,
        }


def verify_reduction(formula: CatFormula, scheme: ConstantScheme = ConstantScheme.BALANCED) -> ReductionReport:
    """
    Build the instance, solve its segments exactly and compare with the
    profit formulas: equality with cost1 when satisfiable, at most cost2 at
    the true satisfiable fraction otherwise.
    """
    best, _ = formula.max_satisfied()
    satisfiable = best == formula.m
    rho = Fraction(best, formula.m) if formula.m else Fraction(1)

    instance = catsat_to_instance(formula, scheme)
    solution = solve_3segments_exact(extract_segments(instance.prior))
    census = intersection_census(instance)
    clauses = intended_segments(instance, ("clause",))
    clause_segments = sum(1 for s in solution.selected if s in clauses)
    decoded = formula.satisfied(decode_assignment(instance, solution.selected))
    predicted = instance.scaffolding_profit + formula.n_bar * instance.literal_weight + best * instance.clause_weight

    messages = []
    if satisfiable and solution.value != instance.cost1():
        messages.append(f"satisfiable formula but optimum {solution.value} != cost1 {instance.cost1()}")
    if not satisfiable and solution.value > instance.cost2(rho):
        messages.append(f"optimum {solution.value} exceeds cost2 {instance.cost2(rho)}")
    if decoded < clause_segments:
        messages.append(f"decoded assignment satisfies {decoded} < {clause_segments} selected clause segments")
    if not census.ok:
        messages.append(f"{len(census.unexpected)} unexpected segment intersections")
    if solution.value != predicted:
        logger.warning(f"Optimum {solution.value} differs from the predicted {predicted} ({scheme.value} constants)")

    report = ReductionReport(
        ok=not messages,
        satisfiable=satisfiable,
        max_satisfied=best,
        rho=rho,
        optimum=solution.value,
        scaffolding=instance.scaffolding_profit,
        cost1=instance.cost1(),
        cost2=instance.cost2(rho),
        predicted=predicted,
        decoded_satisfied=decoded,
        clause_segments=clause_segments,
        census=census,
        messages=messages,
    )
    for message in messages:
        logger.error(message)
    return report
