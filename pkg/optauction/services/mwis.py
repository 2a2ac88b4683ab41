"""
Bipartite conflict instances and their maximum-weight independent sets.

U nodes carry bidder 0's marginal profit f, W nodes bidder 1's g, one of
each per grid point. u(i,j) and w(i',j') conflict when w lies southeast of
u: weakly (i <= i', j >= j') for discrete priors, strictly (i < i', j > j')
for discretized densities. The independent set is read off a minimum s-t
cut; its dual is a transshipment plan obtained from the same max flow.
"""

import logging
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
from networkx.algorithms.flow import dinitz

from optauction.config import get_settings
from optauction.errors import PriorValidationError, SolverInvariantError
from optauction.services.priors import MarginalProfitGrid
from optauction.utils.rationals import common_denominator, format_rational

logger = logging.getLogger(__name__)

Point = Tuple[int, int]
SOURCE, SINK = "s", "t"


@dataclass(frozen=True, eq=False)
class ConflictInstance:
    f: np.ndarray
    g: np.ndarray
    strict: bool = False

    @property
    def shape(self) -> Tuple[int, int]:
        return self.f.shape

    def conflicts(self, u: Point, w: Point) -> bool:
        if self.strict:
            return u[0] < w[0] and u[1] > w[1]
        return u[0] <= w[0] and u[1] >= w[1]

    def positive_u(self) -> List[Point]:
        return [p for p in np.ndindex(self.shape) if self.f[p] > 0]

    def positive_w(self) -> List[Point]:
        return [p for p in np.ndindex(self.shape) if self.g[p] > 0]

    def total_weight(self) -> Fraction:
        return sum(self.f.flat, Fraction(0)) + sum(self.g.flat, Fraction(0))

    def canonical_w(self, u: Point) -> Optional[Point]:
        """A fixed conflicting W point for u, regardless of weights."""
        i, j = u
        if not self.strict:
            return u
        return (i + 1, j - 1) if i + 1 < self.shape[0] and j >= 1 else None

    def canonical_u(self, w: Point) -> Optional[Point]:
        i, j = w
        if not self.strict:
            return w
        return (i - 1, j + 1) if i >= 1 and j + 1 < self.shape[1] else None


def build_conflict_instance(
    f: Union[MarginalProfitGrid, np.ndarray],
    g: Union[MarginalProfitGrid, np.ndarray],
    strict: bool = False,
) -> ConflictInstance:
    f_values = f.values if isinstance(f, MarginalProfitGrid) else np.asarray(f, dtype=object)
    g_values = g.values if isinstance(g, MarginalProfitGrid) else np.asarray(g, dtype=object)
    if f_values.shape != g_values.shape or f_values.ndim != 2:
        raise PriorValidationError(f"Conflict grids must share a 2-d shape, got {f_values.shape} and {g_values.shape}")
    if any(v < 0 for v in f_values.flat) or any(v < 0 for v in g_values.flat):
        raise PriorValidationError("Conflict weights must be nonnegative")
    return ConflictInstance(f_values, g_values, strict)


@dataclass(frozen=True, eq=False)
class IndependentSetSolution:
    instance: ConflictInstance
    selected_u: Tuple[Point, ...]
    selected_w: Tuple[Point, ...]
    objective: Fraction
    cut_value: Fraction
    network: str = "explicit"

    @property
    def cardinality(self) -> int:
        return len(self.selected_u) + len(self.selected_w)

    def to_dict(self) -> Dict[str, object]:
        return {
            "strict": self.instance.strict,
            "shape": list(self.instance.shape),
            "selected_u": [list(p) for p in self.selected_u],
            "selected_w": [list(p) for p in self.selected_w],
            "objective": format_rational(self.objective),
            "cut_value": format_rational(self.cut_value),
        }


def _node(side: str, point: Point):
    return (side, int(point[0]), int(point[1]))


def _flow_network(inst: ConflictInstance, caps_u: Dict[Point, int], caps_w: Dict[Point, int], mode: str) -> nx.DiGraph:
    """s -> u -> (conflict arcs) -> w -> t, conflicts explicit or routed through a lattice."""
    infinite = sum(caps_u.values()) + sum(caps_w.values()) + 1
    graph = nx.DiGraph()
    graph.add_node(SOURCE)
    graph.add_node(SINK)
    for p, c in caps_u.items():
        graph.add_edge(SOURCE, _node("u", p), capacity=c)
    for p, c in caps_w.items():
        graph.add_edge(_node("w", p), SINK, capacity=c)

    if mode == "explicit":
        for u in caps_u:
            for w in caps_w:
                if inst.conflicts(u, w):
                    graph.add_edge(_node("u", u), _node("w", w), capacity=infinite)
    elif mode == "lattice":
        n1, n2 = inst.shape
        for i in range(n1):
            for j in range(n2):
                here = _node("a", (i, j))
                if i + 1 < n1:
                    graph.add_edge(here, _node("a", (i + 1, j)), capacity=infinite)
                if j >= 1:
                    graph.add_edge(here, _node("a", (i, j - 1)), capacity=infinite)
                if (i, j) in caps_w:
                    graph.add_edge(here, _node("w", (i, j)), capacity=infinite)
        for u in caps_u:
            entry = inst.canonical_w(u)
            if entry is not None:
                graph.add_edge(_node("u", u), _node("a", entry), capacity=infinite)
    else:
        raise PriorValidationError(f"Unknown network mode {mode!r}")
    return graph


def _source_side(residual: nx.DiGraph) -> set:
    seen = {SOURCE}
    queue = deque([SOURCE])
    while queue:
        node = queue.popleft()
        for nxt, attrs in residual[node].items():
            if nxt not in seen and attrs["capacity"] - attrs["flow"] > 0:
                seen.add(nxt)
                queue.append(nxt)
    return seen


def solve_mwis_lex(inst: ConflictInstance, network: Optional[str] = None) -> IndependentSetSolution:
    """
    Maximum-weight independent set with minimum cardinality among maximisers.

    Weights are scaled to (K+1)*D*w - 1 (K positive nodes, D the common
    denominator), so one min cut optimises weight first and cardinality
    second. Only positive-weight nodes enter the network.
    """
    mode = network or get_settings().discrete_network
    pos_u, pos_w = inst.positive_u(), inst.positive_w()
    count = len(pos_u) + len(pos_w)
    total = inst.total_weight()
    if count == 0:
        return IndependentSetSolution(inst, (), (), Fraction(0), Fraction(0), mode)

    denom = common_denominator([inst.f[p] for p in pos_u] + [inst.g[p] for p in pos_w])
    scale = (count + 1) * denom
    caps_u = {p: int(inst.f[p] * scale) - 1 for p in pos_u}
    caps_w = {p: int(inst.g[p] * scale) - 1 for p in pos_w}

    graph = _flow_network(inst, caps_u, caps_w, mode)
    logger.info(f"MWIS network ({mode}, strict={inst.strict}): "
                f"{graph.number_of_nodes()} nodes, {graph.number_of_edges()} arcs")
    residual = dinitz(graph, SOURCE, SINK)
    reachable = _source_side(residual)

    selected_u = tuple(p for p in pos_u if _node("u", p) in reachable)
    selected_w = tuple(p for p in pos_w if _node("w", p) not in reachable)
    objective = sum((inst.f[p] for p in selected_u), Fraction(0)) + sum((inst.g[p] for p in selected_w), Fraction(0))

    scaled_total = sum(caps_u.values()) + sum(caps_w.values())
    scaled_objective = sum(caps_u[p] for p in selected_u) + sum(caps_w[p] for p in selected_w)
    if scaled_objective != scaled_total - residual.graph["flow_value"]:
        raise SolverInvariantError(
            "Selected set does not match the min cut value",
            {"scaled_objective": scaled_objective, "cut": residual.graph["flow_value"]},
        )
    logger.info(f"MWIS objective {objective} with {len(selected_u) + len(selected_w)} nodes")
    return IndependentSetSolution(inst, selected_u, selected_w, objective, total - objective, mode)


@dataclass
class TransshipmentPlan:
    """Nonnegative flow y on conflict edges covering every node's weight."""

    strict: bool
    flows: Dict[Tuple[Point, Point], Fraction] = field(default_factory=dict)
    isolated: Dict[Tuple[str, Point], Fraction] = field(default_factory=dict)

    def cost(self) -> Fraction:
        return sum(self.flows.values(), Fraction(0)) + sum(self.isolated.values(), Fraction(0))

    def coverage(self) -> Tuple[Dict[Point, Fraction], Dict[Point, Fraction]]:
        cover_u: Dict[Point, Fraction] = defaultdict(Fraction)
        cover_w: Dict[Point, Fraction] = defaultdict(Fraction)
        for (u, w), y in self.flows.items():
            cover_u[u] += y
            cover_w[w] += y
        for (side, p), y in self.isolated.items():
            (cover_u if side == "u" else cover_w)[p] += y
        return cover_u, cover_w

    def violation(self, inst: ConflictInstance) -> Optional[str]:
        """First infeasibility of the plan against the instance, or None."""
        for (u, w), y in sorted(self.flows.items()):
            if y < 0:
                return f"negative flow {y} on u{u}-w{w}"
            if not inst.conflicts(u, w):
                return f"flow on non-edge u{u}-w{w}"
        cover_u, cover_w = self.coverage()
        for p in np.ndindex(inst.shape):
            if cover_u.get(p, 0) < inst.f[p]:
                return f"u{p} covered {cover_u.get(p, 0)} < {inst.f[p]}"
            if cover_w.get(p, 0) < inst.g[p]:
                return f"w{p} covered {cover_w.get(p, 0)} < {inst.g[p]}"
        return None


def _decompose(graph: nx.DiGraph, residual: nx.DiGraph) -> Dict[Tuple[Point, Point], int]:
    remaining = {}
    for a, b in graph.edges:
        flow = residual[a][b]["flow"]
        if flow > 0:
            remaining[(a, b)] = flow
    out_arcs = defaultdict(list)
    for a, b in remaining:
        out_arcs[a].append(b)

    pairs: Dict[Tuple[Point, Point], int] = defaultdict(int)
    for start in sorted(n for n in graph.successors(SOURCE)):
        left = remaining.get((SOURCE, start), 0)
        while left > 0:
            path, node, bottleneck = [], start, left
            while node[0] != "w":
                nxt = next(b for b in out_arcs[node] if remaining[(node, b)] > 0)
                bottleneck = min(bottleneck, remaining[(node, nxt)])
                path.append((node, nxt))
                node = nxt
            for arc in path:
                remaining[arc] -= bottleneck
            pairs[(start[1:], node[1:])] += bottleneck
            left -= bottleneck
    return pairs


def extract_transshipment(inst: ConflictInstance, sol: IndependentSetSolution) -> TransshipmentPlan:
    """
    Dual plan from an unscaled max flow.

    The max flow value is the min vertex cover (cut value); per-pair flows
    come from a path decomposition, and each node's uncovered remainder is
    put on a canonical incident edge. Nodes with no incident edge at all go
    to ``isolated`` and must be in the independent set.
    """
    plan = TransshipmentPlan(strict=inst.strict)
    pos_u, pos_w = inst.positive_u(), inst.positive_w()
    if pos_u or pos_w:
        denom = common_denominator([inst.f[p] for p in pos_u] + [inst.g[p] for p in pos_w])
        caps_u = {p: int(inst.f[p] * denom) for p in pos_u}
        caps_w = {p: int(inst.g[p] * denom) for p in pos_w}
        graph = _flow_network(inst, caps_u, caps_w, sol.network)
        residual = dinitz(graph, SOURCE, SINK)
        if Fraction(residual.graph["flow_value"], denom) != sol.cut_value:
            raise SolverInvariantError(
                "Unscaled max flow disagrees with the cut value",
                {"flow": format_rational(Fraction(residual.graph["flow_value"], denom)),
                 "cut": format_rational(sol.cut_value)},
            )
        for (u, w), amount in _decompose(graph, residual).items():
            plan.flows[(u, w)] = Fraction(amount, denom)

    cover_u, cover_w = plan.coverage()
    selected = set(("u", p) for p in sol.selected_u) | set(("w", p) for p in sol.selected_w)
    for p in pos_u:
        deficit = inst.f[p] - cover_u.get(p, 0)
        if deficit > 0:
            w = inst.canonical_w(p)
            if w is None:
                if ("u", p) not in selected:
                    raise SolverInvariantError(f"Isolated node u{p} left out of the independent set")
                plan.isolated[("u", p)] = deficit
            else:
                plan.flows[(p, w)] = plan.flows.get((p, w), Fraction(0)) + deficit
    for p in pos_w:
        deficit = inst.g[p] - cover_w.get(p, 0)
        if deficit > 0:
            u = inst.canonical_u(p)
            if u is None:
                if ("w", p) not in selected:
                    raise SolverInvariantError(f"Isolated node w{p} left out of the independent set")
                plan.isolated[("w", p)] = deficit
            else:
                plan.flows[(u, p)] = plan.flows.get((u, p), Fraction(0)) + deficit
    logger.debug(f"Transshipment plan: {len(plan.flows)} edges, cost {plan.cost()}")
    return plan


@dataclass(frozen=True)
class DualityReport:
    ok: bool
    primal: Fraction
    dual: Fraction
    gap: Fraction
    primal_feasible: bool
    dual_feasible: bool
    message: Optional[str] = None


def check_duality(sol: IndependentSetSolution, plan: TransshipmentPlan) -> DualityReport:
    """Exact comparison of the independent set weight and the plan cost."""
    inst = sol.instance
    message = None
    primal_feasible = True
    for u in sol.selected_u:
        for w in sol.selected_w:
            if inst.conflicts(u, w):
                primal_feasible = False
                message = f"selected u{u} and w{w} conflict"
                break
        if not primal_feasible:
            break
    weight = sum((inst.f[p] for p in sol.selected_u), Fraction(0)) + sum((inst.g[p] for p in sol.selected_w), Fraction(0))
    if weight != sol.objective:
        primal_feasible = False
        message = message or f"objective {sol.objective} differs from selected weight {weight}"

    dual_violation = plan.violation(inst)
    dual = plan.cost()
    gap = dual - sol.objective
    if dual_violation:
        message = message or dual_violation
    elif gap != 0 and message is None:
        message = f"duality gap {gap}"
    ok = primal_feasible and dual_violation is None and gap == 0
    return DualityReport(ok, sol.objective, dual, gap, primal_feasible, dual_violation is None, message)
