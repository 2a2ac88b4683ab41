#!/usr/bin/env python3
"""
OptAuction command line.

Every subcommand writes one JSON document (CSV for ``curve``) to stdout or
to ``--out``. Library errors become an ErrorResponse document and a nonzero
exit code; a failed ``verify`` or ``reduce --check`` exits with 2.
"""

import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import numpy as np

from optauction import __version__
from optauction.config import get_settings
from optauction.errors import AuctionError, PriorValidationError
from optauction.schemas.responses import (
    BruteForceResponse,
    Certificate,
    CertifyResponse,
    ContinuousResponse,
    ErrorResponse,
    MechanismDocument,
    MyersonResponse,
    PairRevenue,
    PairsResponse,
    PriorDocument,
    ReductionSidecar,
    SolveResponse,
    Versioned,
    VerifyResponse,
    WitnessSummary,
    load_mechanism,
    load_prior,
    read_json,
)
from optauction.services.hardness import (
    CatFormula,
    ConstantScheme,
    catsat_to_instance,
    certify_segments,
    max3sat_to_catsat,
    parse_dimacs,
    verify_reduction,
)
from optauction.services.mechanism import expected_revenue, verify_truthful
from optauction.services.multi import best_pair, brute_force_n, myerson_independent
from optauction.services.oracles import parse_oracle
from optauction.services.priors import JointPrior, ValueGrid, revenue_curve
from optauction.services.solve2 import brute_force2, solve_continuous, solve_discrete2
from optauction.utils.rationals import format_rational
from optauction.utils.warning_suppressor import suppress_all_solver_warnings

logger = logging.getLogger("optauction.cli")

EXIT_VIOLATION = 2


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text + "\n")
        logger.info(f"Wrote {out}")
    else:
        sys.stdout.write(text + "\n")


def _emit_doc(doc: Versioned, out: Optional[str]):
    _emit(doc.dump(), out)


def _flows(plan) -> List[dict]:
    return [
        {"u": [int(k) for k in u], "w": [int(k) for k in w], "y": format_rational(y)}
        for (u, w), y in sorted(plan.flows.items())
    ] + [
        {side: [int(k) for k in p], "y": format_rational(y)}
        for (side, p), y in sorted(plan.isolated.items())
    ]


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_solve2(args) -> int:
    prior = load_prior(args.prior)
    result = solve_discrete2(prior, network=args.network)
    d = result.duality
    _emit_doc(
        SolveResponse(
            revenue=format_rational(result.revenue),
            revenue_float=float(result.revenue),
            alpha=list(result.pair.alpha),
            beta=list(result.pair.beta),
            mechanism=MechanismDocument.from_mechanism(result.mechanism),
            independent_set=result.solution.to_dict(),
            certificate=Certificate(
                ok=d.ok, primal=format_rational(d.primal), dual=format_rational(d.dual),
                gap=format_rational(d.gap), message=d.message,
            ),
            transshipment=_flows(result.plan),
        ),
        args.out,
    )
    return 0


def cmd_brute(args) -> int:
    prior = load_prior(args.prior)
    if prior.n_bidders == 2:
        result = brute_force2(prior)
        alpha, beta = list(result.pair.alpha), list(result.pair.beta)
    else:
        result = brute_force_n(prior)
        alpha = beta = None
    _emit_doc(
        BruteForceResponse(
            revenue=format_rational(result.revenue),
            revenue_float=float(result.revenue),
            explored=result.explored,
            alpha=alpha,
            beta=beta,
            mechanism=MechanismDocument.from_mechanism(result.mechanism),
        ),
        args.out,
    )
    return 0


def cmd_continuous(args) -> int:
    oracle = parse_oracle(args.oracle, lipschitz=args.lipschitz, floor=args.floor)
    result = solve_continuous(oracle, args.epsilon, resolution=args.resolution)
    d, w = result.duality, result.witness
    # primal is the emitted mechanism's revenue; the plan cost bounds the optimum of the grid problem
    gap = result.upper_bound - result.revenue
    _emit_doc(
        ContinuousResponse(
            oracle=oracle.describe(),
            epsilon=args.epsilon,
            resolution=result.resolution,
            revenue=format_rational(result.revenue),
            revenue_float=float(result.revenue),
            upper_bound=format_rational(result.upper_bound),
            upper_bound_float=float(result.upper_bound),
            alpha=[None if not np.isfinite(a) else a for a in result.curves.alpha],
            beta=[None if not np.isfinite(b) else b for b in result.curves.beta],
            ledger=result.ledger.to_dict(),
            certificate=Certificate(
                ok=d.ok and w.ok and float(gap) <= result.ledger.total,
                primal=format_rational(result.revenue),
                dual=format_rational(result.upper_bound),
                gap=format_rational(gap),
                epsilon_budget=result.ledger.to_dict(),
                message=d.message or w.violation,
            ),
            witness=WitnessSummary(
                ok=w.ok, cost=format_rational(w.cost), plan_cost=format_rational(w.plan_cost),
                entries=len(w.entries), violation=w.violation,
            ),
        ),
        args.out,
    )
    return 0


def cmd_pairs(args) -> int:
    prior = load_prior(args.prior)
    result = best_pair(prior)
    _emit_doc(
        PairsResponse(
            pair=list(result.pair),
            revenue=format_rational(result.revenue),
            revenue_float=float(result.revenue),
            table=[PairRevenue(pair=list(p), revenue=format_rational(r)) for p, r in sorted(result.table.items())],
            mechanism=MechanismDocument.from_mechanism(result.mechanism),
        ),
        args.out,
    )
    return 0


def cmd_myerson(args) -> int:
    result = myerson_independent(load_prior(args.prior))
    _emit_doc(
        MyersonResponse(
            revenue=format_rational(result.revenue),
            revenue_float=float(result.revenue),
            mechanism=MechanismDocument.from_mechanism(result.mechanism),
        ),
        args.out,
    )
    return 0


def cmd_verify(args) -> int:
    mech = load_mechanism(args.mechanism)
    prior = load_prior(args.prior)
    if prior.grid != mech.grid:
        raise PriorValidationError("Mechanism and prior use different value grids")
    report = verify_truthful(mech)
    revenue = expected_revenue(mech, prior) if report.ok else None
    _emit_doc(
        VerifyResponse(
            ok=report.ok,
            checked=report.checked,
            violation=report.violation.to_dict() if report.violation else None,
            revenue=format_rational(revenue) if revenue is not None else None,
        ),
        args.out,
    )
    if not report.ok:
        logger.error(f"Mechanism fails {report.violation.kind} for bidder {report.violation.bidder}")
        return EXIT_VIOLATION
    return 0


def cmd_curve(args) -> int:
    if args.oracle:
        source = parse_oracle(args.oracle, lipschitz=args.lipschitz, floor=args.floor)
        fixed = [float(v) for v in args.fix]
    elif args.prior:
        source = load_prior(args.prior)
        fixed = [int(v) for v in args.fix]
    else:
        raise PriorValidationError("curve needs a prior file or --oracle")
    curve = revenue_curve(source, args.bidder, fixed, samples=args.samples)
    _emit(curve.to_frame().to_csv(index=False).rstrip("\n"), args.out)
    return 0


def cmd_certify(args) -> int:
    prior = load_prior(args.prior)
    if prior.n_bidders == 2:
        d = solve_discrete2(prior).duality
        cert = Certificate(ok=d.ok, primal=format_rational(d.primal), dual=format_rational(d.dual),
                           gap=format_rational(d.gap), message=d.message)
        kind = "two-bidder"
    elif prior.n_bidders == 3:
        c = certify_segments(prior)
        cert = Certificate(ok=c.ok, primal=format_rational(c.primal), dual=format_rational(c.dual),
                           gap=format_rational(c.gap))
        kind = "segments"
    else:
        raise PriorValidationError(f"certify supports two or three bidders, got {prior.n_bidders}")
    _emit_doc(CertifyResponse(kind=kind, certificate=cert), args.out)
    return 0 if cert.ok else EXIT_VIOLATION


def _load_formula(args) -> CatFormula:
    if args.categorized:
        payload = read_json(args.formula)
        try:
            return CatFormula.from_strings(payload["n_x"], payload["n_y"], payload["n_z"], payload.get("clauses", []))
        except KeyError as exc:
            raise PriorValidationError(f"Categorized formula misses field {exc}") from exc
    try:
        text = Path(args.formula).read_text()
    except FileNotFoundError as exc:
        raise PriorValidationError(f"File not found: {args.formula}") from exc
    return max3sat_to_catsat(parse_dimacs(text))


def cmd_reduce(args) -> int:
    formula = _load_formula(args)
    scheme = ConstantScheme(args.scheme)
    instance = catsat_to_instance(formula, scheme)
    report = verify_reduction(formula, scheme) if args.check else None

    book = instance.bookkeeping()
    book["cost2_by_satisfied"] = {
        str(k): format_rational(instance.cost2(Fraction(k, formula.m) if formula.m else Fraction(1)))
        for k in range(formula.m + 1)
    }
    book["report"] = report.to_dict() if report else None
    sidecar = ReductionSidecar(**book)

    _emit_doc(PriorDocument.from_prior(instance.prior), args.out)
    sidecar_path = args.sidecar or (str(Path(args.out).with_suffix(".bookkeeping.json")) if args.out else None)
    if sidecar_path:
        Path(sidecar_path).write_text(sidecar.dump() + "\n")
        logger.info(f"Wrote bookkeeping to {sidecar_path}")
    else:
        sys.stderr.write(sidecar.dump() + "\n")
    if report is not None and not report.ok:
        return EXIT_VIOLATION
    return 0


def cmd_gen(args) -> int:
    """Random rational prior with integer weights normalised exactly."""
    if args.bidders < 1 or args.levels < 1:
        raise PriorValidationError("gen needs at least one bidder and one level")
    rng = np.random.default_rng(args.seed if args.seed is not None else get_settings().seed)
    shape = (args.levels,) * args.bidders
    weights = rng.integers(0, args.max_weight + 1, size=shape)
    weights = np.where(rng.random(size=shape) < args.density, weights, 0)
    if weights.sum() == 0:
        weights.flat[-1] = 1
    total = int(weights.sum())
    masses = np.empty(shape, dtype=object)
    for idx in np.ndindex(shape):
        masses[idx] = Fraction(int(weights[idx]), total)
    levels = [tuple(Fraction(k) for k in range(1, args.levels + 1))] * args.bidders
    prior = JointPrior(ValueGrid(tuple(levels)), masses)
    _emit_doc(PriorDocument.from_prior(prior, sparse=not args.dense), args.out)
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optauction",
        description="Optimal deterministic auctions for correlated priors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m optauction solve2 samples/uniform22.json
  python -m optauction brute samples/correlated.json --out brute.json
  python -m optauction continuous --oracle uniform --epsilon 0.05
  python -m optauction continuous --oracle "gaussian-bump(0.6,0.4,0.3,0.2)" --epsilon 0.1 --resolution 20
  python -m optauction verify mechanism.json samples/uniform22.json
  python -m optauction curve samples/uniform22.json --bidder 0 --fix 1 --out curve.csv
  python -m optauction reduce samples/tiny.dimacs --out tiny_prior.json
  python -m optauction reduce samples/single_clause.json --categorized --check --out m1.json
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override OPTAUCTION_LOG_LEVEL")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", "-o", default=None, help="write the result here instead of stdout")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve2", parents=[common], help="exact optimum for a two-bidder discrete prior")
    p.add_argument("prior")
    p.add_argument("--network", choices=["explicit", "lattice"], default=None)
    p.set_defaults(func=cmd_solve2)

    p = sub.add_parser("brute", parents=[common], help="exhaustive optimum (reference oracle)")
    p.add_argument("prior")
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("continuous", parents=[common], help="approximate optimum for a density oracle")
    p.add_argument("--oracle", required=True, help="uniform | product-beta(a,b[,floor]) | gaussian-bump(cx,cy,s[,floor]) | module:function")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--lipschitz", type=float, default=None)
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--resolution", type=int, default=None, help="grid side; defaults to ceil((1+lambda)/epsilon)")
    p.set_defaults(func=cmd_continuous)

    p = sub.add_parser("pairs", parents=[common], help="best two-bidder sub-auction for n bidders")
    p.add_argument("prior")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("myerson", parents=[common], help="Myerson auction for a product prior")
    p.add_argument("prior")
    p.set_defaults(func=cmd_myerson)

    p = sub.add_parser("verify", parents=[common], help="check a mechanism for IC, IR and NPT")
    p.add_argument("mechanism")
    p.add_argument("prior")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("curve", parents=[common], help="revenue curve CSV (q,R,Rprime,Rhat)")
    p.add_argument("prior", nargs="?")
    p.add_argument("--oracle", default=None)
    p.add_argument("--lipschitz", type=float, default=None)
    p.add_argument("--floor", type=float, default=None)
    p.add_argument("--bidder", type=int, required=True)
    p.add_argument("--fix", nargs="+", required=True, help="other bidders' indices (prior) or value (oracle)")
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("certify", parents=[common], help="primal/dual gap report")
    p.add_argument("prior")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("reduce", parents=[common], help="hardness instance from a 3-CNF")
    p.add_argument("formula", help="DIMACS file, or categorized JSON with --categorized")
    p.add_argument("--categorized", action="store_true")
    p.add_argument("--scheme", choices=[s.value for s in ConstantScheme], default=ConstantScheme.BALANCED.value)
    p.add_argument("--sidecar", default=None, help="bookkeeping JSON path (default: next to --out)")
    p.add_argument("--check", action="store_true", help="solve the segments exactly and compare with the profit formulas")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("gen", parents=[common], help="random rational prior")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bidders", type=int, default=2)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--max-weight", type=int, default=9)
    p.add_argument("--density", type=float, default=1.0, help="probability that a grid point gets mass")
    p.add_argument("--dense", action="store_true", help="write the pmf as a nested list")
    p.set_defaults(func=cmd_gen)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = (args.log_level or get_settings().log_level).upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    suppress_all_solver_warnings()
    try:
        return args.func(args)
    except AuctionError as exc:
        logger.error(f"{exc.code}: {exc.message}")
        sys.stdout.write(ErrorResponse(error=exc.code, message=exc.message, detail=exc.detail).dump() + "\n")
        return exc.exit_code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
