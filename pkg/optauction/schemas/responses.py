"""
Wire documents for priors, mechanisms and solver results.

Rationals travel as "p/q" strings, grid indices are 0-based and every
document carries ``schema_version``.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from optauction import SCHEMA_VERSION
from optauction.errors import PriorValidationError
from optauction.services.mechanism import AllocationMatrix, Mechanism
from optauction.services.priors import JointPrior, ValueGrid
from optauction.utils.rationals import fraction_array, format_rational, parse_rational, to_strings

Rational = Union[str, int]


class Versioned(BaseModel):
    schema_version: str = SCHEMA_VERSION

    def dump(self) -> str:
        return self.model_dump_json(indent=2)


class SparsePmf(BaseModel):
    shape: List[int]
    entries: List[List[Rational]] = Field(default_factory=list, description='["p/q", i1, ..., in] rows')


class PriorDocument(Versioned):
    bidders: int
    values: List[List[Rational]]
    pmf: Union[SparsePmf, List[Any]]

    @classmethod
    def from_prior(cls, prior: JointPrior, sparse: bool = True) -> "PriorDocument":
        values = [[format_rational(v) for v in level] for level in prior.grid.levels]
        if sparse:
            entries = [[format_rational(prior.masses[idx])] + [int(k) for k in idx] for idx in prior.support()]
            pmf: Union[SparsePmf, List[Any]] = SparsePmf(shape=list(prior.shape), entries=entries)
        else:
            pmf = to_strings(prior.masses)
        return cls(bidders=prior.n_bidders, values=values, pmf=pmf)

    def to_prior(self) -> JointPrior:
        if len(self.values) != self.bidders:
            raise PriorValidationError(f"Document declares {self.bidders} bidders but has {len(self.values)} value lists")
        grid = ValueGrid.from_lists(self.values)
        if isinstance(self.pmf, SparsePmf):
            if tuple(self.pmf.shape) != grid.shape:
                raise PriorValidationError(f"pmf shape {self.pmf.shape} does not match values {list(grid.shape)}")
            masses = np.empty(grid.shape, dtype=object)
            masses.fill(parse_rational(0))
            for row in self.pmf.entries:
                if len(row) != self.bidders + 1:
                    raise PriorValidationError(f"Sparse entry {row} needs a mass and {self.bidders} indices")
                idx = tuple(int(k) for k in row[1:])
                if any(not 0 <= k < n for k, n in zip(idx, grid.shape)):
                    raise PriorValidationError(f"Sparse entry index {list(idx)} outside the grid")
                masses[idx] += parse_rational(row[0])
        else:
            try:
                masses = fraction_array(self.pmf)
            except ValueError as exc:
                raise PriorValidationError("Dense pmf is not a regular nested list") from exc
        return JointPrior(grid, masses)


class MechanismDocument(Versioned):
    bidders: int
    values: List[List[Rational]]
    allocation: List[Any] = Field(description="winner ids: 0 keeps the item, k gives it to bidder k-1")
    thresholds: List[Any] = Field(description="per bidder, indexed by the others' values; null means never")
    payments: List[Any] = Field(description="per grid point, one payment per bidder")

    @classmethod
    def from_mechanism(cls, mech: Mechanism) -> "MechanismDocument":
        return cls(
            bidders=mech.n_bidders,
            values=[[format_rational(v) for v in level] for level in mech.grid.levels],
            allocation=mech.allocation.winners.tolist(),
            thresholds=[to_strings(t) for t in mech.thresholds],
            payments=to_strings(mech.payments),
        )

    def to_mechanism(self) -> Mechanism:
        grid = ValueGrid.from_lists(self.values)
        winners = np.asarray(self.allocation, dtype=int)
        if winners.shape != grid.shape:
            raise PriorValidationError(f"Allocation shape {list(winners.shape)} does not match values")
        payments = fraction_array(self.payments)
        if payments.shape != grid.shape + (self.bidders,):
            raise PriorValidationError("Payments need one entry per bidder at every grid point")
        thresholds = []
        for table in self.thresholds:
            arr = np.array(table, dtype=object)
            out = np.empty(arr.shape, dtype=object)
            for idx in np.ndindex(arr.shape):
                out[idx] = None if arr[idx] is None else parse_rational(arr[idx])
            thresholds.append(out)
        # payments are taken as given so tampered documents reach the verifier intact
        return Mechanism(grid, AllocationMatrix(winners), tuple(thresholds), payments)


class Certificate(BaseModel):
    ok: bool
    primal: str
    dual: str
    gap: str
    epsilon_budget: Optional[Dict[str, float]] = None
    message: Optional[str] = None


class SolveResponse(Versioned):
    command: str = "solve2"
    revenue: str
    revenue_float: float
    alpha: List[int]
    beta: List[int]
    mechanism: MechanismDocument
    independent_set: Dict[str, Any]
    certificate: Certificate
    transshipment: List[Dict[str, Any]] = Field(default_factory=list)


class BruteForceResponse(Versioned):
    command: str = "brute"
    revenue: str
    revenue_float: float
    explored: int
    alpha: Optional[List[int]] = None
    beta: Optional[List[int]] = None
    mechanism: MechanismDocument


class WitnessSummary(BaseModel):
    ok: bool
    cost: str
    plan_cost: str
    entries: int
    violation: Optional[str] = None


class ContinuousResponse(Versioned):
    command: str = "continuous"
    oracle: Dict[str, Any]
    epsilon: float
    resolution: int
    revenue: str
    revenue_float: float
    upper_bound: str
    upper_bound_float: float
    alpha: List[Optional[float]] = Field(description="threshold of bidder 0 per y cell; null means never")
    beta: List[Optional[float]]
    ledger: Dict[str, float]
    certificate: Certificate
    witness: WitnessSummary


class PairRevenue(BaseModel):
    pair: List[int]
    revenue: str


class PairsResponse(Versioned):
    command: str = "pairs"
    pair: List[int]
    revenue: str
    revenue_float: float
    table: List[PairRevenue]
    mechanism: MechanismDocument


class MyersonResponse(Versioned):
    command: str = "myerson"
    revenue: str
    revenue_float: float
    mechanism: MechanismDocument


class VerifyResponse(Versioned):
    command: str = "verify"
    ok: bool
    checked: int
    violation: Optional[Dict[str, Any]] = None
    revenue: Optional[str] = None


class CertifyResponse(Versioned):
    command: str = "certify"
    kind: str
    certificate: Certificate


class ReductionSidecar(Versioned):
    formula: Dict[str, Any]
    scheme: str
    side: int
    h: List[str]
    constants: Dict[str, str]
    normalization: str
    literals: Dict[str, List[Dict[str, Any]]]
    clauses: Dict[str, List[Dict[str, Any]]]
    scaffolding: List[Dict[str, Any]]
    F: str
    cost1: str
    cost2_by_satisfied: Dict[str, str]
    report: Optional[Dict[str, Any]] = None


class ErrorResponse(Versioned):
    error: str
    message: str
    detail: Dict[str, Any] = Field(default_factory=dict)


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise PriorValidationError(f"File not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise PriorValidationError(f"{path} is not valid JSON: {exc.msg}", {"line": exc.lineno}) from exc


def _validate(model, payload: Dict[str, Any], what: str):
    try:
        return model.model_validate(payload)
    except ValidationError as exc:
        raise PriorValidationError(f"Invalid {what} document", {"errors": exc.errors(include_url=False)}) from exc


def load_prior(path: Union[str, Path]) -> JointPrior:
    return _validate(PriorDocument, read_json(path), "prior").to_prior()


def load_mechanism(path: Union[str, Path]) -> Mechanism:
    return _validate(MechanismDocument, read_json(path), "mechanism").to_mechanism()
