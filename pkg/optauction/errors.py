"""
Exception hierarchy for OptAuction.
Every error carries a machine-readable code, an exit code for the CLI and a
structured detail payload.
"""

from typing import Any, Dict, Optional


class AuctionError(Exception):
    """Base class for all library errors."""

    code = "auction_error"
    exit_code = 1

    def __init__(self, message: str, detail: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message, "detail": self.detail}


class PriorValidationError(AuctionError):
    """Malformed grid, masses, shapes or instance JSON."""

    code = "invalid_prior"


class OracleRejectedError(AuctionError):
    """Density oracle violates its declared floor or Lipschitz bound."""

    code = "oracle_rejected"


class NonMonotoneAllocationError(AuctionError):
    """Allocation matrix where raising a winner's value makes them lose."""

    code = "non_monotone_allocation"

    def __init__(self, bidder: int, winning_point, losing_point):
        super().__init__(
            f"Bidder {bidder} wins at {tuple(winning_point)} but not at {tuple(losing_point)}",
            {"bidder": bidder, "winning_point": list(winning_point), "losing_point": list(losing_point)},
        )
        self.bidder = bidder
        self.winning_point = tuple(winning_point)
        self.losing_point = tuple(losing_point)


class ConflictingSelectionError(AuctionError):
    """Selected U and W points that dominate each other."""

    code = "conflicting_selection"

    def __init__(self, u_point, w_point):
        super().__init__(
            f"Selected points u{tuple(u_point)} and w{tuple(w_point)} conflict",
            {"u": list(u_point), "w": list(w_point)},
        )
        self.u_point = tuple(u_point)
        self.w_point = tuple(w_point)


class ImproperPairError(AuctionError):
    """Allocation pair whose thresholds are not suffix revenue maximisers."""

    code = "improper_pair"


class SizeGuardError(AuctionError):
    """Instance too large for an exhaustive or resolution-bounded routine."""

    code = "size_guard"
    exit_code = 3


class ReductionError(AuctionError):
    """Malformed formula or a hardness construction check that failed."""

    code = "reduction_error"


class SolverInvariantError(AuctionError):
    """An internal cross-check between two computations disagreed."""

    code = "solver_invariant"
    exit_code = 4
