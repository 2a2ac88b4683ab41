import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optauction.errors import (
    ConflictingSelectionError,
    ImproperPairError,
    NonMonotoneAllocationError,
    PriorValidationError,
)
from optauction.services.mechanism import (
    AllocationMatrix,
    AllocationPair,
    CurvePair,
    expected_revenue,
    feasible_beta_floor,
    is_proper,
    make_proper,
    monotone_closure,
    noncrossing,
    revenue_via_mpc,
    thresholds_and_payments,
    verify_truthful,
)
from optauction.services.oracles import UniformOracle
from optauction.services.priors import JointPrior, ValueGrid, mpc_discrete

from . import strategies

UNIFORM_WINNERS = np.array([[0, 2], [1, 1]])


@pytest.fixture
def uniform_mechanism(uniform22):
    return thresholds_and_payments(AllocationMatrix(UNIFORM_WINNERS), uniform22.grid)


class TestThresholdPayments:
    def test_payments_and_revenue(self, uniform_mechanism, uniform22):
        assert uniform_mechanism.payment((1, 0), 0) == 2
        assert uniform_mechanism.payment((0, 1), 1) == 2
        assert uniform_mechanism.payment((0, 0), 0) == 0
        assert expected_revenue(uniform_mechanism, uniform22) == Fraction(3, 2)

    def test_thresholds(self, uniform_mechanism):
        assert uniform_mechanism.threshold(0, (0,)) == 2
        assert uniform_mechanism.threshold(1, (0,)) == 2
        assert uniform_mechanism.threshold(1, (1,)) is None

    def test_truthful(self, uniform_mechanism):
        report = verify_truthful(uniform_mechanism)
        assert report.ok
        assert report.checked == 8

    def test_non_monotone_rejected(self, uniform22):
        assert not AllocationMatrix(np.array([[1, 0], [0, 0]])).is_monotone()
        with pytest.raises(NonMonotoneAllocationError) as info:
            thresholds_and_payments(AllocationMatrix(np.array([[1, 0], [0, 0]])), uniform22.grid)
        assert info.value.detail["bidder"] == 0

    def test_shape_mismatch(self, uniform_mechanism):
        prior = JointPrior.uniform([[1, 2, 3], [1, 2]])
        with pytest.raises(PriorValidationError):
            expected_revenue(uniform_mechanism, prior)

    def test_winner_ids_bounded(self):
        with pytest.raises(PriorValidationError, match="Winner ids"):
            AllocationMatrix(np.array([[3, 0], [0, 0]]))


class TestVerifyTruthful:
    def test_overcharge_is_ir_violation(self, uniform_mechanism):
        payments = uniform_mechanism.payments.copy()
        payments[1, 0, 0] = Fraction(3)
        report = verify_truthful(uniform_mechanism.with_payments(payments))
        assert not report.ok
        assert report.violation.kind == "IR"
        assert report.violation.bidder == 0
        assert report.violation.point == (1, 0)

    def test_transfer_to_loser_is_npt_violation(self, uniform_mechanism):
        payments = uniform_mechanism.payments.copy()
        payments[0, 0, 0] = Fraction(-1)
        report = verify_truthful(uniform_mechanism.with_payments(payments))
        assert report.violation.kind == "NPT"
        assert report.violation.to_dict()["truthful_utility"] == "1"

    def test_misreport_gain_is_ic_violation(self):
        grid = ValueGrid.from_lists([[1, 2, 3]])
        mech = thresholds_and_payments(AllocationMatrix(np.array([1, 1, 1])), grid)
        payments = mech.payments.copy()
        payments[2, 0] = Fraction(2)
        report = verify_truthful(mech.with_payments(payments))
        assert report.violation.kind == "IC"
        assert report.violation.point == (2,)
        assert report.violation.deviation == 0
        assert report.violation.deviation_utility == 2


class TestAllocationPair:
    def test_round_trip(self):
        alloc = AllocationMatrix(UNIFORM_WINNERS)
        pair = AllocationPair.from_matrix(alloc)
        assert pair.alpha == (1, 1)
        assert pair.beta == (1, 2)
        assert noncrossing(pair)
        assert pair.to_matrix().winners.tolist() == UNIFORM_WINNERS.tolist()

    def test_empty_pair_sells_nothing(self):
        assert not AllocationPair.empty((2, 3)).to_matrix().winners.any()

    def test_crossing_rejected(self):
        pair = AllocationPair((2, 2), (0, 0), (0, 0))
        assert not noncrossing(pair)
        with pytest.raises(PriorValidationError, match="crosses"):
            pair.to_matrix()

    def test_touching_boundaries_only_cross_strictly(self):
        pair = AllocationPair((2, 2), (2, 1), (2, 1))
        assert not noncrossing(pair, strict=True)
        assert noncrossing(pair, strict=False)

    def test_threshold_range(self):
        with pytest.raises(PriorValidationError):
            AllocationPair((2, 2), (3, 0), (0, 0))

    def test_beta_floor(self):
        assert feasible_beta_floor((1, 2), 2) == [0, 1]
        assert feasible_beta_floor((2, 2), 2) == [0, 0]


class TestMonotoneClosure:
    def test_closure(self):
        pair = monotone_closure([(1, 0), (1, 1)], [(0, 1)], (2, 2))
        assert pair.alpha == (1, 1)
        assert pair.beta == (1, 2)

    def test_conflict(self):
        with pytest.raises(ConflictingSelectionError):
            monotone_closure([(0, 1)], [(1, 0)], (2, 2))


@st.composite
def prior_and_pair(draw, side=None):
    shape = (side, side) if side else None
    prior = draw(strategies.priors(bidders=2, max_levels=4, shape=shape))
    n1, n2 = prior.shape
    alpha = tuple(draw(st.integers(0, n1)) for _ in range(n2))
    beta = tuple(lo + draw(st.integers(0, n2 - lo)) for lo in feasible_beta_floor(alpha, n1))
    return prior, AllocationPair((n1, n2), alpha, beta)


class TestProperness:
    @pytest.mark.parametrize("side", [2, 3, 4])
    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_make_proper_never_loses_revenue(self, side, data):
        prior, pair = data.draw(prior_and_pair(side))
        before = expected_revenue(thresholds_and_payments(pair.to_matrix(), prior.grid), prior)
        proper = make_proper(pair, prior)
        mech = thresholds_and_payments(proper.to_matrix(), prior.grid)
        assert is_proper(proper, prior)
        assert expected_revenue(mech, prior) >= before
        assert make_proper(proper, prior) == proper

    @pytest.mark.parametrize("side", [2, 3, 4])
    @settings(max_examples=100, deadline=None)
    @given(data=st.data())
    def test_mpc_revenue_matches_payments_for_proper_pairs(self, side, data):
        prior, pair = data.draw(prior_and_pair(side))
        proper = make_proper(pair, prior)
        mech = thresholds_and_payments(proper.to_matrix(), prior.grid)
        f, g = mpc_discrete(prior, 0), mpc_discrete(prior, 1)
        assert revenue_via_mpc(proper, f, g, prior) == expected_revenue(mech, prior, normalize=False)

    def test_improper_pair_rejected_on_request(self):
        prior = JointPrior.from_lists([[1, 10], [1]], [[3], [1]])
        pair = AllocationPair((2, 1), (0,), (1, 1))
        assert not is_proper(pair, prior)
        f, g = mpc_discrete(prior, 0), mpc_discrete(prior, 1)
        with pytest.raises(ImproperPairError):
            revenue_via_mpc(pair, f, g, prior, require_proper=True)
        assert make_proper(pair, prior).alpha == (1,)


class TestCurves:
    def test_noncrossing(self):
        assert CurvePair((0.5, 0.5), (math.inf, math.inf)).noncrossing()
        assert not CurvePair((0.0, 0.0), (0.0, 0.0)).noncrossing()

    def test_make_proper_moves_to_reserve(self):
        curves = make_proper(CurvePair((0.1,), (math.inf,)), UniformOracle())
        assert curves.alpha[0] == pytest.approx(0.5, abs=1e-3)
        assert math.isinf(curves.beta[0])

    def test_source_type_checked(self, uniform22):
        with pytest.raises(PriorValidationError):
            make_proper(CurvePair((0.5,), (0.5,)), uniform22)
