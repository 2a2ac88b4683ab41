from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from optauction.errors import PriorValidationError
from optauction.services.oracles import UniformOracle
from optauction.services.priors import (
    JointPrior,
    ValueGrid,
    cell_mass_continuous,
    cell_mass_table,
    discretize_oracle,
    marginalize,
    mpc_discrete,
    revenue_curve,
    skyline_table,
    suffix_revenue,
    suffix_revenue_table,
    upper_hull,
)

from . import strategies


class TestValidation:
    def test_values_must_increase(self):
        with pytest.raises(PriorValidationError, match="strictly increasing"):
            ValueGrid.from_lists([[1, 1], [1, 2]])

    def test_negative_value(self):
        with pytest.raises(PriorValidationError, match="negative value"):
            ValueGrid.from_lists([["-1/2", 1]])

    def test_negative_mass(self):
        with pytest.raises(PriorValidationError, match="Negative mass"):
            JointPrior.from_lists([[1, 2], [1]], [[1], [-1]])

    def test_zero_total_mass(self):
        with pytest.raises(PriorValidationError, match="zero total mass"):
            JointPrior.from_lists([[1, 2], [1, 2]], [[0, 0], [0, 0]])

    def test_shape_mismatch(self):
        with pytest.raises(PriorValidationError, match="does not match grid"):
            JointPrior.from_lists([[1, 2], [1, 2]], [[1, 1, 1], [1, 1, 1]])

    def test_normalized_flag_checked(self):
        with pytest.raises(PriorValidationError, match="flagged normalized"):
            JointPrior.from_lists([[1], [1]], [[2]], normalized=True)

    def test_floats_rejected(self):
        with pytest.raises(PriorValidationError, match="Floats"):
            JointPrior.from_lists([[1], [1]], [[0.5]])


def test_normalize(correlated):
    scaled = JointPrior(correlated.grid, correlated.masses * 6)
    assert scaled.total_mass == 6
    assert scaled.normalize().masses.tolist() == correlated.masses.tolist()


def test_suffix_revenue(uniform22):
    assert suffix_revenue(uniform22, 0, (0, 1)) == Fraction(1, 2)
    assert suffix_revenue(uniform22, 0, (1, 1)) == Fraction(1, 2)
    assert suffix_revenue(uniform22, 1, (1, 1)) == Fraction(1, 2)
    with pytest.raises(PriorValidationError):
        suffix_revenue(uniform22, 2, (0, 0))
    with pytest.raises(PriorValidationError):
        suffix_revenue(uniform22, 0, (2, 0))


def test_mpc_uniform(uniform22):
    f = mpc_discrete(uniform22, 0)
    g = mpc_discrete(uniform22, 1)
    half = Fraction(1, 2)
    assert f.values.tolist() == [[0, 0], [half, half]]
    assert g.values.tolist() == [[0, half], [0, half]]
    assert f.positive_points() == [(1, 0), (1, 1)]
    assert f.total() + g.total() == 2


def test_mpc_uses_grid_values_not_indices():
    prior = JointPrior.from_lists([[1, 10], [1]], [[3], [1]])
    f = mpc_discrete(prior, 0)
    # selling at 10 to a quarter of the mass beats selling at 1 to everyone
    assert f[(1, 0)] == 10
    assert f[(0, 0)] == 0


@settings(max_examples=60, deadline=None)
@given(strategies.priors(bidders=2, max_levels=4))
def test_skyline_identity(prior):
    for bidder in range(prior.n_bidders):
        f = np.moveaxis(mpc_discrete(prior, bidder).values, bidder, 0)
        rev = np.moveaxis(suffix_revenue_table(prior, bidder), bidder, 0)
        assert all(x >= 0 for x in f.flat)
        for i in range(f.shape[0]):
            tail = f[i:].sum(axis=0)
            best = np.max(rev[i:], axis=0)
            assert tail.tolist() == best.tolist()


@settings(max_examples=30, deadline=None)
@given(strategies.priors(bidders=3, max_levels=2))
def test_skyline_is_suffix_max(prior):
    for bidder in range(3):
        sky = skyline_table(prior, bidder)
        rev = suffix_revenue_table(prior, bidder)
        assert all(s >= r for s, r in zip(sky.flat, rev.flat))


def test_marginalize_orders_bidders():
    prior = JointPrior.point_mass([[1, 2], [1, 2], [1, 2, 3]], (1, 0, 2))
    pair = marginalize(prior, (2, 0))
    assert pair.shape == (3, 2)
    assert pair.masses[2, 1] == 1
    assert pair.total_mass == 1


def test_marginalize_rejects_duplicates(uniform222):
    with pytest.raises(PriorValidationError, match="Duplicate"):
        marginalize(uniform222, (1, 1))


def test_marginal(uniform222):
    assert uniform222.marginal(1).tolist() == [Fraction(1, 2), Fraction(1, 2)]


@pytest.mark.parametrize("points, hull", [
    ([(0, 0), (1, 1), (2, 0)], [(0, 0), (1, 1), (2, 0)]),
    ([(0, 0), (1, 0), (2, 2)], [(0, 0), (2, 2)]),
    ([(0, 0), (1, 1), (2, 2)], [(0, 0), (2, 2)]),
    ([(Fraction(1, 2), 1)], [(Fraction(1, 2), 1)]),
])
def test_upper_hull(points, hull):
    assert upper_hull(points) == hull


class TestRevenueCurve:
    def test_discrete_curve(self, uniform22):
        curve = revenue_curve(uniform22, 0, (0,))
        assert curve.q == [0, Fraction(1, 2), 1]
        assert curve.R == [0, 1, 1]
        assert curve.Rprime == [0, 1, 1]
        assert curve.Rhat == [0, 1, 1]
        assert curve.skyline_at(Fraction(3, 4)) == 1
        assert curve.skyline_at(Fraction(1, 4)) == 0

    def test_hull_dominates(self):
        prior = JointPrior.from_lists([[1, 2, 6], [1]], [[6], [1], [1]])
        curve = revenue_curve(prior, 0, (0,))
        assert all(h >= r for h, r in zip(curve.Rhat, curve.R))
        assert all(b >= a for a, b in zip(curve.Rprime, curve.Rprime[1:]))
        assert curve.q[0] == 0 and curve.q[-1] == 1

    def test_frame_columns(self, uniform22):
        frame = revenue_curve(uniform22, 1, (1,)).to_frame()
        assert list(frame.columns) == ["q", "R", "Rprime", "Rhat"]
        assert len(frame) == 3

    def test_empty_line(self):
        prior = JointPrior.point_mass([[1, 2], [1, 2]], (1, 1))
        with pytest.raises(PriorValidationError, match="No mass"):
            revenue_curve(prior, 0, (0,))

    def test_wrong_arity(self, uniform222):
        with pytest.raises(PriorValidationError, match="fixed coordinates"):
            revenue_curve(uniform222, 0, (0,))

    def test_oracle_curve_peaks_at_half(self):
        curve = revenue_curve(UniformOracle(), 0, (0.5,), samples=100)
        assert max(curve.R) == pytest.approx(0.25, abs=1e-3)
        assert curve.q[-1] == pytest.approx(1.0)


class TestContinuousCells:
    def test_uniform_table_total(self):
        # each row contributes max_x x(1-x) = 1/4 times its height
        f = cell_mass_table(UniformOracle(), 0, 10)
        assert f.shape == (10, 10)
        assert f.sum() == pytest.approx(0.25, abs=1e-9)
        assert np.all(f[:5] == pytest.approx(0.0, abs=1e-12))

    def test_bidder_symmetry(self):
        f = cell_mass_table(UniformOracle(), 0, 6)
        g = cell_mass_table(UniformOracle(), 1, 6)
        assert np.allclose(f, g.T)

    def test_single_cell(self):
        assert cell_mass_continuous(UniformOracle(), 0, (9, 0), 0.1) == pytest.approx(0.009, abs=1e-9)
        assert cell_mass_continuous(UniformOracle(), 1, (3, 2), 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_epsilon_must_be_reciprocal(self):
        with pytest.raises(PriorValidationError):
            cell_mass_continuous(UniformOracle(), 0, (0, 0), 0.3)

    def test_resolution_floor(self):
        with pytest.raises(PriorValidationError):
            cell_mass_table(UniformOracle(), 0, 1)

    def test_discretized_uniform_prior(self):
        disc = discretize_oracle(UniformOracle(), 4)
        assert disc.prior.total_mass == 1
        assert set(disc.prior.masses.flat) == {Fraction(1, 16)}
        assert disc.prior.grid.levels[0] == (0, Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
        assert disc.quantization_error < 1e-9
