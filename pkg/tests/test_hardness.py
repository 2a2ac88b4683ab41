from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from optauction.config import get_settings
from optauction.errors import ReductionError, SizeGuardError
from optauction.services.hardness import (
    CatFormula,
    CnfFormula,
    ConstantScheme,
    Segment,
    catsat_to_instance,
    certify_segments,
    check_inequalities,
    extract_segments,
    intended_segments,
    intersection_census,
    max3sat_to_catsat,
    mechanism_to_segments,
    parse_dimacs,
    solve_3segments_exact,
    verify_reduction,
)
from optauction.services.mechanism import expected_revenue
from optauction.services.multi import brute_force_n
from optauction.services.priors import JointPrior

from . import strategies


class TestDimacs:
    def test_parse(self):
        cnf = parse_dimacs("c tiny\np cnf 3 2\n1 -2 0\n2 3\n-1 0\n")
        assert cnf.n_vars == 3
        assert cnf.clauses == ((1, -2), (2, 3, -1))

    def test_trailing_clause_without_terminator(self):
        assert parse_dimacs("p cnf 2 1\n1 2").clauses == ((1, 2),)

    @pytest.mark.parametrize("text, message", [
        ("", "Missing"),
        ("1 2 0", "before"),
        ("p dnf 2 1\n1 0", "Malformed"),
        ("p cnf 1 1\n2 0", "exceeds"),
    ])
    def test_errors(self, text, message):
        with pytest.raises(ReductionError, match=message):
            parse_dimacs(text)


class TestCategorize:
    def test_single_clause(self):
        cat = max3sat_to_catsat(CnfFormula(3, ((1, -2, 3),)))
        assert cat.counts == (3, 3, 3)
        assert cat.m == 10
        assert [str(lit) for lit in cat.clauses[0]] == ["x1", "~y2", "z3"]

    def test_empty_formula(self):
        cat = max3sat_to_catsat(CnfFormula(2, ()))
        assert cat.m == 0 and cat.n == 0

    def test_long_clause_rejected(self):
        with pytest.raises(ReductionError, match="3-CNF"):
            max3sat_to_catsat(CnfFormula(4, ((1, 2, 3, 4),)))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(
        st.lists(st.integers(1, 3).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=3),
        min_size=1, max_size=4,
    ))
    def test_satisfiability_preserved(self, clauses):
        cnf = CnfFormula(3, tuple(tuple(c) for c in clauses))
        cat = max3sat_to_catsat(cnf)
        satisfiable = any(
            cnf.satisfied([bool(bits >> k & 1) for k in range(3)]) == len(clauses) for bits in range(8)
        )
        assert (cat.max_satisfied()[0] == cat.m) == satisfiable


class TestCatFormula:
    @pytest.mark.parametrize("clause, message", [
        (["x1", "~x1"], "repeats a category"),
        (["y1"], "out of range"),
        (["w1"], "Bad categorized literal"),
    ])
    def test_validation(self, clause, message):
        with pytest.raises(ReductionError, match=message):
            CatFormula.from_strings(1, 0, 1, [clause])

    def test_max_satisfied(self):
        formula = CatFormula.from_strings(1, 0, 0, [["x1"], ["~x1"]])
        best, assignment = formula.max_satisfied()
        assert best == 1
        assert formula.satisfied(assignment) == 1

    def test_max_satisfied_guard(self, single_clause):
        with pytest.raises(SizeGuardError):
            single_clause.max_satisfied(limit=4)


class TestInstance:
    def test_single_clause_instance(self, single_clause):
        inst = catsat_to_instance(single_clause)
        assert inst.side == 7
        assert inst.h == tuple(Fraction(v) for v in ["1", "5/4", "3/2", "7/4", "2", "4", "5"])
        assert inst.constants == {"c1": 1, "c2": 1, "c3": 1, "c4": 3, "c5": Fraction(2, 5)}
        assert inst.scaffolding_profit == 120
        assert inst.cost1() == Fraction(251, 2)
        assert inst.cost2(Fraction(0)) == Fraction(249, 2)
        assert inst.prior.shape == (7, 7, 7)

    def test_placement_families(self, single_clause):
        inst = catsat_to_instance(single_clause)
        counts = {role: len(inst.by_role(role)) for role in ("literal", "clause", "c3", "c4", "c5")}
        assert counts == {"literal": 6, "clause": 3, "c3": 6, "c4": 6, "c5": 12}
        assert inst.normalization == sum(p.mass for p in inst.placements)

    def test_bookkeeping(self, single_clause):
        book = catsat_to_instance(single_clause).bookkeeping()
        assert book["F"] == "120/1"
        assert book["cost1"] == "251/2"
        assert set(book["literals"]) == {"x1", "y1", "z1"}
        assert len(book["literals"]["x1"]) == 2
        assert len(book["clauses"]["1"]) == 3

    def test_inequalities_hold(self, single_clause):
        inst = catsat_to_instance(single_clause)
        assert check_inequalities(single_clause, inst.h, inst.constants) == []

    def test_fractional_constants(self, single_clause):
        c = ConstantScheme.FRACTIONAL.constants(2, 3)
        assert c["c1"] == Fraction(1, 12)
        assert c["c4"] == Fraction(3, 4)
        assert c["c5"] == Fraction(1, 15)
        assert ConstantScheme.BALANCED.constants(2, 3)["c4"] == 9
        inst = catsat_to_instance(single_clause, ConstantScheme.FRACTIONAL)
        assert inst.scheme is ConstantScheme.FRACTIONAL

    def test_needs_variables(self):
        with pytest.raises(ReductionError, match="no variables"):
            catsat_to_instance(CatFormula(0, 0, 0))

    def test_intended_segments(self, single_clause):
        inst = catsat_to_instance(single_clause)
        segments = intended_segments(inst)
        roles = [p.role for p in segments.values()]
        assert roles.count("literal") == 6
        assert roles.count("clause") == 3

    def test_census(self, single_clause):
        census = intersection_census(catsat_to_instance(single_clause))
        assert census.ok
        assert census.counts == {"literal-negation": 3, "clause-clause": 3, "clause-literal": 3}


class TestSegments:
    def test_point_mass_segments(self):
        prior = JointPrior.point_mass([[1, 2], [1, 2], [1, 2]], (1, 0, 1))
        segments = extract_segments(prior)
        assert [s.axis for s in segments] == [0, 1, 2]
        assert [s.weight for s in segments] == [2, 1, 2]
        assert all(s.apex == (2, 1, 2) for s in segments)
        assert solve_3segments_exact(segments).value == 2

    def test_heavier_of_two_crossing_segments(self):
        light = Segment(0, (1, 1, 1), 2, Fraction(3))
        heavy = Segment(1, (1, 1, 1), 2, Fraction(5))
        solution = solve_3segments_exact([light, heavy])
        assert solution.value == 5
        assert solution.selected == (heavy,)
        assert solution.components == 1

    def test_component_guard(self):
        segments = [Segment(0, (1, 1, 1), 2, Fraction(1)), Segment(1, (1, 1, 1), 2, Fraction(1))]
        with pytest.raises(SizeGuardError):
            solve_3segments_exact(segments, limit=1)

    def test_mechanism_segments_carry_its_revenue(self, uniform222):
        mech = brute_force_n(uniform222).mechanism
        segments = mechanism_to_segments(mech.allocation, uniform222)
        assert sum(s.weight for s in segments) == expected_revenue(mech, uniform222, normalize=False)

    @settings(max_examples=40, deadline=None)
    @given(strategies.priors(bidders=3, max_levels=2))
    def test_segment_optimum_is_the_auction_optimum(self, prior):
        cert = certify_segments(prior)
        assert cert.ok
        assert cert.primal == brute_force_n(prior).revenue * prior.total_mass

    @settings(max_examples=25, deadline=None)
    @given(strategies.priors(bidders=3, max_levels=2))
    def test_binary_program_matches_clique_search(self, prior):
        segments = extract_segments(prior)
        by_program = solve_3segments_exact(segments, clique_limit=0)
        by_clique = solve_3segments_exact(segments, clique_limit=len(segments))
        assert by_program.value == by_clique.value

    def test_reduction_component_within_defaults(self, single_clause):
        segments = extract_segments(catsat_to_instance(single_clause).prior)
        assert len(segments) > get_settings().segment_clique_limit
        assert solve_3segments_exact(segments).value == Fraction(251, 2)


class TestVerifyReduction:
    def test_satisfiable(self, single_clause):
        report = verify_reduction(single_clause)
        assert report.ok, report.messages
        assert report.satisfiable
        assert report.optimum == report.cost1 == Fraction(251, 2)
        assert report.decoded_satisfied >= report.clause_segments
        assert report.to_dict()["F"] == "120/1"

    def test_unsatisfiable(self):
        formula = CatFormula.from_strings(1, 0, 0, [["x1"], ["~x1"]])
        report = verify_reduction(formula)
        assert report.ok, report.messages
        assert not report.satisfiable
        assert report.rho == Fraction(1, 2)
        assert report.optimum <= report.cost2

    @pytest.mark.parametrize("clauses", [
        [["x1", "y1"], ["~x1"], ["~y1"]],
        [["x1"], ["~x1", "y1"], ["~y1"]],
    ])
    def test_unsatisfiable_three_clauses(self, clauses):
        report = verify_reduction(CatFormula.from_strings(1, 1, 0, clauses))
        assert report.ok, report.messages
        assert report.max_satisfied == 2
        assert report.rho == Fraction(2, 3)
        assert report.optimum <= report.cost2

    @pytest.mark.slow
    @settings(max_examples=30, deadline=None)
    @given(strategies.cat_formulas(max_vars=2, max_clauses=3))
    def test_profit_formulas_on_small_formulas(self, formula):
        report = verify_reduction(formula)
        assert report.ok, report.messages
        if report.satisfiable:
            assert report.optimum == report.cost1
        else:
            assert report.optimum <= report.cost2
        assert report.decoded_satisfied >= report.clause_segments
