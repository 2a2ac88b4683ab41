from fractions import Fraction
from math import prod

import numpy as np
from hypothesis import strategies as st

from optauction.services.hardness import CatFormula
from optauction.services.priors import JointPrior, ValueGrid

values = st.integers(min_value=1, max_value=9)
weights = st.integers(min_value=0, max_value=4)


@st.composite
def value_levels(draw, size: int):
    return sorted(draw(st.lists(values, min_size=size, max_size=size, unique=True)))


@st.composite
def priors(draw, bidders: int = 2, max_levels: int = 3, shape=None):
    if shape is None:
        shape = tuple(draw(st.integers(min_value=1, max_value=max_levels)) for _ in range(bidders))
    levels = [draw(value_levels(n)) for n in shape]
    masses = draw(
        st.lists(weights, min_size=prod(shape), max_size=prod(shape)).filter(lambda w: sum(w) > 0)
    )
    table = np.array([Fraction(w) for w in masses], dtype=object).reshape(shape)
    return JointPrior(ValueGrid.from_lists(levels), table)


@st.composite
def product_priors(draw, bidders: int = 2, max_levels: int = 3):
    shape = tuple(draw(st.integers(min_value=1, max_value=max_levels)) for _ in range(bidders))
    levels = [draw(value_levels(n)) for n in shape]
    marginals = [
        draw(st.lists(weights, min_size=n, max_size=n).filter(lambda w: sum(w) > 0))
        for n in shape
    ]
    return JointPrior.product(levels, marginals)


@st.composite
def weight_grids(draw, max_side: int = 4):
    shape = (draw(st.integers(min_value=1, max_value=max_side)), draw(st.integers(min_value=1, max_value=max_side)))
    size = prod(shape)

    def table():
        return np.array(
            [Fraction(w, 3) for w in draw(st.lists(weights, min_size=size, max_size=size))],
            dtype=object,
        ).reshape(shape)

    return table(), table()


@st.composite
def cat_formulas(draw, max_vars: int = 2, max_clauses: int = 3):
    counts = draw(st.tuples(*[st.integers(min_value=0, max_value=max_vars)] * 3).filter(lambda c: max(c) > 0))
    live = [a for a in range(3) if counts[a]]
    clauses = []
    for _ in range(draw(st.integers(min_value=1, max_value=max_clauses))):
        cats = draw(st.lists(st.sampled_from(live), min_size=1, max_size=len(live), unique=True))
        clause = []
        for a in sorted(cats):
            sign = "" if draw(st.booleans()) else "~"
            clause.append(f"{sign}{'xyz'[a]}{draw(st.integers(min_value=1, max_value=counts[a]))}")
        clauses.append(clause)
    return CatFormula.from_strings(*counts, clauses)
