from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from artifact.exact_arith import (
    BadModulus, ExactMatrix, FieldElement, RationalFunction, ZeroDenominator, ZeroInverse, check_characteristic,
    determinant, field_inverse, is_prime, matrix_rank, row_echelon_pivots,
)
from oracles import leibniz_det, minor_rank

PRIMES = [2, 3, 5, 7, 101]
small = st.integers(-6, 6)


def test_is_prime_small_values():
    assert [p for p in range(30) if is_prime(p)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]


@pytest.mark.parametrize("bad", [1, 4, 9, -3])
def test_bad_characteristic_rejected(bad):
    with pytest.raises(BadModulus):
        check_characteristic(bad)


def test_fraction_reduction_mod_p():
    assert FieldElement(Fraction(1, 2), 7) == 4
    with pytest.raises(ZeroDenominator):
        FieldElement(Fraction(1, 7), 7)


def test_mixed_characteristics_rejected():
    with pytest.raises(BadModulus):
        FieldElement(1, 5) + FieldElement(1, 7)


def test_inverse_of_zero():
    with pytest.raises(ZeroInverse):
        field_inverse(FieldElement(0, 5))


@given(st.integers(), st.integers(), st.sampled_from([0, *PRIMES]))
def test_field_axioms(a, b, p):
    x, y = FieldElement(a, p), FieldElement(b, p)
    assert x + y == y + x
    assert x * y == y * x
    assert (x - y) + y == x
    if not y.is_zero():
        assert (x / y) * y == x
        assert y * field_inverse(y) == 1


@settings(max_examples=60)
@given(st.lists(st.lists(small, min_size=3, max_size=3), min_size=3, max_size=3), st.sampled_from([0, 3, 7]))
def test_determinant_matches_leibniz(rows, p):
    det = determinant([[FieldElement(x, p) for x in r] for r in rows])
    assert det == leibniz_det(rows, p)


@settings(max_examples=60)
@given(st.integers(1, 4), st.integers(1, 4), st.data(), st.sampled_from([0, 2, 5]))
def test_rank_matches_minor_oracle(r, c, data, p):
    rows = data.draw(st.lists(st.lists(small, min_size=c, max_size=c), min_size=r, max_size=r))
    assert matrix_rank(ExactMatrix.from_rows(rows, p)) == minor_rank(rows, p)


def test_pivots_name_independent_rows():
    m = ExactMatrix.from_rows([[1, 2, 3], [2, 4, 6], [0, 1, 1]], 0)
    piv = row_echelon_pivots(m)
    assert len(piv) == 2
    assert sorted(c for _, c in piv) == [0, 1]


def test_reduce_mod_changes_rank():
    m = ExactMatrix.from_rows([[1, 0], [0, 7]], 0)
    assert matrix_rank(m) == 2
    assert matrix_rank(m.reduce_mod(7)) == 1


@given(st.lists(small, min_size=1, max_size=4), st.lists(small, min_size=1, max_size=3),
       st.sampled_from([0, 5, 7]))
def test_rational_function_field_ops(num, den, p):
    if all(x % p == 0 for x in den) if p else not any(den):
        return
    f = RationalFunction(num, den, p)
    t = RationalFunction.t(p)
    g = f * t + 1
    assert (g - 1) / t == f
    if not f.is_zero():
        assert (f / f) == 1
        assert f.valuation() == (f * t).valuation() - 1


def test_valuation_and_limit():
    t = RationalFunction.t(0)
    f = (t * t + 2 * t) / (t + 3)
    assert f.valuation() == 1
    assert f.at_zero() == 0
    g = (t + 2) / (t + 3)
    assert g.at_zero() == Fraction(2, 3)
    with pytest.raises(ZeroDivisionError):
        (1 / t).at_zero()
    assert RationalFunction.constant(0).valuation() == float("inf")
