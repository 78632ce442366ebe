import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from schmidtlab.arith import (
    RationalMatrix,
    format_matrix,
    mat_mul_mod,
    padic_abs,
    padic_norm_matrix,
    padic_valuation,
    parse_matrix,
    reduce_mod,
)
from schmidtlab.errors import ConfigurationError, DomainError

primes = st.sampled_from([2, 3, 5, 7, 11])
nonzero = st.fractions(max_denominator=10**6).filter(lambda x: x != 0)


def test_valuation_examples():
    assert padic_valuation(Fraction(1, 2), 2) == -1
    assert padic_valuation(12, 2) == 2
    assert padic_valuation(0, 5) == math.inf


def test_valuation_rejects_composite():
    with pytest.raises(ConfigurationError):
        padic_valuation(3, 4)


def test_matrix_norm_examples():
    m = RationalMatrix.from_rows([[Fraction(1, 4), 3], [5, 2]])
    assert padic_norm_matrix(m, 2) == 4
    assert padic_norm_matrix(RationalMatrix.identity(), 3) == 1
    assert padic_norm_matrix(RationalMatrix.diag(Fraction(1, 6), 6), 3) == 3
    assert padic_norm_matrix(RationalMatrix.from_rows([[0, 0], [0, 0]]), 2) == 0


def test_reduce_mod_examples():
    assert reduce_mod(RationalMatrix.identity(), 3) == (1, 0, 0, 1)
    assert reduce_mod(RationalMatrix.diag(Fraction(1, 2), 2), 3) == (2, 0, 0, 2)
    assert reduce_mod(RationalMatrix.from_rows([[1, 1], [0, 1]]), 2) == (1, 1, 0, 1)


def test_reduce_mod_names_bad_entry():
    with pytest.raises(DomainError, match="entry a"):
        reduce_mod(RationalMatrix.diag(Fraction(1, 3), 3), 3)


def test_lowest_terms_and_zero():
    m = RationalMatrix.from_rows([[Fraction(2, 4), 0], [Fraction(-3, -6), 2]])
    assert m.a == Fraction(1, 2) and m.a.denominator == 2
    assert m.b.denominator == 1 and m.b == 0


def test_serialize_roundtrip():
    m = RationalMatrix.from_rows([[Fraction(1, 4), Fraction(-3, 2)], [5, Fraction(7, 8)]])
    assert parse_matrix(format_matrix(m)) == m


@given(nonzero, nonzero, primes)
def test_abs_multiplicative(x, y, p):
    assert padic_abs(x * y, p) == padic_abs(x, p) * padic_abs(y, p)


@given(st.fractions(max_denominator=10**6), st.fractions(max_denominator=10**6), primes)
def test_ultrametric(x, y, p):
    assert padic_abs(x + y, p) <= max(padic_abs(x, p), padic_abs(y, p))


def _sl2_from(a, b, c, k):
    # [[a, b], [c, (1 + b c) / a]] is special whenever a != 0; scale by 2^k to get S-integral points
    a = a or 1
    m = RationalMatrix.from_rows([[a, b], [c, Fraction(1 + b * c, a)]])
    return m @ RationalMatrix.diag(Fraction(2) ** k, Fraction(2) ** -k)


sl2 = st.builds(
    _sl2_from,
    st.integers(-9, 9),
    st.integers(-9, 9),
    st.integers(-9, 9),
    st.integers(-3, 3),
)


@given(sl2, sl2, primes)
def test_norm_submultiplicative(g, h, p):
    assert g.is_special() and h.is_special()
    assert padic_norm_matrix(g @ h, p) <= padic_norm_matrix(g, p) * padic_norm_matrix(h, p)


@given(sl2, sl2, st.sampled_from([3, 5, 7, 9, 15]))
def test_reduce_is_homomorphism(g, h, q):
    try:
        rg, rh = reduce_mod(g, q), reduce_mod(h, q)
    except DomainError:
        return
    assert reduce_mod(g @ h, q) == mat_mul_mod(rg, rh, q)
    a, b, c, d = rg
    if g.is_special():
        assert (a * d - b * c) % q == 1 % q
