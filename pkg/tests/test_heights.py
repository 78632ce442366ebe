from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from schmidtlab.arith import RationalMatrix
from schmidtlab.errors import ConfigurationError, DomainError
from schmidtlab.heights import (
    PlaceSet,
    RealizableHeight,
    height,
    height_shell_test,
    height_witness,
    realizable_heights,
)

S2 = PlaceSet.of(2)
S23 = PlaceSet.of(2, 3)


def test_height_examples():
    assert height(RationalMatrix.identity(), S2) == 1
    assert height(RationalMatrix.diag(Fraction(1, 2), 2), S2) == 2
    assert height(RationalMatrix.diag(Fraction(1, 6), 6), S23) == 6


def test_height_rejects_foreign_denominator():
    with pytest.raises(DomainError, match="outside S"):
        height(RationalMatrix.diag(Fraction(1, 3), 3), S2)


def test_realizable_examples():
    assert [h.value for h in realizable_heights(S2, 8)] == [1, 2, 4, 8]
    assert [h.value for h in realizable_heights(S23, 6)] == [1, 2, 3, 4, 6]
    assert [h.value for h in realizable_heights(PlaceSet.of(5), 4)] == [1]
    assert realizable_heights(S2, 0) == []


@pytest.mark.parametrize("S,T", [(S2, 1024), (S23, 500), (PlaceSet.of(2, 3, 5), 300)])
def test_witnesses_realize_every_height(S, T):
    hs = realizable_heights(S, T)
    values = [h.value for h in hs]
    assert values == sorted(set(values))
    brute = [n for n in range(1, T + 1) if S.is_s_unit_denominator(n)]
    assert values == brute
    for h in hs:
        assert height(height_witness(h), S) == h.value


def test_shell_test_examples():
    assert height_shell_test(RationalMatrix.diag(Fraction(1, 2), 2), 2, S2)
    assert not height_shell_test(RationalMatrix.identity(), 2, S2)
    assert height_shell_test(RationalMatrix.from_rows([[1, 1], [0, 1]]), 1, S2)


def test_place_set_validation():
    for bad in [(), (2, 2), (4,)]:
        with pytest.raises(ConfigurationError):
            PlaceSet(bad)
    with pytest.raises(ConfigurationError):
        PlaceSet.of(2, kappa=0.0)
    with pytest.raises(ConfigurationError):
        PlaceSet.of(2, kappa=0.6)
    assert PlaceSet.of(3, 2).primes == (2, 3)


def test_height_from_value():
    assert RealizableHeight.from_value(12, S23).exponents == ((2, 2), (3, 1))
    with pytest.raises(DomainError):
        RealizableHeight.from_value(10, S23)


gens = [RationalMatrix.from_rows([[0, -1], [1, 0]]), RationalMatrix.from_rows([[1, 1], [0, 1]]),
        RationalMatrix.from_rows([[1, -1], [0, 1]])]
words = st.lists(st.sampled_from(range(3)), max_size=8)


def _word(w):
    g = RationalMatrix.identity()
    for i in w:
        g = g @ gens[i]
    return g


def _s_point(a, b, k2, k3):
    # [[a, b], [0, 1/a]] with a an S-unit and b an S-integer
    u = Fraction(2) ** k2 * Fraction(3) ** k3
    return RationalMatrix.from_rows([[u, Fraction(b, 2 ** abs(k3))], [0, 1 / u]])


s_points = st.builds(_s_point, st.integers(), st.integers(-50, 50), st.integers(-4, 4), st.integers(-3, 3))


@given(words, words, s_points)
def test_bi_invariance(w1, w2, r):
    g, d = _word(w1), _word(w2)
    assert height(g @ r @ d, S23) == height(r, S23)


@given(s_points, s_points, words)
def test_submultiplicative(r, s, w):
    r = r @ _word(w)
    assert height(r @ s, S23) <= height(r, S23) * height(s, S23)
