from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from schmidtlab.errors import ConfigurationError, InsufficientDataError, RangeError
from schmidtlab.heights import PlaceSet, realizable_heights
from schmidtlab.padic_volume import (
    CongruenceCondition,
    SphereVolumeTable,
    ball_volume_padic,
    congruence_measure,
    disjoint_pieces,
    growth_exponent_a,
    sl2_mod_q,
    sl2_order_formula,
    sphere_volume,
    sphere_volume_oracle,
    sphere_volume_product,
)


def test_sphere_examples():
    assert sphere_volume(2, 0) == 1
    assert sphere_volume(2, 1) == 6
    assert sphere_volume(3, 1) == 12
    assert sphere_volume_oracle(2, 1) == 6
    assert sphere_volume_oracle(2, 2) == 24
    assert sphere_volume_oracle(5, 1) == 30


@pytest.mark.parametrize("p", [2, 3, 5, 7])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_sphere_matches_oracle(p, k):
    assert sphere_volume(p, k) == sphere_volume_oracle(p, k)


def test_oracle_range_guard():
    with pytest.raises(RangeError):
        sphere_volume_oracle(11, 3)


def test_ball_examples():
    S = PlaceSet.of(2)
    assert ball_volume_padic(S, 2) == 7
    assert ball_volume_padic(S, 4) == 31
    assert ball_volume_padic(S, 1) == 1
    assert ball_volume_padic(S, 5) == 31  # rounds down to 4
    assert ball_volume_padic(S, 2**7) == 2**15 - 1


def test_table_cumulative():
    rows = SphereVolumeTable.build(PlaceSet.of(2), 16).cumulative()
    assert rows == [(1, 1, 1), (2, 6, 7), (4, 24, 31), (8, 96, 127), (16, 384, 511)]


@pytest.mark.parametrize("primes,T", [((2,), 1024), ((2, 3), 2000), ((3, 5), 500)])
def test_increments_and_product(primes, T):
    S = PlaceSet(primes)
    hs = realizable_heights(S, T)
    vs = [ball_volume_padic(S, h) for h in hs]
    assert all(b > a for a, b in zip(vs, vs[1:]))
    for prev, h, v in zip([0] + vs, hs, vs):
        assert v - prev == sphere_volume_product(S, h)
    assert sphere_volume_product(S, hs[0]) == 1


def test_growth_exponent():
    assert growth_exponent_a(PlaceSet.of(2), 2**10) == pytest.approx(2.0, abs=0.01)
    assert growth_exponent_a(PlaceSet.of(3), 3**6) == pytest.approx(2.0, abs=0.01)
    with pytest.raises(InsufficientDataError):
        growth_exponent_a(PlaceSet.of(2), 2)


def test_growth_lower_bound():
    S = PlaceSet.of(2)
    for h in realizable_heights(S, 2**12)[1:]:
        assert sphere_volume_product(S, h) >= h.value**2


def test_congruence_examples():
    assert congruence_measure(CongruenceCondition.full(3)) == 1
    assert congruence_measure(CongruenceCondition.identity(3)) == Fraction(1, 24)
    assert congruence_measure(CongruenceCondition.upper_triangular(2)) == Fraction(1, 3)


def test_congruence_shares_factor():
    with pytest.raises(ConfigurationError):
        congruence_measure(CongruenceCondition.identity(2), PlaceSet.of(2))
    with pytest.raises(ConfigurationError):
        CongruenceCondition.identity(6).validate_for(PlaceSet.of(3, 5))


def test_bad_residues():
    with pytest.raises(ConfigurationError):
        CongruenceCondition(3, frozenset({(1, 1, 1, 1)}))
    with pytest.raises(ConfigurationError):
        CongruenceCondition(3, frozenset())


@pytest.mark.parametrize("q", range(1, 51))
def test_order_enumeration_matches_formula(q):
    if q <= 30 or q % 7 == 0:
        assert len(sl2_mod_q(q)) == sl2_order_formula(q)


@given(st.sampled_from([3, 5, 7, 9]), st.integers(1, 6))
def test_measure_additive(q, n):
    W = CongruenceCondition.full(q)
    pieces = list(disjoint_pieces(W, n))
    assert sum(congruence_measure(w) for w in pieces) == 1
    assert W.is_full and W.measure == 1


def test_measure_is_one_only_for_full():
    W = CongruenceCondition.upper_triangular(5)
    assert 0 < W.measure < 1 and not W.is_full
