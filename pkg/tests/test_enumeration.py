import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schmidtlab.arch import FrobeniusBox, MetricBall, MetricChoice, NormBall, PointSet, iwasawa_matrix
from schmidtlab.arith import RationalMatrix
from schmidtlab.enumeration import (
    ShellCache,
    ShellQuery,
    brute_force_recount,
    cumulative_counts,
    enumerate_shell,
    enumerate_up_to,
)
from schmidtlab.errors import ConfigurationError, OracleUnavailableError, RangeError
from schmidtlab.heights import PlaceSet, height
from schmidtlab.padic_volume import CongruenceCondition

S2 = PlaceSet.of(2)
S23 = PlaceSet.of(2, 3)
ID3 = CongruenceCondition.identity(3)


def test_height_one_small_ball():
    # the only integer matrix within Frobenius distance 0.5 of e is e itself
    res = enumerate_shell(ShellQuery(S2, 1, MetricBall.at_identity(0.5)))
    assert res.count == 1 and res.points == [RationalMatrix.identity()]


def test_height_two_contains_witness():
    res = enumerate_shell(ShellQuery(S2, 2, NormBall(3.0)))
    assert RationalMatrix.diag(2, Fraction(1, 2)) in res.points


@pytest.mark.parametrize("h", [1, 2, 4])
@pytest.mark.parametrize("W", [None, ID3])
def test_matches_brute_force_norm_ball(h, W):
    q = ShellQuery(S2, h, NormBall(3.0), W)
    assert enumerate_shell(q).count == brute_force_recount(q)


@pytest.mark.parametrize("h", [1, 2, 3, 4, 6])
def test_matches_brute_force_two_primes(h):
    q = ShellQuery(S23, h, NormBall(2.5), CongruenceCondition.upper_triangular(5))
    assert enumerate_shell(q).count == brute_force_recount(q)


regions = st.one_of(
    st.builds(lambda r, u, y, t: MetricBall(iwasawa_matrix(u, y, t), r, MetricChoice.LOG_INVARIANT),
              st.floats(0.2, 1.2), st.floats(-0.5, 0.5), st.floats(0.7, 1.5), st.floats(-3, 3)),
    st.builds(lambda r, u, y, t: MetricBall(iwasawa_matrix(u, y, t), r),
              st.floats(0.2, 1.2), st.floats(-0.5, 0.5), st.floats(0.7, 1.5), st.floats(-3, 3)),
    st.builds(lambda w: FrobeniusBox((1, 0, 0, 1), (w, w, w, w)), st.floats(0.3, 1.5)),
)


@settings(max_examples=25)
@given(regions, st.sampled_from([1, 2, 4, 8]), st.sampled_from([None, ID3, CongruenceCondition.upper_triangular(3)]))
def test_matches_brute_force_random(region, h, W):
    q = ShellQuery(S2, h, region, W)
    try:
        expected = brute_force_recount(q)
    except OracleUnavailableError:
        return
    assert enumerate_shell(q).count == expected


@settings(max_examples=15)
@given(regions, st.sampled_from([2, 4, 8]))
def test_points_are_exact_members(region, h):
    res = enumerate_shell(ShellQuery(S2, h, region))
    for m in res.points:
        assert m.is_special()
        assert height(m, S2) == h
    assert np.all(region.contains(res.as_floats()))


def test_canonical_order_and_thread_independence():
    q = ShellQuery(S2, 16, MetricBall.at_identity(1.0))
    a = enumerate_shell(q, threads=1)
    b = enumerate_shell(q, threads=4)
    np.testing.assert_array_equal(a.numerators, b.numerators)
    rows = [tuple(r) for r in a.numerators.tolist()]
    assert rows == sorted(rows)


def test_congruence_filter_is_subset():
    E = MetricBall.at_identity(1.0)
    full = enumerate_shell(ShellQuery(S2, 8, E))
    sub = enumerate_shell(ShellQuery(S2, 8, E, ID3))
    assert set(sub.points) <= set(full.points)
    assert all(ID3.contains(m) for m in sub.points)


def test_modulus_sharing_factor_rejected():
    with pytest.raises(ConfigurationError):
        ShellQuery(S2, 2, NormBall(2.0), CongruenceCondition.identity(2))


def test_point_set_region():
    pts = PointSet([np.eye(2), np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])])
    assert enumerate_shell(ShellQuery(S2, 2, pts)).count == 1
    assert enumerate_shell(ShellQuery(S2, 1, pts)).count == 1


def test_range_guard():
    with pytest.raises(RangeError):
        enumerate_shell(ShellQuery(S2, 2**30, NormBall(4.0)))


def test_oracle_guard():
    with pytest.raises(OracleUnavailableError):
        brute_force_recount(ShellQuery(S2, 64, NormBall(3.0)))


def test_up_to_and_cumulative():
    shells = enumerate_up_to(S2, 16, MetricBall.at_identity(1.0))
    assert sorted(shells) == [1, 2, 4, 8, 16]
    cum = cumulative_counts(shells)
    assert [c for _, c in cum] == sorted(c for _, c in cum)
    assert cum[-1][1] == sum(r.count for r in shells.values())


def test_cache_roundtrip(tmp_path):
    cache = ShellCache(tmp_path, threshold=1)
    q = ShellQuery(S2, 8, MetricBall.at_identity(1.0), ID3)
    first = enumerate_shell(q, cache=cache)
    assert cache.path(q).exists()
    header = cache.path(q).read_text().splitlines()[0]
    assert '"fingerprint"' in header
    again = enumerate_shell(q, cache=cache)
    np.testing.assert_array_equal(first.numerators, again.numerators)
    assert len(cache.fingerprints()) == 1
    other = ShellQuery(S2, 8, MetricBall.at_identity(0.9), ID3)
    assert cache.load(other) is None
