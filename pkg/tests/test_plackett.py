import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from famcl.model import InvalidArgumentError, marginal_prob
from famcl.plackett import (
    InternalConsistencyError,
    PairMargins,
    check_compatibility,
    correlation_bounds,
    frechet_bounds,
    joint_prob,
    joint_prob_array,
    pair_correlation,
    pair_joint,
)

GENOTYPE_PAIRS = [(0, 0), (0, 1), (1, 1), (0, 2), (1, 2), (2, 2)]
TABLE2 = {
    1.2: [0.015, 0.025, 0.042, 0.021, 0.037, 0.034],
    3.0: [0.120, 0.155, 0.253, 0.099, 0.197, 0.222],
}


def _p11_bisection(p_i, p_j, psi):
    """Root of psi*p10*p01 = p11*p00 written in p11, found by bracketing."""
    lo, hi = frechet_bounds(p_i, p_j)
    f = lambda q: q * (1 - p_i - p_j + q) - psi * (p_i - q) * (p_j - q)
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)


@pytest.mark.parametrize("psi", [1.2, 3.0])
def test_correlation_table(psi):
    got = [pair_correlation(PairMargins(marginal_prob(-2.38, 1.76, a),
                                        marginal_prob(-2.38, 1.76, b), psi))
           for a, b in GENOTYPE_PAIRS]
    assert np.max(np.abs(np.array(got) - TABLE2[psi])) <= 0.0005


def test_independence_branch():
    assert joint_prob(PairMargins(0.3, 0.6, 1.0)) == pytest.approx(0.18, abs=1e-15)
    assert pair_correlation(PairMargins(0.3, 0.6, 1.0)) == 0.0


def test_matches_bisection_oracle():
    assert joint_prob(PairMargins(0.4, 0.7, 2.5)) == pytest.approx(
        _p11_bisection(0.4, 0.7, 2.5), abs=1e-13)


@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.0, 50.0))
def test_bisection_oracle_random(p_i, p_j, psi):
    assert joint_prob(PairMargins(p_i, p_j, psi)) == pytest.approx(
        _p11_bisection(p_i, p_j, psi), abs=1e-12)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.floats(0.01, 100.0))
def test_cross_product_roundtrip(p_i, p_j, psi):
    j = pair_joint(PairMargins(p_i, p_j, psi))
    assert sum(j.cells) == pytest.approx(1.0, abs=1e-12)
    lo, hi = frechet_bounds(p_i, p_j)
    assert lo <= j.p11 <= hi
    if min(j.cells) >= 1e-8:
        assert j.odds_ratio() == pytest.approx(psi, rel=1e-8)


@given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.floats(0.0, 100.0))
def test_correlation_within_attainable_bounds(p_i, p_j, psi):
    lo, hi = correlation_bounds(p_i, p_j)
    d = pair_correlation(PairMargins(p_i, p_j, psi))
    assert lo - 1e-12 <= d <= hi + 1e-12


def test_correlation_increasing_in_psi():
    for p_i, p_j in [(0.1, 0.2), (0.5, 0.5), (0.85, 0.3)]:
        vals = [pair_correlation(PairMargins(p_i, p_j, s)) for s in np.geomspace(0.05, 40, 60)]
        assert np.all(np.diff(vals) > 0)


def test_continuity_at_one():
    for eps in (1e-7, -1e-7):
        assert abs(joint_prob(PairMargins(0.3, 0.45, 1 + eps)) - 0.3 * 0.45) <= 1e-6


def test_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    pi, pj = rng.uniform(0.01, 0.99, 200), rng.uniform(0.01, 0.99, 200)
    psi = np.exp(rng.normal(0, 2, 200))
    psi[:10] = 1.0
    arr = joint_prob_array(pi, pj, psi)
    ref = [joint_prob(PairMargins(a, b, c)) for a, b, c in zip(pi, pj, psi)]
    np.testing.assert_allclose(arr, ref, atol=1e-14)


def test_input_validation():
    with pytest.raises(InvalidArgumentError):
        PairMargins(0.5, 0.5, -0.1)
    with pytest.raises(InvalidArgumentError):
        PairMargins(0.0, 0.5, 1.0)
    with pytest.raises(InvalidArgumentError):
        PairMargins(0.5, 1.0, 1.0)


def test_extreme_psi_touches_frechet_bounds():
    assert joint_prob(PairMargins(0.3, 0.6, 0.0)) == pytest.approx(0.0, abs=1e-12)
    assert joint_prob(PairMargins(0.3, 0.6, 1e12)) == pytest.approx(0.3, abs=1e-6)


def test_internal_consistency_error_is_arithmetic():
    assert issubclass(InternalConsistencyError, ArithmeticError)


def test_compatibility_ok_for_fair_coins():
    joints = {(0, 1): 0.25, (0, 2): 0.25, (1, 2): 0.25}
    assert check_compatibility([0.5] * 3, joints).ok


def test_compatibility_condition_two():
    rep = check_compatibility([0.5, 0.5], {(0, 1): 0.6})
    assert not rep.ok and rep.violations[0][:2] == (2, (0, 1))


def test_compatibility_condition_three_arithmetic():
    joints = {(0, 1): 0.81, (0, 2): 0.81, (1, 2): 0.81}
    value = 2.7 - 2.43
    assert value == pytest.approx(0.27)
    assert check_compatibility([0.9] * 3, joints).ok


def test_compatibility_condition_three_violated():
    joints = {(0, 1): 0.0, (0, 2): 0.0, (1, 2): 0.0}
    rep = check_compatibility([0.4, 0.4, 0.4], joints)
    assert [v[0] for v in rep.violations] == [3]
    assert rep.violations[0][2] == pytest.approx(1.2)


def test_compatibility_condition_one_and_missing_pair():
    assert not check_compatibility([1.2, 0.5], {(0, 1): 0.5}).ok
    assert check_compatibility([0.5, 0.5], {(1, 0): 0.25}).ok
    with pytest.raises(InvalidArgumentError):
        check_compatibility([0.5, 0.5, 0.5], {(0, 1): 0.25})
