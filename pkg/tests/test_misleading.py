import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from famcl.likelihood import CLKind, pack_arrays
from famcl.misleading import (
    _global_fit,
    _loglik,
    _profile_beta0,
    _singleton_ab,
    bump,
    bump_argmax,
    bump_curve,
    bump_max,
    estimate_misleading,
    estimate_misleading_singletons,
    fwer_bound,
    replicate_log_lr,
)
from famcl.model import InvalidArgumentError, ModelParams
from famcl.studies import singleton_design
from famcl.simulate import simulate_dataset


def test_bump_matches_normal_cdf():
    for c, k in [(0.5, 8), (2.0, 32), (3.7, 1000)]:
        assert bump(c, k) == pytest.approx(norm.cdf(-c / 2 - math.log(k) / c), abs=1e-15)
    assert bump(0.0, 8) == 0.0 and bump(-1.0, 8) == 0.0


def test_bump_max_at_eight():
    assert bump_max(8) == pytest.approx(0.021, abs=5e-4)
    assert bump_max(8) == pytest.approx(norm.cdf(-math.sqrt(2 * math.log(8))), abs=1e-15)


@pytest.mark.parametrize("k", [2, 8, 32, 1000])
def test_bump_argmax_on_grid(k):
    c = np.linspace(0.01, 10, 200_001)
    curve = bump_curve(c, k)
    i = int(np.argmax(curve.prob))
    assert c[i] == pytest.approx(bump_argmax(k), abs=1e-4)
    assert curve.prob[i] == pytest.approx(bump_max(k), abs=1e-9)


def test_bump_max_decreasing_in_k():
    vals = [bump_max(k) for k in np.geomspace(1.01, 1e6, 50)]
    assert np.all(np.diff(vals) < 0)


def test_k_near_one_limit():
    assert bump_max(1 + 1e-12) == pytest.approx(0.5, abs=1e-5)


@pytest.mark.parametrize("k", [1.0, 0.5, -3, math.inf, math.nan])
def test_invalid_k(k):
    with pytest.raises(InvalidArgumentError):
        bump_max(k)
    with pytest.raises(InvalidArgumentError):
        bump(1.0, k)


def test_fwer_arithmetic():
    assert fwer_bound(1413, 1e-4) == pytest.approx(0.1413, abs=1e-12)
    assert fwer_bound(1413, 1e-3) == 1.0
    for bad in [(0, 0.1), (2.5, 0.1), (True, 0.1), (10, -0.1), (10, 1.5)]:
        with pytest.raises(InvalidArgumentError):
            fwer_bound(*bad)


@given(st.integers(1, 10**6), st.floats(0, 1), st.floats(0, 1))
def test_fwer_properties(n, m0, m1):
    b = fwer_bound(n, m0)
    assert 0.0 <= b <= 1.0
    assert fwer_bound(n, min(m0, m1)) <= fwer_bound(n, max(m0, m1))
    assert fwer_bound(n, m0) <= fwer_bound(n + 1, m0)
    assert b == min(1.0, n * m0)


def test_vectorised_singleton_path_matches_generic_fit():
    cfg = singleton_design().config(150, seed=3)
    alts = np.array([-0.5, 0.4, 0.9])
    for r in range(5):
        batch = simulate_dataset(cfg, r)
        pk = pack_arrays(batch.phenotypes, batch.genotypes, batch.pair_classes)
        llr, ab = replicate_log_lr(pk, CLKind.INDEPENDENCE, 0.0, alts)
        g = batch.genotypes[:, 0]
        y = batch.phenotypes[:, 0]
        n_g = np.bincount(g, minlength=3)[None, :].astype(float)
        s_g = np.bincount(g, weights=y, minlength=3)[None, :]
        b0, b1 = _global_fit(n_g, s_g)
        assert _singleton_ab(n_g, s_g, b0, b1)[0] == pytest.approx(ab, rel=1e-6)
        zero = np.zeros(1)
        l0 = _loglik(n_g, s_g, _profile_beta0(n_g, s_g, zero), zero)
        for a, expected in zip(alts, llr):
            av = np.full(1, a)
            got = _loglik(n_g, s_g, _profile_beta0(n_g, s_g, av), av) - l0
            assert got[0] == pytest.approx(expected, abs=1e-8)


def test_fast_and_generic_estimates_agree():
    design = singleton_design()
    alts = [math.log(2.0)]
    slow = estimate_misleading(design.config(60, seed=1), design.params, alts, 4,
                               replicates=400)
    fast = estimate_misleading_singletons(60, design.maf, design.params.beta0, 0.0, alts, 4,
                                          replicates=40_000, seed=2)
    se = math.sqrt(slow.mc_se[0] ** 2 + fast.mc_se[0] ** 2)
    assert abs(slow.proportion_adjusted[0] - fast.proportion_adjusted[0]) <= 4 * se + 1e-3
    assert slow.failures == 0 and slow.warning is None


def test_estimate_is_deterministic_and_thread_independent():
    design = singleton_design()
    cfg = design.config(40, seed=5)
    a = estimate_misleading(cfg, design.params, [0.7, 1.2], 8, replicates=100)
    b = estimate_misleading(cfg, design.params, [0.7, 1.2], 8, replicates=100, workers=3)
    np.testing.assert_array_equal(a.proportion_raw, b.proportion_raw)
    np.testing.assert_array_equal(a.proportion_adjusted, b.proportion_adjusted)


def test_alternative_equal_to_truth_rejected():
    design = singleton_design()
    with pytest.raises(InvalidArgumentError):
        estimate_misleading(design.config(40), design.params, [0.0, 1.0], 8, replicates=100)
    with pytest.raises(InvalidArgumentError):
        estimate_misleading_singletons(40, 0.3, -1, 0.0, [0.0], 8, 10)
    with pytest.raises(InvalidArgumentError):
        estimate_misleading(design.config(40), design.params, [1.0], 8, replicates=10)


def test_failure_warning():
    design = singleton_design(beta0=-3.0)
    with pytest.warns(UserWarning, match="failed"):
        est = estimate_misleading(design.config(4), ModelParams(-3.0, 0.0), [1.0], 8,
                                  replicates=100)
    assert est.failures > 1 and est.replicates == 100 - est.failures
    assert est.warning is not None
