import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from farmtfp.diagnostics import (TestResult, ar_test, battery, chi2_sf, norm_two_sided, sargan, sargan_one_step,
                                 wald, wald_from)
from farmtfp.exceptions import DiagnosticsError
from farmtfp.gmm import GmmSystem, one_step, two_step, windmeijer
from farmtfp.synthetic import PIPELINES, DgpConfig, generate

from test_gmm import ar1_panel, fit_ar, random_system


def fitted(sys_):
    return windmeijer(sys_, two_step(sys_, one_step(sys_)))


def test_chi2_published_quantiles():
    # 5% critical values: 3.841 (1), 5.991 (2), 11.070 (5), 18.307 (10)
    for x, k in ((3.841459, 1), (5.991465, 2), (11.070498, 5), (18.307038, 10)):
        assert chi2_sf(x, k) == pytest.approx(0.05, abs=1e-6)


def test_wald_arithmetic():
    r = wald_from([2.0], [[1.0]])
    assert r.statistic == pytest.approx(4.0)
    assert r.p_value == pytest.approx(0.0455, abs=1e-4)
    assert r.dof == 1


def test_wald_empty_selector():
    with pytest.raises(DiagnosticsError):
        wald_from([], np.zeros((0, 0)))
    fit = fitted(random_system(np.random.default_rng(0)))
    with pytest.raises(DiagnosticsError):
        wald(fit, [])


def test_wald_singular_names_subset():
    with pytest.raises(DiagnosticsError, match="a"):
        wald_from([1.0, 1.0], [[1.0, 1.0], [1.0, 1.0]], names=["a", "b"])


def test_normal_two_sided():
    assert norm_two_sided(-3.0) == pytest.approx(0.0027, abs=1e-4)
    assert norm_two_sided(1.959963984540054) == pytest.approx(0.05, abs=1e-12)


def test_pvalue_bounds():
    with pytest.raises(DiagnosticsError):
        TestResult("x", 1.0, 1, 1.5)


def test_sargan_not_applicable_when_exact():
    fit = fitted(random_system(np.random.default_rng(1), L=3))
    r = sargan(fit)
    assert (r.statistic, r.dof, r.applicable) == (0.0, 0, False)
    assert not r.rejects()
    assert not sargan_one_step(fit).applicable


def test_sargan_dof():
    fit = fitted(random_system(np.random.default_rng(2)))
    assert sargan(fit).dof == 3
    assert sargan_one_step(fit).dof == 3


def test_battery_keys_and_ranges():
    fit = fit_ar(ar1_panel(300, 7, seed=3))
    out = battery(fit)
    assert set(out) == {"sargan", "sargan_one_step", "ar1", "ar2", "wald_coefficients", "wald_time"}
    assert not out["wald_time"].applicable  # model without time dummies
    for r in out.values():
        assert math.isnan(r.p_value) or 0 <= r.p_value <= 1
    assert out["ar1"].statistic < -2  # iid level errors


def test_ar_insufficient_periods():
    fit = fit_ar(ar1_panel(100, 4, seed=4))
    assert not ar_test(fit, 3).applicable
    with pytest.raises(DiagnosticsError):
        ar_test(fit, 0)


# -- properties -----------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 200.0), st.integers(1, 60))
def test_chi2_matches_scipy(x, k):
    assert chi2_sf(x, k) == pytest.approx(stats.chi2.sf(x, k), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_sargan_permutation_invariant(seed, order):
    sys_ = random_system(np.random.default_rng(seed))
    a = sargan(fitted(sys_)).statistic
    b = sargan(fitted(sys_.permuted_instruments(order))).statistic
    assert b == pytest.approx(a, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_wald_scale_invariant(seed, c):
    sys_ = random_system(np.random.default_rng(seed))
    X = sys_.X.copy()
    X[:, :, 0] /= c
    scaled = GmmSystem.from_arrays(X, sys_.y, sys_.Z)
    a, b = fitted(sys_), fitted(scaled)
    assert b.params[0] == pytest.approx(c * a.params[0], rel=1e-8)
    assert wald(b, ["x0"]).statistic == pytest.approx(wald(a, ["x0"]).statistic, rel=1e-8)


# -- Monte Carlo calibration ----------------------------------------------


def _ks(p):
    p = np.sort(np.asarray(p))
    n = len(p)
    grid = np.arange(1, n + 1) / n
    return max(np.abs(grid - p).max(), np.abs(p - (grid - 1 / n)).max())


@pytest.mark.slow
def test_null_pvalues_roughly_uniform():
    cfg = DgpConfig(N=500, T=8, seed=70_000)
    ps = {"sargan": [], "ar2": []}
    for r in range(300):
        est = PIPELINES["sysgmm"](generate(replace(cfg, seed=cfg.seed + r)), {})
        for k in ps:
            ps[k].append(est.pvalues[k])
    for k, p in ps.items():
        assert _ks(p) < 0.12, k


@pytest.mark.slow
def test_wald_size_under_zero_coefficients():
    rej = []
    for s in range(500):
        rng = np.random.default_rng(90_000 + s)
        N, R, K, L = 200, 3, 2, 5
        Z = rng.standard_normal((N, R, L))
        X = Z[:, :, :K] + 0.5 * rng.standard_normal((N, R, K))
        y = rng.standard_normal((N, R))
        fit = fitted(GmmSystem.from_arrays(X, y, Z))
        rej.append(wald(fit, ["x0", "x1"]).p_value < 0.05)
    assert 0.02 <= np.mean(rej) <= 0.10


@pytest.mark.slow
def test_sargan_detects_invalid_instruments():
    rej = []
    for s in range(100):
        rng = np.random.default_rng(91_000 + s)
        N, R = 1000, 3
        Z = rng.standard_normal((N, R, 4))
        e = rng.standard_normal((N, R))
        Z[:, :, 3] += 0.5 * e  # last instrument correlated with the error
        X = Z[:, :, :1] + 0.3 * Z[:, :, 1:2] + 0.5 * rng.standard_normal((N, R, 1))
        fit = fitted(GmmSystem.from_arrays(X, X[:, :, 0] + e, Z))
        rej.append(sargan(fit).rejects())
    assert np.mean(rej) >= 0.8
