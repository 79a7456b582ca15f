import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from farmtfp.exceptions import SingularMatrixError
from farmtfp.gmm import (GmmSystem, build_system, estimate_one_step, estimate_two_step, fit_system_gmm,
                         one_step, pinv_psd, two_step, windmeijer, windmeijer_correct)
from farmtfp.instruments import (PREDETERMINED, InstrumentSpec, InstrumentVariable, ModelSpec,
                                 build_instruments)
from farmtfp.panel import PanelDataset, with_lags


def ar1_panel(N, T, rho=0.5, seed=0, het=False, fe_sd=0.5, het_sd=0.5):
    """Mean-stationary AR(1) panel with fixed effects."""
    rng = np.random.default_rng(seed)
    eta = fe_sd * rng.standard_normal(N)
    scale = np.exp(het_sd * rng.standard_normal(N)) if het else np.ones(N)
    burn = 50
    y = np.empty((N, T + burn))
    y[:, 0] = eta / (1 - rho) + scale * rng.standard_normal(N) / np.sqrt(1 - rho ** 2)
    for t in range(1, T + burn):
        y[:, t] = eta + rho * y[:, t - 1] + scale * rng.standard_normal(N)
    y = y[:, burn:]
    frame = pd.DataFrame({"unit_id": np.repeat(np.arange(N), T), "year": np.tile(np.arange(2000, 2000 + T), N),
                          "y": y.ravel()})
    return with_lags(PanelDataset(frame), ["y"], 1)


AR_MODEL = ModelSpec("y", ("y_lag_1",), time_dummies=False)


def ar_spec(collapsed=True, lag_max=None):
    return InstrumentSpec((InstrumentVariable("y", PREDETERMINED, lag_max=lag_max),),
                          include_time_dummies=False, collapsed=collapsed)


def fit_ar(ds, collapsed=True, lag_max=None):
    return fit_system_gmm(ds, AR_MODEL, build_instruments(ds, ar_spec(collapsed, lag_max), AR_MODEL))


def random_system(rng, N=300, R=4, K=3, L=6):
    Z = rng.standard_normal((N, R, L))
    X = Z[:, :, :K] @ rng.standard_normal((K, K)) + 0.3 * Z[:, :, K:] @ rng.standard_normal((L - K, K)) \
        + 0.5 * rng.standard_normal((N, R, K))
    y = X @ rng.standard_normal(K) + rng.standard_normal((N, R))
    return GmmSystem.from_arrays(X, y, Z)


def test_exactly_identified_is_iv():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((500, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + rng.standard_normal(500)
    sys_ = GmmSystem.from_arrays(X, y, X)
    fit = one_step(sys_)
    np.testing.assert_allclose(fit.params, np.linalg.solve(X.T @ X, X.T @ y), atol=1e-10)
    assert np.abs(sys_.unit_moments(fit.residuals).sum(axis=0)).max() < 1e-8


def test_zero_dependent():
    rng = np.random.default_rng(2)
    sys_ = random_system(rng)
    sys0 = GmmSystem.from_arrays(sys_.X, np.zeros_like(sys_.y), sys_.Z)
    fit = one_step(sys0)
    assert np.abs(fit.params).max() < 1e-12
    assert np.abs(fit.residuals).max() < 1e-12


def test_zero_residual_weighting_is_singular():
    rng = np.random.default_rng(3)
    sys_ = random_system(rng)
    exact = GmmSystem.from_arrays(sys_.X, sys_.X @ np.array([1.0, 2.0, 3.0]), sys_.Z)
    with pytest.raises(SingularMatrixError):
        two_step(exact, one_step(exact))


def test_rank_deficiency_names_columns():
    rng = np.random.default_rng(4)
    Z = rng.standard_normal((200, 5))
    X = np.column_stack([Z[:, 0], Z[:, 1], Z[:, 0] + Z[:, 1]])
    with pytest.raises(SingularMatrixError) as err:
        one_step(GmmSystem.from_arrays(X, rng.standard_normal(200), Z, x_labels=["a", "b", "c"]))
    assert set(err.value.labels) == {"a", "b", "c"}


def test_exactly_identified_two_step_matches():
    rng = np.random.default_rng(5)
    sys_ = random_system(rng, L=3)
    f1 = one_step(sys_)
    f2 = windmeijer(sys_, two_step(sys_, f1))
    np.testing.assert_allclose(f2.params, f1.params, atol=1e-10)
    np.testing.assert_allclose(f2.vcov_corrected, f2.vcov_two_step, atol=1e-10)


def test_covariances_symmetric():
    rng = np.random.default_rng(6)
    sys_ = random_system(rng)
    f2 = windmeijer(sys_, two_step(sys_, one_step(sys_)))
    for V in (f2.vcov_one_step, f2.vcov_two_step, f2.vcov_corrected):
        assert np.abs(V - V.T).max() < 1e-10
        assert V.shape == (3, 3)
    assert f2.instrument_count >= len(f2.params)


def test_windmeijer_matches_finite_difference():
    """Corrected covariance rebuilt from a numerically differentiated two-step map."""
    rng = np.random.default_rng(7)
    N, R, K, L = 400, 3, 2, 5
    Z = rng.standard_normal((N, R, L))
    X = Z[:, :, :K] + 0.5 * rng.standard_normal((N, R, K))
    scale = np.exp(rng.standard_normal(N))[:, None]
    y = X @ np.array([0.7, -0.3]) + scale * rng.standard_normal((N, R))
    sys_ = GmmSystem.from_arrays(X, y, Z)
    f1 = one_step(sys_)
    f2 = windmeijer(sys_, two_step(sys_, f1))

    Z2, X2, y2 = Z.reshape(N * R, L), X.reshape(N * R, K), y.reshape(N * R)
    ZX, Zy = Z2.T @ X2, Z2.T @ y2

    def beta2(b):
        e = y - X @ b
        g = np.einsum("nrl,nr->nl", Z, e)
        W = np.linalg.inv(g.T @ g)
        return np.linalg.solve(ZX.T @ W @ ZX, ZX.T @ W @ Zy)

    h = 1e-6
    D = np.column_stack([(beta2(f1.params + h * e) - beta2(f1.params - h * e)) / (2 * h) for e in np.eye(K)])
    V2, V1 = f2.vcov_two_step, f1.vcov_one_step
    Vc = V2 + D @ V2 + V2 @ D.T + D @ V1 @ D.T
    np.testing.assert_allclose(f2.vcov_corrected, Vc, rtol=1e-5)


def test_panel_system_shapes():
    ds = ar1_panel(50, 6)
    Z = build_instruments(ds, ar_spec(), AR_MODEL)
    sys_ = build_system(ds, AR_MODEL, Z)
    assert sys_.X.shape[:2] == Z.values.shape[:2]
    fit = estimate_one_step(ds, AR_MODEL, Z)
    f2 = windmeijer_correct(estimate_two_step(fit, ds, AR_MODEL, Z), ds, AR_MODEL, Z)
    assert f2.labels == ["y_lag_1", "_cons"]
    d, lv = f2.equation_counts
    assert d == 50 * 4 and lv == 50 * 5
    assert f2.nobs == lv


def test_pinv_rank():
    S = np.diag([4.0, 1.0, 0.0])
    inv, rank = pinv_psd(S)
    assert rank == 2
    np.testing.assert_allclose(inv, np.diag([0.25, 1.0, 0.0]))


# -- properties -----------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_scale_equivariance(seed):
    sys_ = random_system(np.random.default_rng(seed))
    c = 10.0
    scaled = GmmSystem.from_arrays(sys_.X, c * sys_.y, sys_.Z)
    a = windmeijer(sys_, two_step(sys_, one_step(sys_)))
    b = windmeijer(scaled, two_step(scaled, one_step(scaled)))
    np.testing.assert_allclose(b.params, c * a.params, rtol=1e-8, atol=1e-12)
    for va, vb in ((a.vcov_one_step, b.vcov_one_step), (a.vcov_two_step, b.vcov_two_step),
                   (a.vcov_corrected, b.vcov_corrected)):
        np.testing.assert_allclose(vb, c ** 2 * va, rtol=1e-8, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_instrument_order_invariance(seed, order):
    sys_ = random_system(np.random.default_rng(seed))
    perm = sys_.permuted_instruments(order)
    for s in (one_step, lambda q: two_step(q, one_step(q))):
        np.testing.assert_allclose(s(perm).params, s(sys_).params, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gradient_zero(seed):
    sys_ = random_system(np.random.default_rng(seed))
    for fit in (one_step(sys_), two_step(sys_, one_step(sys_))):
        W = fit.weight_matrix
        grad = 2 * sys_.ZX.T @ W @ (sys_.Zy - sys_.ZX @ fit.params)
        scale = np.abs(sys_.ZX.T @ W @ sys_.Zy).max()
        assert np.abs(grad).max() < 1e-8 * scale


# -- synthetic oracles ----------------------------------------------------


@pytest.mark.slow
def test_ar1_recovery():
    est = [fit_ar(ar1_panel(2000, 8, seed=s)).coef("y_lag_1") for s in range(200)]
    assert abs(np.mean(est) - 0.5) < 0.05


@pytest.mark.slow
def test_two_step_close_to_one_step():
    b1, b2 = [], []
    for s in range(100):
        fit = fit_ar(ar1_panel(500, 6, seed=1000 + s))
        b1.append(fit.first_step.coef("y_lag_1"))
        b2.append(fit.coef("y_lag_1"))
    assert abs(np.mean(b2) - np.mean(b1)) < np.std(b1, ddof=1)


@pytest.mark.slow
def test_correction_vanishes_in_large_samples():
    fit = fit_ar(ar1_panel(5000, 6, seed=77))
    rel = np.abs(np.diag(fit.vcov_corrected) / np.diag(fit.vcov_two_step) - 1)
    assert rel.max() < 0.05


@pytest.mark.slow
def test_corrected_coverage_small_sample():
    hit_c, hit_u = [], []
    for s in range(500):
        fit = fit_ar(ar1_panel(50, 10, seed=5000 + s, het=True), lag_max=np.inf)
        b = fit.coef("y_lag_1")
        j = fit.labels.index("y_lag_1")
        hit_c.append(abs(b - 0.5) <= 1.96 * np.sqrt(fit.vcov_corrected[j, j]))
        hit_u.append(abs(b - 0.5) <= 1.96 * np.sqrt(fit.vcov_two_step[j, j]))
    assert 0.90 <= np.mean(hit_c) <= 0.98
    assert np.mean(hit_u) < 0.90
