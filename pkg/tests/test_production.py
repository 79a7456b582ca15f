import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from farmtfp.exceptions import MinimumDistanceError, VariableError
from farmtfp.panel import PanelDataset
from farmtfp.production import (FACTORS, MinimumDistanceWarning, PiVector, build_production_spec, compute_tfp,
                                dynamic_regressors, estimate_pi, md_objective, minimum_distance,
                                tfp_variation_table)
from farmtfp.report import coef_cell
from farmtfp.synthetic import DgpConfig, generate

BETA = (0.3, 0.1, 0.2, 0.6, 0.05)


def restricted_pi(beta=BETA, rho=0.2):
    p = [rho]
    for b in beta:
        p += [b, -rho * b]
    return np.array(p)


def random_cov(rng, k=11):
    A = rng.standard_normal((k, k)) * 0.05
    return A @ A.T + 1e-3 * np.eye(k)


def test_regressor_order():
    regs = dynamic_regressors()
    assert len(regs) == 11
    assert regs == ("y_lag_1", "k", "k_lag_1", "l", "l_lag_1", "n", "n_lag_1", "m", "m_lag_1",
                    "g", "g_lag_1")


def test_missing_factor():
    frame = pd.DataFrame({"unit_id": [1, 1], "year": [2001, 2002], "y": [0.0, 1.0], "k": [0.0, 1.0]})
    with pytest.raises(VariableError, match="g"):
        build_production_spec(PanelDataset(frame))


def test_exact_restriction_recovered():
    pi = PiVector.from_arrays(restricted_pi(), random_cov(np.random.default_rng(0)))
    md = minimum_distance(pi)
    np.testing.assert_allclose(list(md.beta.values()), BETA, atol=1e-12)
    assert md.rho == pytest.approx(0.2, abs=1e-12)
    assert md.distance < 1e-20
    assert md.dof == 5


def test_persistence_near_zero():
    p = restricted_pi()
    p[0] = 1e-12
    with pytest.raises(MinimumDistanceError, match="persistence coefficient too close to zero"):
        minimum_distance(PiVector.from_arrays(p, np.eye(11)))


def test_explosive_persistence_warns():
    pi = PiVector.from_arrays(restricted_pi(rho=1.2), np.eye(11) * 1e-3)
    with pytest.warns(MinimumDistanceWarning, match="outside"):
        md = minimum_distance(pi)
    assert md.warnings


def test_singular_weight_warns():
    V = np.eye(11) * 1e-3
    V[1, :] = V[:, 1] = 0.0
    with pytest.warns(MinimumDistanceWarning, match="pseudo-inverse"):
        minimum_distance(PiVector.from_arrays(restricted_pi(), V))


def test_tfp_all_zero_elasticities():
    sp = generate(DgpConfig(N=20, T=5, seed=3))
    tfp = compute_tfp(sp.dataset, {f: 0.0 for f in FACTORS})
    np.testing.assert_allclose(tfp.values["tfp"], np.exp(sp.dataset.frame["y"]), rtol=1e-12)


def test_variation_examples():
    t = tfp_variation_table([2.0, 2.0, 2.0])
    assert t["percent"].iloc[1:].tolist() == [0.0, 0.0]
    assert t["cumulated"].tolist() == [1.0, 1.0, 1.0]
    t = tfp_variation_table([1.0, 0.9, 0.99])
    np.testing.assert_allclose(t["cumulated"], [1.0, 0.9, 0.99], atol=1e-12)
    np.testing.assert_allclose(t["percent"].iloc[1:], [-0.1, 0.1], atol=1e-12)
    with pytest.raises(VariableError):
        tfp_variation_table([1.0])


def test_coefficient_cell_format():
    assert coef_cell(0.189, 0.029, 0.0001) == "0.189*** (0.029)"
    assert coef_cell(0.189, 0.029, 0.2) == "0.189 (0.029)"


# -- properties -----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_covariance_scaling(seed, c):
    rng = np.random.default_rng(seed)
    p = restricted_pi() + 0.02 * rng.standard_normal(11)
    V = random_cov(rng)
    a = minimum_distance(PiVector.from_arrays(p, V))
    b = minimum_distance(PiVector.from_arrays(p, c * V))
    np.testing.assert_allclose(b.theta, a.theta, atol=1e-10)
    assert b.distance == pytest.approx(a.distance / c, rel=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_closed_form_is_minimum(seed):
    rng = np.random.default_rng(seed)
    pi = PiVector.from_arrays(restricted_pi() + 0.02 * rng.standard_normal(11), random_cov(rng))
    md = minimum_distance(pi)
    assert md_objective(md.theta, pi) == pytest.approx(md.distance, rel=1e-8, abs=1e-12)
    for _ in range(5):
        other = md.theta + 1e-3 * rng.standard_normal(6)
        assert md_objective(other, pi) >= md.distance - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=2, max_size=8))
def test_cumulated_is_ratio_to_base(means):
    t = tfp_variation_table(means)
    np.testing.assert_allclose(t["cumulated"], np.array(means) / means[0], rtol=1e-12)


# -- synthetic oracle -----------------------------------------------------


def test_tfp_tracks_truth():
    sp = generate(DgpConfig(N=400, T=8, seed=21))
    spec = build_production_spec(sp.dataset)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MinimumDistanceWarning)
        md = minimum_distance(estimate_pi(sp.dataset, spec))
    tfp = compute_tfp(sp.dataset, md)
    t = sp.truth
    truth = np.exp(t["gamma"] + t["eta"] + t["omega"] + t["eps"])
    est = tfp.values["tfp"].reindex(truth.index)
    assert np.corrcoef(est, truth)[0, 1] >= 0.8
