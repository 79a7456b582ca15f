import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from farmtfp.acf import (HIGH, LOW, MEDIUM, AcfConfig, acf_first_stage, acf_objective, classify_groups,
                         estimate_acf, polynomial_terms)
from farmtfp.exceptions import AcfError, ConvergenceError, GroupingError
from farmtfp.panel import PanelDataset
from farmtfp.synthetic import AcfDgpConfig, generate_acf


@pytest.fixture(scope="module")
def acf_panel():
    return generate_acf(AcfDgpConfig(N=400, T=6, seed=31))


def scores(values):
    """One observation per unit, so the farm median is the value itself."""
    idx = pd.MultiIndex.from_arrays([[f"u{i}" for i in range(len(values))], [2010] * len(values)],
                                    names=["unit_id", "year"])
    return pd.Series(values, index=idx, dtype=float)


def test_degree_one_r2_matches_lstsq(acf_panel):
    ds = acf_panel.dataset
    fs = acf_first_stage(ds, AcfConfig(poly_degree=1))
    f = ds.frame[["y", "k", "l", "n", "m", "g"]].dropna()
    yrs = f.index.get_level_values("year").to_numpy()
    D = np.column_stack([np.ones(len(f)), f[["k", "l", "n", "m", "g"]].to_numpy(),
                         *[(yrs == y).astype(float) for y in np.unique(yrs)[1:]]])
    y = f["y"].to_numpy()
    resid = y - D @ np.linalg.lstsq(D, y, rcond=None)[0]
    r2 = 1 - resid @ resid / ((y - y.mean()) ** 2).sum()
    assert fs.r2 == pytest.approx(r2, abs=1e-10)


def test_degree_two_term_count():
    assert len(polynomial_terms(("k", "l", "n", "m", "g"), 2)) == 20
    assert len(polynomial_terms(("k", "l", "n", "m", "g"), 3)) == 55


def test_affine_input_change_leaves_projection(acf_panel):
    ds = acf_panel.dataset
    f = ds.frame.copy()
    f["k"] = 2.5 * f["k"] - 1.0
    f["m"] = -0.5 * f["m"] + 3.0
    a = acf_first_stage(ds)
    b = acf_first_stage(PanelDataset(f))
    np.testing.assert_allclose(b.phi, a.phi, atol=1e-8)


def test_constant_output_flagged(acf_panel):
    f = acf_panel.dataset.frame.copy()
    f["y"] = 1.0
    fs = acf_first_stage(PanelDataset(f))
    assert not fs.r2_defined


def test_collinear_inputs_named(acf_panel):
    f = acf_panel.dataset.frame.copy()
    f["g"] = f["k"]
    with pytest.raises(AcfError, match="rank deficient"):
        acf_first_stage(PanelDataset(f), AcfConfig(poly_degree=1))


def test_config_validation():
    with pytest.raises(AcfError):
        AcfConfig(poly_degree=5)
    with pytest.raises(AcfError):
        AcfConfig(tol=0)
    cfg = AcfConfig(include_g=False)
    assert "g" not in cfg.factors and "g_lag" not in cfg.instruments


def test_fit_is_local_minimum(acf_panel):
    ds = acf_panel.dataset
    fit = estimate_acf(ds, AcfConfig(), start=dict(zip("klnmg", acf_panel.config.beta)))
    Q = acf_objective(ds, fit.first_stage)
    b = fit.theta
    assert Q(b) == pytest.approx(fit.objective_value, rel=1e-10, abs=1e-300)
    for j in range(len(b)):
        for h in (1e-3, -1e-3):
            e = np.zeros_like(b)
            e[j] = h
            assert Q(b + e) >= Q(b)


def test_single_period_units_do_not_pair(acf_panel):
    ds = acf_panel.dataset
    f = ds.frame
    extra = f.xs(f.index.get_level_values("unit_id")[0], level="unit_id").iloc[:1].copy()
    extra.index = pd.MultiIndex.from_tuples([("solo", extra.index[0])], names=["unit_id", "year"])
    more = PanelDataset(pd.concat([f, extra]))
    cfg = AcfConfig(n_starts=1)
    start = dict(zip("klnmg", acf_panel.config.beta))
    assert estimate_acf(more, cfg, start).pairs == estimate_acf(ds, cfg, start).pairs


def test_nonconvergence_reports_trace(acf_panel):
    with pytest.raises(ConvergenceError) as err:
        estimate_acf(acf_panel.dataset, AcfConfig(max_iter=2, n_starts=2))
    assert len(err.value.trace) == 2 and err.value.best is not None


# -- grouping -------------------------------------------------------------


def test_terciles_one_to_nine():
    g = classify_groups(scores(range(1, 10)))
    assert g["group"].tolist() == [LOW] * 3 + [MEDIUM] * 3 + [HIGH] * 3


def test_farm_score_is_median():
    idx = pd.MultiIndex.from_product([["a"], [2010, 2011, 2012]], names=["unit_id", "year"])
    s = pd.concat([pd.Series([1.0, 3.0, 100.0], index=idx), scores([0.5, 10.0])])
    g = classify_groups(s).set_index("unit_id")
    assert g.loc["a", "score"] == 3.0


def test_ties_share_group():
    g = classify_groups(scores([1, 1, 2, 3, 4, 5]))
    assert g["group"].tolist()[:2] == [LOW, LOW]


def test_too_few_units():
    with pytest.raises(GroupingError, match="at least 3"):
        classify_groups(scores([1.0, 2.0]))


def test_missing_country():
    with pytest.raises(GroupingError):
        classify_groups(scores([1, 2, 3]), {"u0": "DE", "u1": "DE"})


def test_grouping_within_country():
    countries = {f"u{i}": ("DE" if i < 6 else "FR") for i in range(12)}
    g = classify_groups(scores(range(12)), countries)
    assert g.groupby("country")["group"].value_counts().unstack().to_numpy().tolist() == [[2, 2, 2]] * 2


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=3, max_size=40))
def test_grouping_monotone_invariant(vals):
    a = classify_groups(scores(vals))["group"]
    b = classify_groups(scores(np.exp(np.asarray(vals) / 10)))["group"]
    assert a.tolist() == b.tolist()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=3, max_size=40))
def test_grouping_order_respected(vals):
    g = classify_groups(scores(vals))
    rank = g["group"].map({LOW: 0, MEDIUM: 1, HIGH: 2}).to_numpy()
    v = g["score"].to_numpy()
    order = np.argsort(v, kind="stable")
    assert (np.diff(rank[order]) >= 0).all()
