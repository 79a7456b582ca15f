import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from farmtfp.exceptions import InstrumentConfigError, NoUsableEquationsError
from farmtfp.instruments import (ENDOGENOUS, EXOGENOUS, PREDETERMINED, InstrumentSpec, InstrumentVariable, ModelSpec, TooManyInstrumentsWarning,
                                 assemble_system, build_difference_instruments, build_instruments,
                                 build_level_instruments, count_instruments, time_dummy_matrix)
from farmtfp.panel import PanelDataset


def panel(N=3, T=4, seed=0, first=2001):
    rng = np.random.default_rng(seed)
    rows = [{"unit_id": f"u{i}", "year": first + t, "y": rng.normal(), "x": rng.normal()}
            for i in range(N) for t in range(T)]
    return PanelDataset(pd.DataFrame(rows))


MODEL = ModelSpec("y", ("x",), time_dummies=False)


def spec(vclass=ENDOGENOUS, collapsed=False, dummies=False, **kw):
    return InstrumentSpec((InstrumentVariable("x", vclass, **kw),), include_time_dummies=dummies,
                          collapsed=collapsed)


def hand_count_diff(T, lag_min, lag_max, collapsed):
    """Independent enumeration: periods t = 2..T, lags lag_min..min(lag_max, t-1)."""
    cols = set()
    for t in range(2, T + 1):
        for s in range(lag_min, lag_max + 1):
            if t - s >= 1:
                cols.add(s if collapsed else (t, s))
    return len(cols)


def test_difference_uncollapsed_example():
    b = build_difference_instruments(panel(), spec(), MODEL)
    assert len(b.labels) == 3
    assert b.labels == ["dif:x.L2@2003", "dif:x.L2@2004", "dif:x.L3@2004"]


def test_difference_collapsed_example():
    b = build_difference_instruments(panel(), spec(collapsed=True), MODEL)
    assert b.labels == ["dif:x.L2", "dif:x.L3"]


def test_exogenous_single_column():
    b = build_difference_instruments(panel(), spec(EXOGENOUS), MODEL)
    assert b.labels == ["dif:D.x"]
    ds = panel()
    x = ds.dense(["x"])[0]["x"]
    np.testing.assert_allclose(b.values[:, :, 0], np.diff(x, axis=1))


def test_level_collapsed_example():
    b = build_level_instruments(panel(), spec(collapsed=True), ModelSpec("y", ("x",), time_dummies=False,
                                                                          constant_in_levels=False))
    assert b.labels == ["lev:D.x.L1"]
    x = panel().dense(["x"])[0]["x"]
    np.testing.assert_allclose(b.values[:, 2:, 0], x[:, 1:-1] - x[:, :-2])
    assert (b.values[:, :2, 0] == 0).all()


def test_time_dummies_structure():
    model = ModelSpec("y", ("x",), time_dummies=True, constant_in_levels=False)
    b = build_level_instruments(panel(T=4), spec(dummies=True), model)
    dummies = b.values[0][:, [i for i, l in enumerate(b.labels) if l.startswith("yr")]]
    assert dummies.shape[1] == 4
    D = time_dummy_matrix(np.arange(2002, 2005), [2002, 2003, 2004])
    assert D.shape == (3, 3)
    np.testing.assert_array_equal(D.T @ D, np.eye(3))
    assert D.sum(axis=0).tolist() == [1, 1, 1]


def test_constant_only():
    model = ModelSpec("y", (), time_dummies=False)
    b = build_level_instruments(panel(), InstrumentSpec((), include_time_dummies=False), model)
    assert b.labels == ["_cons"]
    assert (b.values == 1).all()


def test_assemble_block_structure():
    ds = panel(N=10)
    d = build_difference_instruments(ds, spec(), MODEL)
    lv = build_level_instruments(ds, spec(), MODEL)
    Z = assemble_system(d, lv)
    assert Z.instrument_count == 3 + len(lv.labels)
    nd = Z.n_diff_rows
    assert (Z.values[:, nd:, :3] == 0).all()
    assert (Z.values[:, :nd, 3:] == 0).all()


def test_too_many_instruments_warning():
    ds = panel(N=3, T=6)
    with pytest.warns(TooManyInstrumentsWarning):
        build_instruments(ds, spec(lag_max=np.inf), MODEL)


def test_no_usable_equations():
    ds = PanelDataset(pd.DataFrame({"unit_id": ["a", "a"], "year": [2001, 2002], "y": [1.0, np.nan],
                                    "x": [np.nan, 1.0]}))
    with pytest.raises(NoUsableEquationsError, match="no usable equations"):
        build_instruments(ds, spec(), MODEL)


def test_lag_rules():
    with pytest.raises(InstrumentConfigError):
        spec(ENDOGENOUS, lag_min=1).resolved(MODEL)
    with pytest.raises(InstrumentConfigError):
        InstrumentSpec((InstrumentVariable("y", EXOGENOUS),)).resolved(MODEL)
    with pytest.raises(InstrumentConfigError):
        InstrumentSpec((InstrumentVariable("x", PREDETERMINED, lag_min=3, lag_max=2),)).resolved(MODEL)
    with pytest.raises(InstrumentConfigError):
        InstrumentVariable("x", "weird")


def test_lagged_dependent_gets_extra_lag():
    v, = InstrumentSpec((InstrumentVariable("y", PREDETERMINED),)).resolved(MODEL)
    assert v.lag_min == 2


def test_overrides():
    s = spec().with_overrides({"x": {"class": "predetermined", "lag_max": "inf"}})
    v, = s.resolved(MODEL)
    assert (v.vclass, v.lag_min, v.lag_max) == (PREDETERMINED, 1, np.inf)
    with pytest.raises(InstrumentConfigError):
        spec().with_overrides({"zz": {}})


def test_missing_cells_zero_filled_and_masked():
    ds = panel(N=10)
    f = ds.frame
    f.loc[("u0", 2002), "x"] = np.nan
    ds = PanelDataset(f)
    Z = build_instruments(ds, spec(), MODEL)
    assert np.isfinite(Z.values).all()
    assert not Z.usable[0, Z.row_year.tolist().index(2002)]


# -- properties -----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 7), st.sampled_from([ENDOGENOUS, PREDETERMINED]), st.integers(0, 2), st.integers(0, 3))
def test_collapsed_is_row_sum(T, vclass, extra_min, extra_span):
    lag_min = {ENDOGENOUS: 2, PREDETERMINED: 1}[vclass] + extra_min
    kw = dict(lag_min=lag_min, lag_max=lag_min + extra_span)
    ds = panel(N=4, T=T, seed=T)
    full = build_difference_instruments(ds, spec(vclass, **kw), MODEL)
    coll = build_difference_instruments(ds, spec(vclass, collapsed=True, **kw), MODEL)
    for j, lab in enumerate(coll.labels):
        members = [i for i, l in enumerate(full.labels) if l.split("@")[0] == lab]
        summed = full.values[:, :, members].sum(axis=2) if members else np.zeros(full.values.shape[:2])
        np.testing.assert_array_equal(coll.values[:, :, j], summed)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 6), st.sampled_from([ENDOGENOUS, PREDETERMINED]), st.booleans(), st.integers(0, 3))
def test_column_count_matches_hand_enumeration(T, vclass, collapsed, span):
    lag_min = {ENDOGENOUS: 2, PREDETERMINED: 1}[vclass]
    lag_max = lag_min + span
    s = spec(vclass, collapsed=collapsed, lag_min=lag_min, lag_max=lag_max)
    ds = panel(N=40, T=T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TooManyInstrumentsWarning)
        Z = build_instruments(ds, s, MODEL)
    level_lag = max(1, lag_min - 1)
    n_level = 1 if collapsed else len([t for t in range(1, T + 1) if t - level_lag - 1 >= 1])
    expected = hand_count_diff(T, lag_min, lag_max, collapsed) + n_level + 1
    assert Z.instrument_count == expected == count_instruments(T, s, MODEL)


@pytest.mark.slow
def test_moment_validity_under_null():
    from farmtfp.production import build_production_spec
    from farmtfp.synthetic import DgpConfig, generate

    means, draws = [], []
    for r in range(20):
        sp = generate(DgpConfig(N=2000, T=8, seed=400 + r))
        ds = sp.dataset
        prod = build_production_spec(ds)
        dsl = prod.prepare(ds)
        Z = build_instruments(dsl, prod.instruments, prod.model)
        # structural error: omega innovation plus eps, differenced on diff rows
        t = sp.truth
        e = (t["omega"] - sp.config.rho * t.groupby(level=0)["omega"].shift(1)).rename("xi")
        tmp = PanelDataset(pd.DataFrame({"xi": e + t["eta"] * (1 - sp.config.rho)}), labels=())
        xi = tmp.dense(["xi"])[0]["xi"]
        dxi = np.diff(xi, axis=1)
        err = np.concatenate([dxi, xi], axis=1)
        err = np.where(np.isnan(err), 0.0, err) * Z.usable
        # level rows carry (1 - rho) eta, which level instruments (differences) are orthogonal to
        g = np.einsum("nrl,nr->nl", Z.values, err)
        keep = [i for i, lab in enumerate(Z.labels) if lab.startswith("dif:")]
        means.append(g[:, keep].mean(axis=0))
        draws.append(g[:, keep].std(axis=0, ddof=1) / np.sqrt(g.shape[0]))
    m = np.mean(means, axis=0)
    se = np.mean(draws, axis=0) / np.sqrt(len(means))
    assert np.linalg.norm(m) < 5 * np.linalg.norm(se)
