"""
Dynamic System-GMM regressions of TFP on subsidy categories, for the
full sample and per productivity group, plus the sign/significance
synthesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

from .diagnostics import TestResult, battery, norm_two_sided
from .exceptions import FarmTfpError, ImpactError
from .gmm import GmmFit, fit_system_gmm
from .instruments import (ENDOGENOUS, PREDETERMINED, InstrumentSpec, InstrumentVariable,
                          ModelSpec, build_instruments)
from .panel import PanelDataset, VariableInfo, lag_name, with_lags
from .production import TfpSeries

SUBSIDIES = ("CDP", "DDP", "AES", "LFA", "RDP_Other", "RDP_inv")
SIZE = "EconomicSize"
ALL = "All"
POSITIVE, NEGATIVE, NONSIG = "positive", "negative", "non-significant"
ARROWS = {POSITIVE: "↑", NEGATIVE: "↓", NONSIG: "↔"}
SCALE = 1000.0


@dataclass(frozen=True)
class ImpactSpec:
    """Subsidy-impact equation.

    Subsidies enter divided by ``SCALE``; ``EconomicSize`` is already in
    thousands and enters as is.  ``use_log`` switches the dependent
    variable (and its lag) to log TFP.
    """

    dependent: str = "TFP"
    subsidies: tuple[str, ...] = SUBSIDIES
    size: str | None = SIZE
    time_dummies: bool = True
    group: str = ALL
    classes: Mapping[str, str] = field(default_factory=dict)
    overrides: Mapping[str, dict] = field(default_factory=dict)
    collapsed: bool = True
    use_log: bool = False

    def variable_class(self, name):
        if name in self.classes:
            return self.classes[name]
        return ENDOGENOUS if name in self.subsidies else PREDETERMINED

    def regressors(self, subsidies=None) -> tuple[str, ...]:
        subsidies = self.subsidies if subsidies is None else subsidies
        out = [lag_name(self.dependent, 1)]
        if self.size:
            out.append(self.size)
        return tuple(out + list(subsidies))


@dataclass
class ImpactResult:
    fit: GmmFit
    diagnostics: dict[str, TestResult]
    spec: ImpactSpec
    group: str
    country: str | None
    dropped: list[str]

    @property
    def nobs(self) -> int:
        return self.fit.nobs

    def table(self) -> pd.DataFrame:
        return self.fit.table()


def impact_dataset(tfp: TfpSeries | pd.Series, ds: PanelDataset, spec: ImpactSpec = ImpactSpec()
                   ) -> PanelDataset:
    """Join TFP onto ``ds`` and rescale the subsidies.

    ``ds`` must hold the raw subsidy columns (currency) and the size
    column.  If ``ds`` already carries ``spec.dependent`` and ``tfp`` is
    None, that column is used.
    """
    frame = ds.frame
    if tfp is not None:
        s = tfp.values["tfp"] if isinstance(tfp, TfpSeries) else pd.Series(tfp)
        frame = frame.drop(columns=[spec.dependent], errors="ignore").join(s.rename(spec.dependent), how="left")
    if spec.dependent not in frame.columns:
        raise ImpactError(f"no {spec.dependent} column to explain")
    if spec.use_log:
        frame[spec.dependent] = np.log(frame[spec.dependent])
    registry = dict(ds.registry)
    registry[spec.dependent] = VariableInfo("index")
    for name in spec.subsidies:
        if name in frame.columns:
            frame[name] = frame[name] / SCALE
            registry[name] = VariableInfo("thousand currency")
    out = PanelDataset(frame, registry, labels=ds.labels, report=ds.report)
    return with_lags(out, [spec.dependent], 1)


def _available_subsidies(ds: PanelDataset, spec: ImpactSpec) -> tuple[list[str], list[str]]:
    keep, dropped = [], []
    frame = ds.frame
    for name in spec.subsidies:
        if name not in frame.columns:
            dropped.append(name)
            continue
        col = frame[name]
        if name == "LFA" and (col.isna().all() or (col.fillna(0) == 0).all()):
            dropped.append(name)
            continue
        keep.append(name)
    missing = [n for n in dropped if n != "LFA"]
    if missing:
        raise ImpactError(f"subsidy column(s) missing: {missing}", missing=missing)
    return keep, dropped


def _group_mask(ds: PanelDataset, groups: pd.DataFrame | None, group: str):
    if group == ALL:
        return None
    if groups is None:
        raise ImpactError(f"group filter {group!r} needs a group assignment")
    members = set(groups.loc[groups["group"] == group, "unit_id"])
    return ds.frame.index.get_level_values("unit_id").isin(members)


def estimate_impact(tfp, ds: PanelDataset, spec: ImpactSpec = ImpactSpec(), *,
                    groups: pd.DataFrame | None = None, country: str | None = None,
                    prepared: bool = False) -> ImpactResult:
    """Fit the subsidy-impact equation for one country and group.

    ``ds`` holds one country's farms (or pass ``country`` to filter on the
    ``country`` label).  With ``prepared=True`` ``ds`` is the output of
    :func:`impact_dataset`.
    """
    work = ds if prepared else impact_dataset(tfp, ds, spec)
    if country is not None:
        if "country" not in work.labels:
            raise ImpactError("dataset has no country label")
        work = work.select(work.frame["country"].astype(str) == str(country))
    mask = _group_mask(work, groups, spec.group)
    if mask is not None:
        work = work.select(mask)
    n_units = len(work.units)
    if n_units == 0:
        raise ImpactError(f"group {spec.group!r} has no farms", group=spec.group, units=0)
    subs, dropped = _available_subsidies(work, spec)
    regs = spec.regressors(subs)
    model = ModelSpec(spec.dependent, regs, time_dummies=spec.time_dummies)
    ivars = [InstrumentVariable(spec.dependent, PREDETERMINED)]
    if spec.size:
        ivars.append(InstrumentVariable(spec.size, spec.variable_class(spec.size)))
    ivars += [InstrumentVariable(s, spec.variable_class(s)) for s in subs]
    ispec = InstrumentSpec(tuple(ivars), include_time_dummies=spec.time_dummies,
                           collapsed=spec.collapsed).with_overrides(
        {k: v for k, v in spec.overrides.items() if k in {iv.name for iv in ivars}})
    Z = build_instruments(work, ispec, model)
    if n_units < len(regs) + 2:
        raise ImpactError(f"group {spec.group!r} too small: {n_units} farms for "
                          f"{Z.instrument_count} instruments", group=spec.group, units=n_units,
                          instruments=Z.instrument_count)
    fit = fit_system_gmm(work, model, Z)
    return ImpactResult(fit, battery(fit), spec, spec.group, country, dropped)


def run_grouped(tfp, ds: PanelDataset, groups: pd.DataFrame, spec: ImpactSpec = ImpactSpec(), *,
                names=("Low", "Medium", "High"), country: str | None = None) -> dict:
    """One fit per group; a failing group maps to its exception."""
    work = impact_dataset(tfp, ds, spec)
    if country is not None:
        work = work.select(work.frame["country"].astype(str) == str(country))
    # LFA is dropped for every group when the country lacks it
    _, dropped = _available_subsidies(work, spec)
    base = ImpactSpec(**{**spec.__dict__, "subsidies": tuple(s for s in spec.subsidies if s not in dropped)})
    out = {}
    for name in names:
        gspec = ImpactSpec(**{**base.__dict__, "group": name})
        try:
            res = estimate_impact(None, work, gspec, groups=groups, prepared=True)
            res.dropped = list(dropped)
            out[name] = res
        except FarmTfpError as exc:
            out[name] = exc
    return out


# -- synthesis ------------------------------------------------------------


def classify_effect(estimate: float, se: float, level: float = 0.05) -> tuple[str, float]:
    """Direction and two-sided normal p-value of one coefficient."""
    if estimate == 0 or not math.isfinite(estimate):
        return NONSIG, 1.0
    if not se > 0:
        return NONSIG, math.nan
    p = norm_two_sided(estimate / se)
    if p < level:
        return (POSITIVE if estimate > 0 else NEGATIVE), p
    return NONSIG, p


@dataclass
class EffectSummary:
    table: pd.DataFrame      # country, group, regressor, estimate, se, p_value, direction
    level: float

    def direction(self, regressor, group=ALL, country=None) -> str:
        t = self.table
        sel = (t["regressor"] == regressor) & (t["group"] == group)
        if country is not None:
            sel &= t["country"] == country
        rows = t[sel]
        if rows.empty:
            raise KeyError((country, group, regressor))
        return rows["direction"].iloc[0]

    def arrows(self) -> pd.DataFrame:
        t = self.table.assign(arrow=self.table["direction"].map(ARROWS),
                              country=self.table["country"].fillna(""))
        return t.pivot_table(index="regressor", columns=["country", "group"], values="arrow",
                             aggfunc="first", sort=False)


def _as_fit(obj):
    if isinstance(obj, ImpactResult):
        return obj.fit
    if isinstance(obj, GmmFit):
        return obj
    return None


def summarize_effects(fits, level: float = 0.05, regressors=None) -> EffectSummary:
    """Sign/significance per coefficient across fits.

    ``fits`` maps a group name or a ``(country, group)`` pair to an
    ImpactResult or GmmFit; failed entries (exceptions) are skipped.
    Time dummies and the constant are excluded.
    """
    if isinstance(fits, (ImpactResult, GmmFit)):
        fits = {ALL: fits}
    rows = []
    for key, obj in fits.items():
        fit = _as_fit(obj)
        if fit is None:
            continue
        country, group = key if isinstance(key, tuple) else (None, key)
        se = fit.std_errors
        for j, lab in enumerate(fit.labels):
            if lab.startswith("yr") or lab == "_cons":
                continue
            if regressors is not None and lab not in regressors:
                continue
            est = float(fit.params[j])
            d, p = classify_effect(est, float(se[j]), level)
            rows.append({"country": country, "group": group, "regressor": lab, "estimate": est,
                         "se": float(se[j]), "p_value": p, "direction": d})
    cols = ["country", "group", "regressor", "estimate", "se", "p_value", "direction"]
    return EffectSummary(pd.DataFrame(rows, columns=cols), level)


__all__ = [
    "ALL", "ARROWS", "EffectSummary", "ImpactResult", "ImpactSpec", "NEGATIVE", "NONSIG", "POSITIVE",
    "SUBSIDIES", "classify_effect", "estimate_impact", "impact_dataset", "run_grouped",
    "summarize_effects",
]
