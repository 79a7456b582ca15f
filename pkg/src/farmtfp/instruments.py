"""
Instrument matrices for the System-GMM estimator.

Each unit contributes one block of rows: first-differenced equations for
calendar years ``grid[1:]`` stacked above level equations for every year
of the grid.  Rows that are not usable (missing dependent variable or
regressor) stay in the block but are zero-filled and flagged in the
``usable`` mask, so every unit has the same shape ``(R, L)``.

Lagged levels instrument the differenced equations; lagged differences
instrument the level equations.  GMM-style columns are separate per
(variable, period, lag); collapsed columns stack all periods of one lag
into a single column.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .exceptions import InstrumentConfigError, NoUsableEquationsError
from .panel import PanelDataset

ENDOGENOUS = "endogenous"
PREDETERMINED = "predetermined"
EXOGENOUS = "exogenous"
_MIN_LAG = {ENDOGENOUS: 2, PREDETERMINED: 1, EXOGENOUS: 0}

DIFF, LEVEL = "diff", "level"
CONST = "_cons"


class TooManyInstrumentsWarning(UserWarning):
    """Instrument count reached the number of units."""


@dataclass(frozen=True)
class ModelSpec:
    """Linear dynamic panel equation.

    ``regressors`` are dataset columns, lags included as distinct entries
    (``y_lag_1``, ``k_lag_1``, ...).
    """

    dependent: str
    regressors: tuple[str, ...]
    time_dummies: bool = True
    constant_in_levels: bool = True

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        if len(set(self.regressors)) != len(self.regressors):
            raise InstrumentConfigError("regressor names must be unique", regressors=self.regressors)
        if self.dependent in self.regressors:
            raise InstrumentConfigError("dependent variable listed among regressors")


@dataclass(frozen=True)
class InstrumentVariable:
    """Instrument settings for one variable.

    ``lag_min``/``lag_max`` count calendar lags of the variable's level in
    the differenced equation.  ``lag_max=math.inf`` uses every available
    lag.  ``level_lag`` is the lag of the first difference used in the
    level equation; by default ``0`` for exogenous variables and
    ``max(1, lag_min - 1)`` otherwise.
    """

    name: str
    vclass: str = PREDETERMINED
    lag_min: int | None = None
    lag_max: float | None = None
    collapsed: bool | None = None
    level_lag: int | None = None

    def __post_init__(self):
        if self.vclass not in _MIN_LAG:
            raise InstrumentConfigError(f"unknown variable class {self.vclass!r}", variable=self.name)

    def resolved(self, dependent: bool, collapsed: bool) -> "InstrumentVariable":
        floor = _MIN_LAG[self.vclass] + (1 if dependent else 0)
        if dependent and self.vclass == EXOGENOUS:
            raise InstrumentConfigError("the lagged dependent variable cannot be exogenous",
                                        variable=self.name)
        lag_min = floor if self.lag_min is None else int(self.lag_min)
        if lag_min < floor:
            raise InstrumentConfigError(
                f"lag_min={lag_min} for {self.vclass} variable {self.name!r} must be >= {floor}",
                variable=self.name)
        lag_max = lag_min + 1 if self.lag_max is None else self.lag_max
        if lag_max < lag_min:
            raise InstrumentConfigError(f"lag_max < lag_min for {self.name!r}", variable=self.name)
        level_lag = self.level_lag
        if level_lag is None:
            level_lag = 0 if self.vclass == EXOGENOUS else max(1, lag_min - 1)
        return replace(self, lag_min=lag_min, lag_max=lag_max, level_lag=int(level_lag),
                       collapsed=collapsed if self.collapsed is None else self.collapsed)


@dataclass(frozen=True)
class InstrumentSpec:
    variables: tuple[InstrumentVariable, ...]
    include_time_dummies: bool = True
    collapsed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise InstrumentConfigError("instrument variables must be unique", variables=names)

    def resolved(self, model: ModelSpec) -> tuple[InstrumentVariable, ...]:
        return tuple(v.resolved(v.name == model.dependent, self.collapsed) for v in self.variables)

    def with_overrides(self, overrides: dict | None = None, collapsed: bool | None = None) -> "InstrumentSpec":
        """Replace per-variable settings from a mapping name -> field dict."""
        overrides = overrides or {}
        unknown = set(overrides) - {v.name for v in self.variables}
        if unknown:
            raise InstrumentConfigError(f"overrides for unknown instrument variables {sorted(unknown)}")
        variables = []
        for v in self.variables:
            o = dict(overrides.get(v.name, {}))
            if "class" in o:
                o["vclass"] = o.pop("class")
            if o.get("lag_max") in ("inf", "unbounded", None) and "lag_max" in o:
                o["lag_max"] = math.inf
            variables.append(replace(v, **o))
        return replace(self, variables=tuple(variables),
                       collapsed=self.collapsed if collapsed is None else collapsed)


@dataclass
class InstrumentBlock:
    """Instruments for one equation type (a partial system)."""

    eq: str
    values: np.ndarray            # (N, R_part, L_part)
    labels: list[str]
    common: list[bool]
    units: pd.Index
    grid: np.ndarray
    usable: np.ndarray            # (N, R_part)
    dummy_years: tuple[int, ...] = ()

    @property
    def row_years(self) -> np.ndarray:
        return self.grid[1:] if self.eq == DIFF else self.grid


@dataclass
class InstrumentMatrix:
    """Assembled per-unit instrument blocks.

    ``values`` has shape ``(N, R, L)`` with differenced rows first; rows
    flagged unusable are zero.
    """

    values: np.ndarray
    labels: list[str]
    units: pd.Index
    grid: np.ndarray
    row_eq: np.ndarray
    row_year: np.ndarray
    usable: np.ndarray
    dummy_years: tuple[int, ...] = ()
    warnings: list[str] = field(default_factory=list)

    @property
    def instrument_count(self) -> int:
        return self.values.shape[2]

    @property
    def unit_count(self) -> int:
        return self.values.shape[0]

    @property
    def n_diff_rows(self) -> int:
        return int((self.row_eq == DIFF).sum())

    def permuted(self, order) -> "InstrumentMatrix":
        """Same instruments with columns reordered."""
        order = list(order)
        return replace(self, values=self.values[:, :, order], labels=[self.labels[i] for i in order])


# -- helpers --------------------------------------------------------------


def time_dummy_matrix(row_years, dummy_years) -> np.ndarray:
    """One indicator column per year in ``dummy_years`` for the given rows."""
    row_years = np.asarray(row_years)
    return (row_years[:, None] == np.asarray(dummy_years)[None, :]).astype(float)


def _required(model: ModelSpec) -> list[str]:
    return [model.dependent, *model.regressors]


def usable_rows(ds: PanelDataset, model: ModelSpec):
    """Usability of differenced and level rows on the calendar grid.

    Returns ``(diff_ok, level_ok, dense, units, grid)``; ``diff_ok`` has
    shape ``(N, T-1)`` for years ``grid[1:]`` and ``level_ok`` ``(N, T)``.
    """
    missing = [v for v in _required(model) if v not in ds]
    if missing:
        raise InstrumentConfigError(f"model variables not in dataset: {missing}")
    dense, units, grid = ds.dense(_required(model))
    present = np.ones((len(units), len(grid)), dtype=bool)
    for v in _required(model):
        present &= ~np.isnan(dense[v])
    level_ok = present
    diff_ok = present[:, 1:] & present[:, :-1]
    return diff_ok, level_ok, dense, units, grid


def estimation_dummy_years(level_ok, grid, model: ModelSpec) -> tuple[int, ...]:
    if not model.time_dummies:
        return ()
    years = [int(y) for y, any_ok in zip(grid, level_ok.any(axis=0)) if any_ok]
    return tuple(years[1:] if model.constant_in_levels else years)


def _instrument_dense(ds, spec_vars):
    names = [v.name for v in spec_vars]
    missing = [n for n in names if n not in ds]
    if missing:
        raise InstrumentConfigError(f"instrument variables not in dataset: {missing}")
    dense, _, _ = ds.dense(names)
    return dense


def _zero_nan(a):
    return np.where(np.isnan(a), 0.0, a)


# -- blocks ---------------------------------------------------------------


def build_difference_instruments(ds: PanelDataset, spec: InstrumentSpec, model: ModelSpec) -> InstrumentBlock:
    """Lagged levels instrumenting the first-differenced equations."""
    resolved = spec.resolved(model)
    diff_ok, level_ok, _, units, grid = usable_rows(ds, model)
    dense = _instrument_dense(ds, resolved)
    N, T = len(units), len(grid)
    Rd = T - 1
    cols, labels, common = [], [], []
    for v in resolved:
        x = dense[v.name]
        if v.vclass == EXOGENOUS:
            d = _zero_nan(x[:, 1:] - x[:, :-1])
            cols.append(d)
            labels.append(f"dif:D.{v.name}")
            common.append(False)
            continue
        max_lag = int(min(v.lag_max, T - 1))
        if v.collapsed:
            for s in range(v.lag_min, max_lag + 1):
                col = np.zeros((N, Rd))
                for r in range(Rd):
                    tau = r + 1
                    if tau - s >= 0:
                        col[:, r] = _zero_nan(x[:, tau - s])
                cols.append(col)
                labels.append(f"dif:{v.name}.L{s}")
                common.append(False)
        else:
            for r in range(Rd):
                tau = r + 1
                for s in range(v.lag_min, int(min(v.lag_max, tau)) + 1):
                    col = np.zeros((N, Rd))
                    col[:, r] = _zero_nan(x[:, tau - s])
                    cols.append(col)
                    labels.append(f"dif:{v.name}.L{s}@{int(grid[tau])}")
                    common.append(False)
    dummy_years = estimation_dummy_years(level_ok, grid, model)
    if spec.include_time_dummies and dummy_years:
        D = time_dummy_matrix(grid, dummy_years)
        dD = D[1:] - D[:-1]
        for j, y in enumerate(dummy_years):
            cols.append(np.broadcast_to(dD[:, j], (N, Rd)).copy())
            labels.append(f"yr{y}")
            common.append(True)
    values = np.stack(cols, axis=2) if cols else np.zeros((N, Rd, 0))
    values = values * diff_ok[:, :, None]
    return InstrumentBlock(DIFF, values, labels, common, units, grid, diff_ok, dummy_years)


def build_level_instruments(ds: PanelDataset, spec: InstrumentSpec, model: ModelSpec) -> InstrumentBlock:
    """Lagged first differences instrumenting the level equations."""
    resolved = spec.resolved(model)
    _, level_ok, _, units, grid = usable_rows(ds, model)
    dense = _instrument_dense(ds, resolved)
    N, T = len(units), len(grid)
    cols, labels, common = [], [], []
    for v in resolved:
        x = dense[v.name]
        lg = v.level_lag
        # dx[:, tau] = x[tau - lg] - x[tau - lg - 1]
        dx = np.full((N, T), np.nan)
        if T - lg - 1 > 0:
            dx[:, lg + 1:] = x[:, 1:T - lg] - x[:, :T - lg - 1]
        dx = _zero_nan(dx)
        if v.collapsed:
            cols.append(dx)
            labels.append(f"lev:D.{v.name}.L{lg}")
            common.append(False)
        else:
            for tau in range(lg + 1, T):
                col = np.zeros((N, T))
                col[:, tau] = dx[:, tau]
                cols.append(col)
                labels.append(f"lev:D.{v.name}.L{lg}@{int(grid[tau])}")
                common.append(False)
    dummy_years = estimation_dummy_years(level_ok, grid, model)
    if spec.include_time_dummies and dummy_years:
        D = time_dummy_matrix(grid, dummy_years)
        for j, y in enumerate(dummy_years):
            cols.append(np.broadcast_to(D[:, j], (N, T)).copy())
            labels.append(f"yr{y}")
            common.append(True)
    if model.constant_in_levels:
        cols.append(np.ones((N, T)))
        labels.append(CONST)
        common.append(False)
    values = np.stack(cols, axis=2) if cols else np.zeros((N, T, 0))
    values = values * level_ok[:, :, None]
    return InstrumentBlock(LEVEL, values, labels, common, units, grid, level_ok, dummy_years)


def assemble_system(diff: InstrumentBlock, level: InstrumentBlock) -> InstrumentMatrix:
    """Stack differenced rows above level rows, block-diagonally.

    Columns are the difference-only instruments, then the level-only ones,
    then instruments declared common to both equations (time dummies),
    which keep their values on both kinds of rows.
    """
    if diff.eq != DIFF or level.eq != LEVEL:
        raise InstrumentConfigError("assemble_system expects (difference block, level block)")
    if not diff.units.equals(level.units) or not np.array_equal(diff.grid, level.grid):
        raise InstrumentConfigError("difference and level blocks cover different units or years")
    N = len(diff.units)
    Rd, Rl = diff.values.shape[1], level.values.shape[1]
    parts, labels = [], []
    d_only = [j for j, c in enumerate(diff.common) if not c]
    l_only = [j for j, c in enumerate(level.common) if not c]
    if d_only:
        parts.append(np.concatenate([diff.values[:, :, d_only], np.zeros((N, Rl, len(d_only)))], axis=1))
        labels += [diff.labels[j] for j in d_only]
    if l_only:
        parts.append(np.concatenate([np.zeros((N, Rd, len(l_only))), level.values[:, :, l_only]], axis=1))
        labels += [level.labels[j] for j in l_only]
    d_common = {diff.labels[j]: j for j, c in enumerate(diff.common) if c}
    l_common = {level.labels[j]: j for j, c in enumerate(level.common) if c}
    for name in list(dict.fromkeys([*d_common, *l_common])):
        top = diff.values[:, :, d_common[name]] if name in d_common else np.zeros((N, Rd))
        bottom = level.values[:, :, l_common[name]] if name in l_common else np.zeros((N, Rl))
        parts.append(np.concatenate([top, bottom], axis=1)[:, :, None])
        labels.append(name)
    values = np.concatenate(parts, axis=2) if parts else np.zeros((N, Rd + Rl, 0))
    usable = np.concatenate([diff.usable, level.usable], axis=1)
    if not usable.any():
        raise NoUsableEquationsError("no usable equations: every row lacks the dependent "
                                     "variable or a regressor", units=N)
    row_eq = np.array([DIFF] * Rd + [LEVEL] * Rl)
    row_year = np.concatenate([diff.row_years, level.row_years])
    msgs = []
    L = values.shape[2]
    if L >= N:
        msg = (f"instrument count {L} >= unit count {N}: too many instruments weaken "
               f"the overidentification test and bias two-step estimates")
        warnings.warn(msg, TooManyInstrumentsWarning, stacklevel=2)
        msgs.append(msg)
    dummy_years = tuple(dict.fromkeys([*diff.dummy_years, *level.dummy_years]))
    return InstrumentMatrix(values, labels, diff.units, diff.grid, row_eq, row_year, usable,
                            dummy_years, msgs)


def build_instruments(ds: PanelDataset, spec: InstrumentSpec, model: ModelSpec) -> InstrumentMatrix:
    """Difference and level blocks assembled into one system."""
    return assemble_system(build_difference_instruments(ds, spec, model),
                           build_level_instruments(ds, spec, model))


def count_instruments(T: int, spec: InstrumentSpec, model: ModelSpec, n_dummies: int = 0) -> int:
    """Closed-form column count on a grid of ``T`` years (dummies supplied)."""
    total = 0
    for v in spec.resolved(model):
        if v.vclass == EXOGENOUS:
            total += 1
            total += 1 if v.collapsed else max(0, T - v.level_lag - 1)
            continue
        hi = int(min(v.lag_max, T - 1))
        if v.collapsed:
            total += max(0, hi - v.lag_min + 1)
            total += 1
        else:
            for tau in range(1, T):
                total += max(0, int(min(v.lag_max, tau)) - v.lag_min + 1)
            total += max(0, T - v.level_lag - 1)
    if spec.include_time_dummies:
        total += n_dummies
    if model.constant_in_levels:
        total += 1
    return total
