"""
Long-format farm panels: ingestion, deflation, logs and calendar lags.

A :class:`PanelDataset` is an immutable wrapper around a pandas frame
indexed by ``(unit_id, year)``.  Numeric variables are float columns with
``NaN`` as the explicit missing marker; string attributes such as the
country or region code live in separate label columns.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd
import yaml

from .exceptions import (
    DuplicateKeyError,
    MissingIndexError,
    NonPositiveValueError,
    PanelError,
    TransformStateError,
)

RAW, DEFLATED, LOGGED = "raw", "deflated", "logged"
_STATES = (RAW, DEFLATED, LOGGED)


@dataclass(frozen=True)
class VariableInfo:
    unit: str = ""
    state: str = RAW

    def __post_init__(self):
        if self.state not in _STATES:
            raise PanelError(f"unknown transform state {self.state!r}")


@dataclass(frozen=True)
class Issue:
    """One problem found while building or transforming a panel."""

    row: int | None
    unit: object
    year: int | None
    column: str
    value: object
    message: str


@dataclass
class Report:
    """Ingestion / transformation report.

    ``issues`` collects problems at cell level, ``dropped`` counts removed
    rows by reason.
    """

    issues: list[Issue] = field(default_factory=list)
    dropped: dict[str, int] = field(default_factory=dict)

    def add(self, *args, **kwargs):
        self.issues.append(Issue(*args, **kwargs))

    def count_dropped(self, reason, n):
        if n:
            self.dropped[reason] = self.dropped.get(reason, 0) + int(n)

    def merged(self, other: "Report") -> "Report":
        out = Report(list(self.issues) + list(other.issues), dict(self.dropped))
        for k, v in other.dropped.items():
            out.count_dropped(k, v)
        return out

    def __len__(self):
        return len(self.issues)

    def to_frame(self) -> pd.DataFrame:
        cols = ["row", "unit", "year", "column", "value", "message"]
        rows = [dataclasses.astuple(i) for i in self.issues]
        rows += [(None, None, None, "", n, f"dropped: {reason}") for reason, n in sorted(self.dropped.items())]
        return pd.DataFrame(rows, columns=cols)


class PanelDataset:
    """Immutable unbalanced panel of farm x year observations.

    Parameters
    ----------
    frame : pd.DataFrame
        Must carry ``unit_id`` and ``year`` either as columns or as the
        index.  Every other column is treated as a numeric variable unless
        listed in ``labels``.
    registry : mapping, optional
        Variable name -> :class:`VariableInfo`.  Variables without an entry
        are registered as raw with no unit of measure.
    labels : iterable of str
        Names of non-numeric attribute columns (country, region, ...).
    """

    def __init__(self, frame: pd.DataFrame, registry: Mapping[str, VariableInfo] | None = None,
                 labels: Iterable[str] = (), report: Report | None = None):
        frame = frame.copy()
        if list(frame.index.names) != ["unit_id", "year"]:
            if not {"unit_id", "year"} <= set(frame.columns):
                raise PanelError("frame needs unit_id and year columns or index")
            frame = frame.set_index(["unit_id", "year"])
        years = frame.index.get_level_values("year")
        if not pd.api.types.is_integer_dtype(years):
            frame.index = frame.index.set_levels(
                frame.index.levels[1].astype(int), level="year")
        dup = frame.index.duplicated(keep="first")
        if dup.any():
            unit, year = frame.index[dup][0]
            raise DuplicateKeyError(f"duplicate observation for unit {unit!r}, year {year}",
                                    unit=unit, year=int(year))
        frame = frame.sort_index()
        labels = tuple(labels)
        missing = [c for c in labels if c not in frame.columns]
        if missing:
            raise PanelError(f"label columns not in frame: {missing}")
        for col in frame.columns:
            if col not in labels:
                frame[col] = pd.to_numeric(frame[col], errors="raise").astype(float)
        registry = dict(registry or {})
        for col in frame.columns:
            if col not in labels:
                registry.setdefault(col, VariableInfo())
        self._frame = frame
        self._labels = labels
        self._registry = {k: v for k, v in registry.items() if k in frame.columns}
        self.report = report if report is not None else Report()

    # -- accessors -------------------------------------------------------

    @property
    def frame(self) -> pd.DataFrame:
        """A copy of the underlying frame."""
        return self._frame.copy()

    @property
    def registry(self) -> dict[str, VariableInfo]:
        return dict(self._registry)

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    @property
    def variables(self) -> list[str]:
        return [c for c in self._frame.columns if c not in self._labels]

    @property
    def units(self) -> pd.Index:
        return self._frame.index.get_level_values("unit_id").unique()

    @property
    def years(self) -> list[int]:
        return sorted(int(y) for y in self._frame.index.get_level_values("year").unique())

    @property
    def n_obs(self) -> int:
        return len(self._frame)

    def __len__(self):
        return len(self._frame)

    def __contains__(self, name):
        return name in self._frame.columns

    def __repr__(self):
        return (f"PanelDataset(n_obs={self.n_obs}, units={len(self.units)}, "
                f"variables={self.variables})")

    def column(self, name: str) -> pd.Series:
        if name not in self._frame.columns:
            raise PanelError(f"variable {name!r} not in dataset", variable=name)
        return self._frame[name].copy()

    def state(self, name: str) -> str:
        return self._registry[name].state

    # -- derived datasets ------------------------------------------------

    def _derive(self, frame, registry=None, report=None, labels=None):
        return PanelDataset(frame, registry if registry is not None else self._registry,
                            labels=self._labels if labels is None else labels,
                            report=report if report is not None else self.report)

    def with_columns(self, columns: Mapping[str, pd.Series], info: Mapping[str, VariableInfo] | None = None):
        """Return a new dataset with extra (or replaced) numeric columns."""
        frame = self._frame.copy()
        registry = dict(self._registry)
        for name, values in columns.items():
            frame[name] = values.reindex(frame.index) if isinstance(values, pd.Series) else values
            registry[name] = (info or {}).get(name, registry.get(name, VariableInfo()))
        return self._derive(frame, registry)

    def select(self, mask) -> "PanelDataset":
        """Subset rows by a boolean mask aligned with the index."""
        mask = pd.Series(mask, index=self._frame.index) if not isinstance(mask, pd.Series) else mask
        return self._derive(self._frame[mask.reindex(self._frame.index).fillna(False).astype(bool)])

    def subset_units(self, units) -> "PanelDataset":
        keep = self._frame.index.get_level_values("unit_id").isin(list(units))
        return self._derive(self._frame[keep])

    def to_csv(self, path) -> None:
        """Write the panel in the ingestion CSV layout (empty cell = missing)."""
        self._frame.reset_index().to_csv(path, index=False, na_rep="", float_format="%.17g")

    def dense(self, names: Iterable[str]) -> tuple[dict[str, np.ndarray], pd.Index, np.ndarray]:
        """Unit x calendar-year arrays for ``names``.

        Returns ``(arrays, units, years)`` where ``years`` is the contiguous
        calendar grid from the first to the last observed year and each
        array has shape ``(n_units, n_years)`` with ``NaN`` where the
        observation (or the whole row) is missing.
        """
        units = self.units
        years = np.arange(min(self.years), max(self.years) + 1)
        ui = self._frame.index.codes[0]
        # index codes follow level order, which need not match appearance order
        level_units = self._frame.index.levels[0]
        remap = pd.Index(units).get_indexer(level_units)
        ui = remap[ui]
        ti = self._frame.index.get_level_values("year").to_numpy() - years[0]
        out = {}
        for name in names:
            arr = np.full((len(units), len(years)), np.nan)
            arr[ui, ti] = self.column(name).to_numpy(dtype=float)
            out[name] = arr
        return out, units, years


# -- ingestion -----------------------------------------------------------


@dataclass
class Schema:
    """Maps logical names to CSV column headers.

    ``variables`` maps logical variable name -> header; ``units`` gives an
    optional unit of measure per logical variable; ``labels`` maps logical
    label name (e.g. ``country``) -> header.
    """

    unit_id: str = "unit_id"
    year: str = "year"
    variables: dict[str, str] = field(default_factory=dict)
    units: dict[str, str] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, data: Mapping) -> "Schema":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PanelError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**{k: (dict(v) if isinstance(v, Mapping) else v) for k, v in data.items()})

    @classmethod
    def load(cls, path) -> "Schema":
        text = Path(path).read_text(encoding="utf-8")
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_mapping(data or {})

    def to_mapping(self) -> dict:
        return dataclasses.asdict(self)


def load_panel(path, schema: Schema | Mapping) -> PanelDataset:
    """Read a long-format CSV into a :class:`PanelDataset`.

    Unparseable numeric cells become missing and are listed in the
    dataset's ``report`` with their (0-based) data-row index.  Rows whose
    unit id or year cannot be read are excluded and reported the same way.
    Duplicate ``(unit, year)`` pairs raise :class:`DuplicateKeyError`.
    """
    if not isinstance(schema, Schema):
        schema = Schema.from_mapping(schema)
    path = Path(path)
    if not path.exists():
        raise PanelError(f"input file not found: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    needed = [schema.unit_id, schema.year, *schema.variables.values(), *schema.labels.values()]
    absent = [c for c in needed if c not in raw.columns]
    if absent:
        raise PanelError(f"columns missing from {path.name}: {absent}")

    report = Report()
    unit = raw[schema.unit_id].str.strip()
    year = pd.to_numeric(raw[schema.year].str.strip(), errors="coerce")
    bad_key = (unit == "") | year.isna() | (year != year.round())
    for i in np.flatnonzero(bad_key.to_numpy()):
        report.add(int(i), raw.at[i, schema.unit_id], None, schema.year,
                   raw.at[i, schema.year], "unreadable unit id or year; row excluded")
    report.count_dropped("bad_key", int(bad_key.sum()))

    out = pd.DataFrame({"unit_id": unit, "year": year})
    for name, header in schema.variables.items():
        text = raw[header].str.strip()
        values = pd.to_numeric(text, errors="coerce")
        bad = values.isna() & (text != "")
        for i in np.flatnonzero((bad & ~bad_key).to_numpy()):
            report.add(int(i), unit.iat[i], int(year.iat[i]), name, text.iat[i],
                       "unparseable numeric cell; set to missing")
        out[name] = values.astype(float)
    for name, header in schema.labels.items():
        out[name] = raw[header].str.strip()
    out = out[~bad_key].copy()
    out["year"] = out["year"].astype(int)
    registry = {name: VariableInfo(schema.units.get(name, ""), RAW) for name in schema.variables}
    return PanelDataset(out, registry, labels=tuple(schema.labels), report=report)


# -- price deflation -----------------------------------------------------


@dataclass(frozen=True)
class PriceIndexTable:
    """Price indices keyed by ``(country, year, category)``; base period = 1."""

    entries: Mapping[tuple[str, int, str], float]

    def __post_init__(self):
        bases = set()
        for key, value in self.entries.items():
            if not (np.isfinite(value) and value > 0):
                raise PanelError(f"price index must be positive and finite, got {value} at {key}")
            if abs(value - 1.0) <= 1e-12:
                bases.add((key[0], key[2]))
        groups = {(c, cat) for c, _, cat in self.entries}
        nobase = sorted(groups - bases)
        if nobase:
            raise PanelError(f"no base period (index 1.0) for {nobase}")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "PriceIndexTable":
        entries = {(str(r.country), int(r.year), str(r.category)): float(r.index)
                   for r in frame.itertuples(index=False)}
        return cls(entries)

    @classmethod
    def load(cls, path) -> "PriceIndexTable":
        frame = pd.read_csv(path, dtype={"country": str, "category": str}, keep_default_na=False)
        return cls.from_frame(frame)

    def rebased(self, year: int) -> "PriceIndexTable":
        """Rescale every (country, category) series so ``year`` equals 1."""
        out = {}
        for (c, y, cat), v in self.entries.items():
            base = self.entries.get((c, year, cat))
            if base is None:
                raise MissingIndexError(f"no entry for base year {year}", country=c, category=cat)
            out[(c, y, cat)] = v / base
        return PriceIndexTable(out)

    def lookup(self, country, year, category):
        return self.entries.get((country, int(year), category))


def deflate(ds: PanelDataset, idx: PriceIndexTable, mapping: Mapping[str, str],
            country_label: str = "country") -> PanelDataset:
    """Divide each mapped raw variable by its price index.

    The index is looked up by the observation's country label (empty string
    when the dataset has no such label), year and the variable's category.
    """
    for var in mapping:
        if var not in ds:
            raise PanelError(f"variable {var!r} not in dataset")
        if ds.state(var) != RAW:
            raise TransformStateError(f"variable {var!r} is already {ds.state(var)}; only raw "
                                      f"variables can be deflated", variable=var)
    frame = ds._frame
    countries = frame[country_label].astype(str) if country_label in ds.labels else pd.Series("", index=frame.index)
    years = frame.index.get_level_values("year")
    missing = []
    new = {}
    registry_updates = {}
    for var, cat in mapping.items():
        index_values = np.empty(len(frame))
        for j, (c, y) in enumerate(zip(countries, years)):
            v = idx.lookup(c, y, cat)
            if v is None:
                missing.append((c, int(y), cat))
                v = np.nan
            index_values[j] = v
        new[var] = frame[var] / index_values
        registry_updates[var] = dataclasses.replace(ds.registry[var], state=DEFLATED)
    if missing:
        uniq = sorted(set(missing))
        raise MissingIndexError(f"missing price index entries: {uniq[:10]}"
                                + (" ..." if len(uniq) > 10 else ""), missing=len(uniq))
    return ds.with_columns(new, registry_updates)


# -- logs and lags -------------------------------------------------------


def log_transform(ds: PanelDataset, variables, *, rename: Mapping[str, str] | None = None,
                  on_nonpositive: str = "error") -> PanelDataset:
    """Natural log of the listed variables.

    Parameters
    ----------
    variables : iterable of str
    rename : mapping, optional
        Store the log of ``v`` under ``rename[v]`` and keep the original
        column; without it the column is replaced.
    on_nonpositive : {"error", "drop"}
        ``"drop"`` removes observations holding a zero or negative value in
        any listed variable and records the count in the report.
    """
    if on_nonpositive not in ("error", "drop"):
        raise PanelError(f"on_nonpositive must be 'error' or 'drop', got {on_nonpositive!r}")
    variables = list(variables)
    rename = dict(rename or {})
    frame = ds._frame
    for var in variables:
        if var not in ds:
            raise PanelError(f"variable {var!r} not in dataset")
        if ds.state(var) == LOGGED:
            raise TransformStateError(f"variable {var!r} is already logged", variable=var)
    bad_rows = pd.Series(False, index=frame.index)
    report = Report(list(ds.report.issues), dict(ds.report.dropped))
    for var in variables:
        bad = frame[var] <= 0
        if bad.any():
            if on_nonpositive == "error":
                unit, year = bad[bad].index[0]
                raise NonPositiveValueError(
                    f"cannot log non-positive value {frame.at[(unit, year), var]} of {var!r} "
                    f"for unit {unit!r}, year {year}", unit=unit, year=int(year), variable=var)
            for unit, year in bad[bad].index:
                report.add(None, unit, int(year), var, float(frame.at[(unit, year), var]),
                           "non-positive value; observation dropped before log")
            bad_rows |= bad
    report.count_dropped("nonpositive_log", int(bad_rows.sum()))
    kept = frame[~bad_rows].copy()
    registry = dict(ds.registry)
    for var in variables:
        target = rename.get(var, var)
        kept[target] = np.log(kept[var])
        registry[target] = dataclasses.replace(ds.registry[var], state=LOGGED)
    return PanelDataset(kept, registry, labels=ds.labels, report=report)


def lag_name(var: str, k: int) -> str:
    return f"{var}_lag_{k}"


def lag(ds: PanelDataset, var: str, k: int = 1, name: str | None = None) -> PanelDataset:
    """Add ``var`` lagged ``k`` calendar years as a new column.

    The lag at ``(i, t)`` is the value at ``(i, t - k)`` when that year is
    present for unit ``i``; across a gap it is missing.
    """
    if k < 1:
        raise PanelError(f"lag order must be >= 1, got {k}")
    s = ds.column(var)
    idx = s.index
    shifted_index = pd.MultiIndex.from_arrays(
        [idx.get_level_values("unit_id"), idx.get_level_values("year") - k], names=idx.names)
    lagged = pd.Series(s.reindex(shifted_index).to_numpy(), index=idx)
    return ds.with_columns({name or lag_name(var, k): lagged}, {name or lag_name(var, k): ds.registry[var]})


def with_lags(ds: PanelDataset, variables, k: int = 1) -> PanelDataset:
    for var in variables:
        ds = lag(ds, var, k)
    return ds
