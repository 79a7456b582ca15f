"""
Analysis variables from FADN-style accountancy records.

Records are handled as a pandas frame whose columns carry the FADN
standard-result codes (``SE131``, ``SE441``, ...) plus ``unit_id``,
``year``, ``country``, ``region`` and ``farm_type``.  Single records can
be passed as :class:`AccountancyRecord` instances; functions then return
scalars.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from .exceptions import VariableError
from .panel import PanelDataset, Report, VariableInfo

#: field name -> FADN code / column header
FIELD_CODES = {
    "total_output": "SE131",
    "fixed_assets": "SE441",
    "agri_land_value": "ALNDAGR_CV_X",
    "total_uaa": "SE025",
    "rented_uaa": "SE030",
    "rent_paid": "SE375",
    "labour_hours": "SE011",
    "specific_costs": "SE281",
    "overheads": "SE336",
    "subsidies_excl_inv": "SE605",
    "subsidies_inv": "SE406",
    "sub_crops": "SE610",
    "sub_livestock": "SE615",
    "ddp": "SE630",
    "rdp_total": "SE624",
    "aes": "SE621",
    "lfa": "SE622",
    "standard_output": "SO",
}
LABEL_FIELDS = ("region", "farm_type")

#: constructed variable -> unit of measure
OUTPUT_UNITS = {
    "Y": "currency", "K": "currency", "N": "hours", "L": "currency", "M": "currency",
    "G": "currency", "CDP": "currency", "DDP": "currency", "RDPa": "currency",
    "AES": "currency", "LFA": "currency", "RDP_Other": "currency", "RDP_inv": "currency",
    "EconomicSize": "thousand currency",
}


@dataclass(frozen=True)
class AccountancyRecord:
    unit_id: object = None
    year: int | None = None
    country: str = ""
    region: str = ""
    farm_type: str = ""
    total_output: float = np.nan
    fixed_assets: float = np.nan
    agri_land_value: float = 0.0
    total_uaa: float = np.nan
    rented_uaa: float = 0.0
    rent_paid: float = 0.0
    labour_hours: float = np.nan
    specific_costs: float = 0.0
    overheads: float = 0.0
    subsidies_excl_inv: float = 0.0
    subsidies_inv: float = 0.0
    sub_crops: float = 0.0
    sub_livestock: float = 0.0
    ddp: float = 0.0
    rdp_total: float = 0.0
    aes: float = 0.0
    lfa: float = 0.0
    standard_output: float = np.nan

    def __post_init__(self):
        for name in ("total_uaa", "rented_uaa", "labour_hours"):
            v = getattr(self, name)
            if v < 0:
                raise VariableError(f"{name} must be non-negative, got {v}")
        if self.rented_uaa > self.total_uaa:
            raise VariableError("rented UAA exceeds total UAA",
                                rented_uaa=self.rented_uaa, total_uaa=self.total_uaa)

    def as_row(self) -> dict:
        row = {"unit_id": self.unit_id, "year": self.year, "country": self.country,
               "region": self.region, "farm_type": self.farm_type}
        for name, code in FIELD_CODES.items():
            row[code] = getattr(self, name)
        return row


def records_frame(records) -> pd.DataFrame:
    """Accept an AccountancyRecord, a sequence of them, or a frame."""
    if isinstance(records, pd.DataFrame):
        return records
    if isinstance(records, AccountancyRecord):
        records = [records]
    return pd.DataFrame([r.as_row() for r in records])


def _scalar_or_series(records, result: pd.Series):
    if isinstance(records, AccountancyRecord):
        return float(result.iloc[0])
    return result


def rorr_farm(rec):
    """Farm-level rate of return of rent.

    Rent per rented hectare divided by fixed assets per held hectare;
    missing when the farm rents no land, holds no land or reports no
    fixed assets.
    """
    f = records_frame(rec)
    rented = f["SE030"].astype(float)
    held = f["SE025"].astype(float) - rented
    assets = f["SE441"].astype(float)
    ok = (rented > 0) & (held > 0) & (assets != 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rate = (f["SE375"] / rented) / (assets / held)
    return _scalar_or_series(rec, rate.where(ok))


def rorr_aggregate(records, keys=LABEL_FIELDS) -> dict[tuple, float]:
    """Median farm-level rate per ``(region, farm_type)`` group.

    Groups without any non-missing rate are absent from the result.
    """
    f = records_frame(records)
    rates = rorr_farm(f) if not isinstance(records, AccountancyRecord) else pd.Series([rorr_farm(records)])
    table = pd.DataFrame({k: f[k].astype(str).to_numpy() for k in keys})
    table["rate"] = np.asarray(rates, dtype=float)
    med = table.dropna(subset=["rate"]).groupby(list(keys))["rate"].median()
    out = {}
    for key, value in med.items():
        key = key if isinstance(key, tuple) else (key,)
        if not (np.isfinite(value) and value > 0):
            raise VariableError(f"regional rate of return must be positive, got {value}", group=key)
        out[key] = float(value)
    return out


def land_value(rec, rorr: Mapping[tuple, float]):
    """Capitalized rent plus owned agricultural land value.

    Rent is capitalized as a perpetuity at the group's aggregated rate.
    """
    f = records_frame(rec)
    rent = f["SE375"].astype(float)
    keys = list(zip(f["region"].astype(str), f["farm_type"].astype(str)))
    rates = np.array([rorr.get(k, np.nan) for k in keys], dtype=float)
    need = (rent > 0).to_numpy() & np.isnan(rates)
    if need.any():
        groups = sorted({keys[i] for i in np.flatnonzero(need)})
        raise VariableError(f"no regional rate of return for group(s) {groups} with positive rent",
                            groups=groups)
    with np.errstate(divide="ignore", invalid="ignore"):
        capital = np.where(rent.to_numpy() > 0, rent.to_numpy() / rates, np.where(rent.isna(), np.nan, 0.0))
    value = pd.Series(capital, index=f.index) + f["ALNDAGR_CV_X"].astype(float)
    return _scalar_or_series(rec, value)


def construct_variables(records, rorr: Mapping[tuple, float] | None = None) -> PanelDataset:
    """Build Y, K, N, L, M, G, the subsidy categories and economic size.

    ``rorr`` defaults to :func:`rorr_aggregate` over the same records.
    A negative K (land value above total fixed assets) is reported and set
    to missing.
    """
    f = records_frame(records).reset_index(drop=True)
    if rorr is None:
        rorr = rorr_aggregate(f)
    col = lambda code: f[code].astype(float)
    out = pd.DataFrame({"unit_id": f["unit_id"], "year": f["year"].astype(int)})
    out["Y"] = col("SE131")
    out["K"] = col("SE441") - col("ALNDAGR_CV_X")
    out["N"] = col("SE011")
    out["L"] = land_value(f, rorr).to_numpy()
    out["M"] = col("SE281") + col("SE336")
    out["G"] = col("SE605") + col("SE406")
    out["CDP"] = col("SE610") + col("SE615")
    out["DDP"] = col("SE630")
    out["RDPa"] = col("SE624") - col("SE406")
    out["AES"] = col("SE621")
    out["LFA"] = col("SE622")
    out["RDP_Other"] = out["RDPa"] - out["AES"] - out["LFA"]
    out["RDP_inv"] = col("SE406")
    out["EconomicSize"] = col("SO") / 1000.0

    report = Report()
    neg = out["K"] < 0
    for i in np.flatnonzero(neg.to_numpy()):
        report.add(int(i), out.at[i, "unit_id"], int(out.at[i, "year"]), "K", float(out.at[i, "K"]),
                   "negative capital after subtracting land value; set to missing")
    out.loc[neg, "K"] = np.nan

    labels = []
    for name in ("country", *LABEL_FIELDS):
        if name in f.columns:
            out[name] = f[name].astype(str)
            labels.append(name)
    registry = {k: VariableInfo(u) for k, u in OUTPUT_UNITS.items()}
    return PanelDataset(out, registry, labels=labels, report=report)


__all__ = [
    "AccountancyRecord", "FIELD_CODES", "construct_variables", "land_value",
    "records_frame", "rorr_aggregate", "rorr_farm",
]
