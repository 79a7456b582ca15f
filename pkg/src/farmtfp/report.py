"""Table rendering: CSV plus aligned text, three decimals throughout."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pandas as pd

DECIMALS = 3
STARS_PRODUCTION = ((0.001, "***"), (0.01, "**"), (0.05, "*"))
STARS_IMPACT = ((0.01, "***"), (0.05, "**"), (0.1, "*"))
LEGENDS = {
    STARS_PRODUCTION: "* p<0.05; ** p<0.01; *** p<0.001",
    STARS_IMPACT: "* p<0.1; ** p<0.05; *** p<0.01",
}

PRETTY = {"y_lag_1": "y_(t-1)", "TFP_lag_1": "TFP_(t-1)", "_cons": "Constant",
          "EconomicSize": "Economic size", "RDP_Other": "RDPa others (x1000)",
          "RDP_inv": "RDP inv (x1000)"}
SUBSIDY_LABELS = {"CDP", "DDP", "AES", "LFA", "RDP_Other", "RDP_inv"}


def fmt(x, decimals: int = DECIMALS) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return ""
    s = f"{float(x):.{decimals}f}"
    return "0." + "0" * decimals if s.lstrip("-") == "0." + "0" * decimals else s


def parse(cell: str) -> float:
    cell = cell.strip().rstrip("%")
    return float(cell) if cell else math.nan


def pct(x, decimals: int = 2) -> str:
    return "" if x is None or not math.isfinite(x) else f"{100 * x:.{decimals}f}%"


def stars(p, legend=STARS_PRODUCTION) -> str:
    if p is None or not math.isfinite(p):
        return ""
    for cut, mark in legend:
        if p < cut:
            return mark
    return ""


def coef_cell(b, se, p=None, legend=STARS_PRODUCTION) -> str:
    if b is None or not math.isfinite(b):
        return ""
    return f"{fmt(b)}{stars(p, legend)} ({fmt(se)})"


def pretty(label: str) -> str:
    if label in PRETTY:
        return PRETTY[label]
    if label.endswith("_lag_1"):
        return f"{label[:-6]}_(t-1)"
    if label in SUBSIDY_LABELS:
        return f"{label} (x1000)"
    return label


def render_text(table: pd.DataFrame, title: str = "", note: str = "") -> str:
    """Aligned text: first column left, others right."""
    cols = [str(c) for c in table.columns]
    rows = [[("" if v is None else str(v)) for v in r] for r in table.itertuples(index=False)]
    widths = [max([len(c)] + [len(r[j]) for r in rows]) for j, c in enumerate(cols)]

    def line(cells):
        out = [cells[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
        return "  ".join(out).rstrip()

    body = [line(cols), "-" * (sum(widths) + 2 * (len(widths) - 1))] + [line(r) for r in rows]
    parts = ([title] if title else []) + body + ([note] if note else [])
    return "\n".join(parts) + "\n"


def write_table(table: pd.DataFrame, directory, name: str, title: str = "", note: str = "") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv = directory / f"{name}.csv"
    txt = directory / f"{name}.txt"
    table.to_csv(csv, index=False, lineterminator="\n")
    txt.write_text(render_text(table, title, note), encoding="utf-8")
    return [csv, txt]


# -- table builders -------------------------------------------------------


def _p(d, key):
    t = d.get(key) or {}
    return t.get("p_value") if t.get("applicable", True) else None


def _stat(d, key):
    t = d.get(key) or {}
    return t.get("statistic") if t.get("applicable", True) else None


def estimation_table(fits: dict, legend, order=None) -> pd.DataFrame:
    """Coefficient rows plus the test battery, one column per fit.

    ``fits`` maps a column name to a dict with ``labels``, ``params``,
    ``se``, ``pvalues``, ``diagnostics``, ``nobs``, ``instruments`` and
    ``units``.
    """
    labels = []
    for f in fits.values():
        for lab in f["labels"]:
            if lab.startswith("yr") or lab in labels:
                continue
            labels.append(lab)
    if order:
        labels = [l for l in order if l in labels] + [l for l in labels if l not in order]
    rows = []
    for lab in labels:
        row = {"Variable": pretty(lab)}
        for col, f in fits.items():
            if lab in f["labels"]:
                j = f["labels"].index(lab)
                row[col] = coef_cell(f["params"][j], f["se"][j], f["pvalues"][j], legend)
            else:
                row[col] = ""
        rows.append(row)
    extra = [("Sargan test p-value", lambda d: fmt(_p(d, "sargan"))),
             ("AR(1) p-value", lambda d: fmt(_p(d, "ar1"))),
             ("AR(2) p-value", lambda d: fmt(_p(d, "ar2"))),
             ("Wald (coefficients)", lambda d: fmt(_stat(d, "wald_coefficients"))),
             ("Wald (time dummies)", lambda d: fmt(_stat(d, "wald_time")))]
    for name, get in extra:
        rows.append({"Variable": name, **{c: get(f["diagnostics"]) for c, f in fits.items()}})
    rows.append({"Variable": "Observations", **{c: str(f["nobs"]) for c, f in fits.items()}})
    rows.append({"Variable": "Instruments", **{c: str(f["instruments"]) for c, f in fits.items()}})
    rows.append({"Variable": "Farms", **{c: str(f["units"]) for c, f in fits.items()}})
    return pd.DataFrame(rows, columns=["Variable", *fits])


def md_table(md: dict) -> pd.DataFrame:
    """Structural elasticities per country."""
    rows = []
    for country, r in md.items():
        row = {"Country": country}
        for lab, b, s in zip(r["theta_labels"], r["theta"], r["se"]):
            row[lab] = f"{fmt(b)} ({fmt(s)})"
        row["distance"] = fmt(r["distance"])
        rows.append(row)
    return pd.DataFrame(rows)


def tfp_means_table(means: pd.DataFrame) -> pd.DataFrame:
    wide = means.pivot(index="year", columns="country", values="mean").sort_index()
    out = pd.DataFrame({"Year": wide.index.astype(str)})
    for c in wide.columns:
        out[c] = [fmt(v) for v in wide[c]]
    return out


def variation_text_table(var: pd.DataFrame, country: str) -> pd.DataFrame:
    return pd.DataFrame({
        "Country": country, "Year": var["year"].astype(str), "Mean": [fmt(v) for v in var["mean"]],
        "Delta": [fmt(v) for v in var["delta"]], "%": [pct(v) for v in var["percent"]],
        "Cumulated": [fmt(v) for v in var["cumulated"]],
    })


def arrow_table(effects: pd.DataFrame) -> pd.DataFrame:
    from .impact import ARROWS

    e = effects.copy()
    e["column"] = e["country"].astype(str) + " " + e["group"].astype(str)
    e["arrow"] = e["direction"].map(ARROWS)
    regs = list(dict.fromkeys(e["regressor"]))
    cols = list(dict.fromkeys(e["column"]))
    out = pd.DataFrame({"Variable": [pretty(r) for r in regs]})
    for c in cols:
        sub = e[e["column"] == c].set_index("regressor")["arrow"]
        out[c] = [sub.get(r, "") for r in regs]
    return out


__all__ = [
    "LEGENDS", "STARS_IMPACT", "STARS_PRODUCTION", "arrow_table", "coef_cell", "estimation_table",
    "fmt", "md_table", "parse", "pct", "pretty", "render_text", "stars", "tfp_means_table",
    "variation_text_table", "write_table",
]
