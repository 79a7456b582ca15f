"""
Command-line pipeline.

Each command reads a YAML config, checks its predecessors' manifests,
writes its artifacts under ``<out>/<command>/`` and records a
``manifest.json`` with the config hash, input hashes, package version and
output hashes.  Outputs carry no timestamps, so reruns with the same
config and seed are byte-identical.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .acf import AcfConfig, estimate_acf, classify_groups
from .diagnostics import TestResult
from .exceptions import FarmTfpError, NothingToReportError, PipelineError, StaleArtifactError
from .fadn import FIELD_CODES, LABEL_FIELDS, construct_variables
from .impact import ALL, ImpactSpec, estimate_impact, impact_dataset, run_grouped, summarize_effects
from .panel import PanelDataset, PriceIndexTable, Schema, deflate, load_panel, log_transform
from .production import (MdResult, PiVector, build_production_spec, compute_tfp, estimate_pi,
                         minimum_distance, tfp_variation_table)
from . import report as rpt
from .synthetic import DEFLATION, DgpConfig, export_accountancy, generate, monte_carlo, price_index_frame

STEPS = ("simulate", "ingest", "construct", "step1", "step2", "group", "step3", "report")
PREDECESSORS = {
    "ingest": (), "construct": ("ingest",), "step1": ("construct",), "step2": ("construct", "step1"),
    "group": ("construct", "step2"), "step3": ("construct", "step2", "group"), "simulate": (),
}
LOG_NAMES = {"Y": "y", "K": "k", "L": "l", "N": "n", "M": "m", "G": "g"}
LABELS = ("country", *LABEL_FIELDS)


# -- config ---------------------------------------------------------------


DEFAULTS = {
    "output": "out",
    "seed": 0,
    "countries": None,
    "input": {"records": None, "price_index": None, "schema": None},
    "deflation": dict(DEFLATION),
    "base_year": None,
    "instruments": {"collapsed": True, "overrides": {}},
    "tfp": {"partial_out_years": False},
    "acf": {},
    "impact": {"use_log": False, "classes": {}, "overrides": {}},
    "significance": 0.05,
    "simulate": {"countries": ["DE"], "N": 300, "T": 8, "dgp": {}, "monte_carlo": None},
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class PipelineConfig:
    data: dict
    root: Path
    path: Path | None = None

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise PipelineError(f"config file not found: {path}")
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        if not isinstance(raw, dict):
            raise PipelineError("config must be a mapping")
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        data = _merge(DEFAULTS, raw)
        data = _merge(data, overrides or {})
        return cls(data, path.parent.resolve(), path)

    def resolve(self, p) -> Path | None:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    @property
    def out(self) -> Path:
        return self.resolve(self.data["output"])

    def step_dir(self, step) -> Path:
        return self.out / step

    @property
    def hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def __getitem__(self, key):
        return self.data[key]


# -- manifests ------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(cfg: PipelineConfig, step: str) -> dict:
    path = cfg.step_dir(step) / "manifest.json"
    if not path.exists():
        raise PipelineError(f"no {step} artifacts in {cfg.step_dir(step)}; run '{step}' first", step=step)
    return json.loads(path.read_text(encoding="utf-8"))


def verify_step(cfg: PipelineConfig, step: str) -> dict:
    """Check every recorded output of ``step`` still has its recorded hash."""
    man = read_manifest(cfg, step)
    for name, digest in man["outputs"].items():
        f = cfg.step_dir(step) / name
        if not f.exists():
            raise StaleArtifactError(f"{step} output {name} is missing; re-run '{step}'", step=step, file=name)
        if sha256(f) != digest:
            raise StaleArtifactError(
                f"{step} output {name} changed after it was written (hash mismatch); re-run '{step}' "
                f"and the commands after it", step=step, file=name)
    return man


def write_manifest(cfg: PipelineConfig, step: str, outputs, inputs=()) -> Path:
    d = cfg.step_dir(step)
    man = {
        "step": step,
        "version": __version__,
        "config_sha256": cfg.hash,
        "seed": cfg["seed"],
        "inputs": {str(Path(p).relative_to(cfg.out)) if _inside(p, cfg.out) else str(p): sha256(p)
                   for p in sorted(map(str, inputs))},
        "outputs": {Path(p).name: sha256(p) for p in sorted(map(str, outputs))},
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _inside(p, root):
    try:
        Path(p).resolve().relative_to(Path(root).resolve())
        return True
    except ValueError:
        return False


def _check_predecessors(cfg, step):
    for pre in PREDECESSORS.get(step, ()):
        verify_step(cfg, pre)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n",
                          encoding="utf-8")
    return Path(path)


def _jsonable(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)}")


def _clean(x):
    """Floats with NaN mapped to None for JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def _write_csv(frame, path):
    frame.to_csv(path, index=False, lineterminator="\n")
    return Path(path)


def _tests(diag: dict[str, TestResult]) -> dict:
    return {k: {"name": v.name, "statistic": v.statistic, "dof": v.dof, "p_value": v.p_value,
                "applicable": v.applicable} for k, v in diag.items()}


# -- panel IO -------------------------------------------------------------


def read_panel(path) -> PanelDataset:
    frame = pd.read_csv(path, dtype={"unit_id": str, **{c: str for c in LABELS}}, keep_default_na=True)
    labels = [c for c in LABELS if c in frame.columns]
    for c in labels:
        frame[c] = frame[c].fillna("")
    return PanelDataset(frame, labels=labels)


def _countries(cfg, ds: PanelDataset) -> list[str]:
    present = sorted(ds.frame["country"].astype(str).unique()) if "country" in ds.labels else ["ALL"]
    wanted = cfg["countries"]
    if wanted:
        missing = [c for c in wanted if c not in present]
        if missing:
            raise PipelineError(f"countries not in data: {missing}", present=present)
        return [c for c in present if c in wanted]
    return present


def _country_slice(ds, country):
    if "country" not in ds.labels:
        return ds
    return ds.select(ds.frame["country"].astype(str) == country)


# -- commands -------------------------------------------------------------


def cmd_simulate(cfg: PipelineConfig) -> list[Path]:
    """Synthetic accountancy records and price indices (plus optional Monte Carlo)."""
    sim = cfg["simulate"]
    d = cfg.step_dir("simulate")
    d.mkdir(parents=True, exist_ok=True)
    seed = int(cfg["seed"])
    records, truth = [], {}
    T = int(sim["T"])
    countries = list(sim["countries"])
    years = list(range(2009, 2009 + T))
    prices = price_index_frame(countries, years, seed=seed)
    for j, c in enumerate(countries):
        dgp = DgpConfig(N=int(sim["N"]), T=T, seed=seed + 1000 * j, **(sim.get("dgp") or {}))
        panel = generate(dgp)
        rec, _ = export_accountancy(panel, country=c, prices=prices, subsidy_seed=seed + 1000 * j)
        rec["unit_id"] = c + rec["unit_id"]
        records.append(rec)
        truth[c] = dgp.truth
    outputs = [_write_csv(pd.concat(records, ignore_index=True), d / "records.csv"),
               _write_csv(prices, d / "prices.csv"),
               _write_json(d / "truth.json", truth)]
    mc = sim.get("monte_carlo")
    if mc and int(mc.get("replications", 0)) > 0:
        dgp = DgpConfig(seed=seed, **{k: v for k, v in mc.items() if k not in ("replications", "pipeline")})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            summ = monte_carlo(dgp, int(mc["replications"]), mc.get("pipeline", "sysgmm"),
                               level=float(cfg["significance"]))
        outputs.append(_write_csv(summ.table, d / "monte_carlo.csv"))
        rej = summ.rejection.rename_axis("test").reset_index(name="rejection_rate")
        outputs.append(_write_csv(rej, d / "monte_carlo_tests.csv"))
    outputs.append(write_manifest(cfg, "simulate", outputs))
    return outputs


def cmd_ingest(cfg: PipelineConfig) -> list[Path]:
    src = cfg.resolve(cfg["input"]["records"])
    if src is None or not src.exists():
        raise PipelineError(f"records file not found: {src}")
    schema_path = cfg.resolve(cfg["input"].get("schema"))
    if schema_path is not None:
        schema = Schema.load(schema_path)
    else:
        schema = Schema(variables={c: c for c in FIELD_CODES.values()},
                        labels={c: c for c in LABELS})
    ds = load_panel(src, schema)
    d = cfg.step_dir("ingest")
    d.mkdir(parents=True, exist_ok=True)
    frame = ds.frame.reset_index()
    outputs = [_write_csv(frame, d / "records.csv"), _write_csv(ds.report.to_frame(), d / "issues.csv")]
    outputs.append(write_manifest(cfg, "ingest", outputs, inputs=[src]))
    return outputs


def cmd_construct(cfg: PipelineConfig) -> list[Path]:
    _check_predecessors(cfg, "construct")
    src = cfg.step_dir("ingest") / "records.csv"
    records = pd.read_csv(src, dtype={"unit_id": str, **{c: str for c in LABELS}})
    for c in LABELS:
        if c in records.columns:
            records[c] = records[c].fillna("")
    ds = construct_variables(records)
    price_path = cfg.resolve(cfg["input"]["price_index"])
    inputs = [src]
    if price_path is not None:
        if not price_path.exists():
            raise PipelineError(f"price index file not found: {price_path}")
        idx = PriceIndexTable.load(price_path)
        if cfg["base_year"] is not None:
            idx = idx.rebased(int(cfg["base_year"]))
        ds = deflate(ds, idx, cfg["deflation"])
        inputs.append(price_path)
    ds = log_transform(ds, ["Y", "K", "L", "N", "M"], rename={k: LOG_NAMES[k] for k in "YKLNM"})
    ds = log_transform(ds, ["G"], rename={"G": "g"}, on_nonpositive="drop")
    d = cfg.step_dir("construct")
    d.mkdir(parents=True, exist_ok=True)
    outputs = [_write_csv(ds.frame.reset_index(), d / "panel.csv"),
               _write_csv(ds.report.to_frame(), d / "issues.csv")]
    outputs.append(write_manifest(cfg, "construct", outputs, inputs=inputs))
    return outputs


def cmd_step1(cfg: PipelineConfig) -> list[Path]:
    _check_predecessors(cfg, "step1")
    src = cfg.step_dir("construct") / "panel.csv"
    ds = read_panel(src)
    icfg = cfg["instruments"]
    out, rows = {}, []
    for c in _countries(cfg, ds):
        sub = _country_slice(ds, c)
        spec = build_production_spec(sub, collapsed=bool(icfg.get("collapsed", True)),
                                     overrides=icfg.get("overrides") or None)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pi = estimate_pi(sub, spec)
        fit = pi.fit
        out[c] = _clean({
            "labels": pi.labels, "values": pi.values.tolist(), "cov": pi.cov.tolist(),
            "factors": list(pi.factors), "output": pi.output,
            "se": fit.std_errors.tolist(), "diagnostics": _tests(pi.diagnostics),
            "nobs": fit.nobs, "instruments": fit.instrument_count, "units": fit.unit_count,
            "notes": fit.notes + fit.first_step.notes + sorted({str(w.message) for w in caught}),
        })
        for lab, b, s in zip(pi.labels, pi.values, fit.std_errors):
            rows.append({"country": c, "variable": lab, "coef": b, "se": s})
    d = cfg.step_dir("step1")
    d.mkdir(parents=True, exist_ok=True)
    outputs = [_write_json(d / "pi.json", out), _write_csv(pd.DataFrame(rows), d / "coefficients.csv")]
    outputs.append(write_manifest(cfg, "step1", outputs, inputs=[src]))
    return outputs


def _pi_from_json(r) -> PiVector:
    return PiVector(np.array(r["values"], float), list(r["labels"]), np.array(r["cov"], float),
                    tuple(r["factors"]), r["output"])


def cmd_step2(cfg: PipelineConfig) -> list[Path]:
    _check_predecessors(cfg, "step2")
    pi_path = cfg.step_dir("step1") / "pi.json"
    src = cfg.step_dir("construct") / "panel.csv"
    pis = json.loads(pi_path.read_text(encoding="utf-8"))
    ds = read_panel(src)
    md_out, tfp_frames, means, variation = {}, [], [], []
    for c, r in pis.items():
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            md = minimum_distance(_pi_from_json(r))
        md_out[c] = _clean({"beta": md.beta, "rho": md.rho, "distance": md.distance,
                            "theta_labels": md.theta_labels, "theta": md.theta.tolist(),
                            "se": list(md.se.values()), "vcov_theta": md.vcov_theta.tolist(),
                            "warnings": md.warnings})
        tfp = compute_tfp(_country_slice(ds, c), md,
                          partial_out_years=bool(cfg["tfp"].get("partial_out_years", False)))
        t = tfp.values.reset_index()[["unit_id", "year", "tfp"]]
        t.insert(2, "country", c)
        tfp_frames.append(t)
        m = tfp.means.copy()
        m["country"] = c
        means.append(m)
        if len(m) >= 2:
            v = tfp_variation_table(pd.Series(m["mean"].to_numpy(), index=m["year"].to_numpy()))
            v.insert(0, "country", c)
            variation.append(v)
    d = cfg.step_dir("step2")
    d.mkdir(parents=True, exist_ok=True)
    outputs = [_write_json(d / "md.json", md_out),
               _write_csv(pd.concat(tfp_frames, ignore_index=True), d / "tfp.csv"),
               _write_csv(pd.concat(means, ignore_index=True), d / "tfp_means.csv")]
    if variation:
        outputs.append(_write_csv(pd.concat(variation, ignore_index=True), d / "tfp_variation.csv"))
    outputs.append(write_manifest(cfg, "step2", outputs, inputs=[src, pi_path]))
    return outputs


def cmd_group(cfg: PipelineConfig) -> list[Path]:
    _check_predecessors(cfg, "group")
    src = cfg.step_dir("construct") / "panel.csv"
    md_path = cfg.step_dir("step2") / "md.json"
    ds = read_panel(src)
    mds = json.loads(md_path.read_text(encoding="utf-8"))
    acfg = AcfConfig(**{"seed": int(cfg["seed"]), **(cfg["acf"] or {})})
    groups, fits = [], {}
    for c in _countries(cfg, ds):
        sub = _country_slice(ds, c)
        start = mds[c]["beta"] if c in mds else None
        if start is not None:
            start = {f: start[f] for f in acfg.factors}
        fit = estimate_acf(sub, acfg, start=start)
        fits[c] = _clean({"beta": fit.beta, "rho": fit.rho, "objective": fit.objective_value,
                          "first_stage_r2": fit.first_stage.r2, "pairs": fit.pairs,
                          "trace": [{"start": t["start"], "Q": t["Q"], "converged": t["converged"],
                                     "beta": list(map(float, t["beta"]))} for t in fit.trace]})
        countries = pd.Series(c, index=sub.units)
        groups.append(classify_groups(fit.tfp_acf, countries))
    d = cfg.step_dir("group")
    d.mkdir(parents=True, exist_ok=True)
    outputs = [_write_csv(pd.concat(groups, ignore_index=True), d / "groups.csv"),
               _write_json(d / "acf.json", fits)]
    outputs.append(write_manifest(cfg, "group", outputs, inputs=[src, md_path]))
    return outputs


def _fit_record(res, level) -> dict:
    fit = res.fit
    se = fit.std_errors
    from .impact import classify_effect
    pvals = [classify_effect(float(b), float(s), level)[1] for b, s in zip(fit.params, se)]
    return _clean({"labels": fit.labels, "params": fit.params.tolist(), "se": se.tolist(),
                   "pvalues": pvals, "diagnostics": _tests(res.diagnostics), "nobs": fit.nobs,
                   "instruments": fit.instrument_count, "units": fit.unit_count,
                   "dropped": res.dropped})


def cmd_step3(cfg: PipelineConfig) -> list[Path]:
    _check_predecessors(cfg, "step3")
    src = cfg.step_dir("construct") / "panel.csv"
    tfp_path = cfg.step_dir("step2") / "tfp.csv"
    grp_path = cfg.step_dir("group") / "groups.csv"
    ds = read_panel(src)
    tfp = pd.read_csv(tfp_path, dtype={"unit_id": str, "country": str}).set_index(["unit_id", "year"])["tfp"]
    groups = pd.read_csv(grp_path, dtype={"unit_id": str, "country": str})
    level = float(cfg["significance"])
    ic = cfg["impact"]
    spec = ImpactSpec(use_log=bool(ic.get("use_log", False)), classes=dict(ic.get("classes") or {}),
                      overrides=dict(ic.get("overrides") or {}),
                      collapsed=bool(cfg["instruments"].get("collapsed", True)))
    records, errors, fits = {}, [], {}
    for c in _countries(cfg, ds):
        sub = _country_slice(ds, c)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = {ALL: estimate_impact(tfp, sub, spec)}
                res.update(run_grouped(tfp, sub, groups[groups["country"] == c], spec))
        except FarmTfpError as exc:
            errors.append({"country": c, "group": ALL, "error": str(exc)})
            continue
        for g, r in res.items():
            if isinstance(r, Exception):
                errors.append({"country": c, "group": g, "error": str(r)})
                continue
            records[f"{c} {g}"] = _fit_record(r, level)
            fits[(c, g)] = r
    summary = summarize_effects(fits, level)
    d = cfg.step_dir("step3")
    d.mkdir(parents=True, exist_ok=True)
    outputs = [_write_json(d / "impact.json", records),
               _write_csv(summary.table, d / "effects.csv"),
               _write_csv(pd.DataFrame(errors, columns=["country", "group", "error"]), d / "errors.csv")]
    outputs.append(write_manifest(cfg, "step3", outputs, inputs=[src, tfp_path, grp_path]))
    return outputs


def cmd_report(cfg: PipelineConfig) -> list[Path]:
    d = cfg.step_dir("report")
    produced, inputs = [], []

    def available(step):
        if not (cfg.step_dir(step) / "manifest.json").exists():
            return False
        verify_step(cfg, step)
        return True

    tables = []
    if available("step1"):
        p = cfg.step_dir("step1") / "pi.json"
        pis = json.loads(p.read_text(encoding="utf-8"))
        fits = {}
        for c, r in pis.items():
            from .diagnostics import norm_two_sided
            pv = [norm_two_sided(b / s) if s and s > 0 else None for b, s in zip(r["values"], r["se"])]
            fits[c] = {"labels": r["labels"], "params": r["values"], "se": r["se"], "pvalues": pv,
                       "diagnostics": r["diagnostics"], "nobs": r["nobs"], "instruments": r["instruments"],
                       "units": r["units"]}
        tables.append((rpt.estimation_table(fits, rpt.STARS_PRODUCTION), "table2_production",
                       "Unrestricted dynamic production function (two-step System GMM, corrected s.e.)",
                       rpt.LEGENDS[rpt.STARS_PRODUCTION]))
        inputs.append(p)
    if available("step2"):
        p = cfg.step_dir("step2") / "md.json"
        tables.append((rpt.md_table(json.loads(p.read_text(encoding="utf-8"))), "table2_structural",
                       "Common-factor restricted elasticities (minimum distance)", ""))
        pm = cfg.step_dir("step2") / "tfp_means.csv"
        means = pd.read_csv(pm, dtype={"country": str})
        tables.append((rpt.tfp_means_table(means), "table3_tfp_means", "Mean TFP by year", ""))
        parts = []
        for c in sorted(means["country"].unique()):
            m = means[means["country"] == c].sort_values("year")
            if len(m) >= 2:
                v = tfp_variation_table(pd.Series(m["mean"].to_numpy(), index=m["year"].to_numpy()))
                parts.append(rpt.variation_text_table(v, c))
        if parts:
            tables.append((pd.concat(parts, ignore_index=True), "tableA4_tfp_variation",
                           "TFP variation (first year = 1.000)", ""))
        inputs += [p, pm]
    if available("step3"):
        p = cfg.step_dir("step3") / "impact.json"
        recs = json.loads(p.read_text(encoding="utf-8"))
        rank = {ALL: 0, "Low": 1, "Medium": 2, "High": 3}
        recs = dict(sorted(recs.items(), key=lambda kv: (kv[0].rsplit(" ", 1)[0],
                                                         rank.get(kv[0].rsplit(" ", 1)[1], 9))))
        if recs:
            tables.append((rpt.estimation_table(recs, rpt.STARS_IMPACT), "table4_impact",
                           "Subsidy impact on TFP (two-step System GMM, corrected s.e.)",
                           rpt.LEGENDS[rpt.STARS_IMPACT]))
        pe = cfg.step_dir("step3") / "effects.csv"
        eff = pd.read_csv(pe, dtype={"country": str, "group": str})
        if not eff.empty:
            tables.append((rpt.arrow_table(eff), "table5_synthesis",
                           f"Direction of significant effects (level {cfg['significance']})",
                           "↑ positive  ↔ not significant  ↓ negative"))
        inputs += [p, pe]
    if not tables:
        raise NothingToReportError("nothing to report: no step1, step2 or step3 artifacts found",
                                   out=str(cfg.out))
    for table, name, title, note in tables:
        produced += rpt.write_table(table, d, name, title, note)
    produced.append(write_manifest(cfg, "report", produced, inputs=inputs))
    return produced


COMMANDS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "construct": cmd_construct, "step1": cmd_step1,
    "step2": cmd_step2, "group": cmd_group, "step3": cmd_step3, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="farmtfp", description="Farm TFP and subsidy impact pipeline")
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", required=True, help="YAML configuration file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("--country", action="append", help="restrict to a country code (repeatable)")
    p.add_argument("--collapse", choices=("on", "off"), help="collapsed instruments")
    p.add_argument("--level", type=float, help="significance level for effect directions")
    return p


def config_from_args(args) -> PipelineConfig:
    overrides: dict = {}
    if args.out:
        overrides["output"] = str(Path(args.out).resolve())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.country:
        overrides["countries"] = list(args.country)
    if args.collapse:
        overrides["instruments"] = {"collapsed": args.collapse == "on"}
    if args.level is not None:
        if not 0 < args.level < 1:
            raise PipelineError("--level must lie in (0, 1)")
        overrides["significance"] = args.level
    return PipelineConfig.load(args.config, overrides)


def run(command: str, cfg: PipelineConfig) -> list[Path]:
    return COMMANDS[command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        outputs = run(args.command, cfg)
    except FarmTfpError as exc:
        print(f"error [{exc.module}]: {exc}", file=sys.stderr)
        return 2
    for p in outputs:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
