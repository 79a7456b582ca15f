"""
Synthetic farm panels with known parameters.

Random numbers come from numpy's PCG64 generator.  Streams are split with
``SeedSequence(seed, spawn_key=...)``: key ``(0,)`` drives the common
(year-level) draws and key ``(1, i)`` drives every draw of unit ``i``, so
a unit's data do not depend on how many other units are generated or in
which order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .exceptions import FarmTfpError
from .panel import LOGGED, PanelDataset, VariableInfo

FACTORS = ("k", "l", "n", "m", "g")
IID, HETEROSKEDASTIC, MA1 = "iid", "heteroskedastic", "ma1"
_BURN = 40


class DgpError(FarmTfpError):
    module = "synthetic"


@dataclass(frozen=True)
class DgpConfig:
    """Common-factor production DGP.

    ``y = gamma_t + beta'x + eta + omega + eps`` with
    ``omega_t = rho omega_{t-1} + xi_t``.  State inputs (k, l) follow
    slow AR(1) processes with a response to last year's productivity;
    free inputs (n, m, g) add a second, oscillating AR(1) component
    (``cycle_persistence``) and respond to current productivity with
    ``endogeneity_strength``.  ``error_type`` shapes ``xi``: ``ma1``
    replaces it by an MA(1) process (``ma_theta``), ``heteroskedastic``
    scales it by a unit-specific factor.
    """

    N: int = 1000
    T: int = 10
    rho: float = 0.2
    beta: tuple[float, ...] = (0.3, 0.1, 0.2, 0.6, 0.05)
    fixed_effect_sd: float = 0.3
    tfp_shock_sd: float = 0.1
    measurement_sd: float = 0.0
    endogeneity_strength: float = 0.5
    error_type: str = IID
    seed: int = 0
    first_year: int = 2009
    input_persistence: float = 0.7
    input_shock_sd: float = 0.25
    cycle_persistence: float = -0.5
    cycle_shock_sd: float = 0.25
    input_level_sd: float = 0.8
    input_fe_loading: float = 0.5
    state_feedback: float = 0.3
    year_effect_sd: float = 0.05
    intercept: float = 2.0
    ma_theta: float = 0.6
    het_strength: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not abs(self.rho) < 1:
            raise DgpError("|rho| must be < 1", rho=self.rho)
        if len(self.beta) != len(FACTORS):
            raise DgpError(f"beta needs {len(FACTORS)} elasticities", beta=self.beta)
        for name in ("fixed_effect_sd", "tfp_shock_sd", "measurement_sd", "input_shock_sd",
                     "input_level_sd", "year_effect_sd"):
            if getattr(self, name) < 0:
                raise DgpError(f"{name} must be >= 0")
        if self.N < 2 or self.T < 4:
            raise DgpError("need N >= 2 and T >= 4", N=self.N, T=self.T)
        if self.error_type not in (IID, HETEROSKEDASTIC, MA1):
            raise DgpError(f"unknown error_type {self.error_type!r}")

    @property
    def truth(self) -> dict[str, float]:
        return {"rho": self.rho, **{f"beta_{f}": b for f, b in zip(FACTORS, self.beta)}}


@dataclass
class SyntheticPanel:
    dataset: PanelDataset
    truth: pd.DataFrame          # eta, omega, eps, gamma per (unit, year)
    config: object


def unit_rng(seed: int, unit: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, unit))))


def common_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))


def _unit_draws(seed, N, shape):
    """Standard normals of ``shape`` per unit, stacked on a leading axis."""
    out = np.empty((N, *shape))
    for i in range(N):
        out[i] = unit_rng(seed, i).standard_normal(shape)
    return out


def _stationary_ar(shocks, phi, sd):
    """AR(1) with stationary start; ``shocks`` is ``(N, S)`` standard normal."""
    N, S = shocks.shape
    out = np.empty((N, S))
    out[:, 0] = shocks[:, 0] * sd / math.sqrt(1 - phi ** 2)
    for t in range(1, S):
        out[:, t] = phi * out[:, t - 1] + sd * shocks[:, t]
    return out


def _panel_frame(cfg_N, T, first_year, prefix=""):
    unit = np.repeat([f"{prefix}{i:05d}" for i in range(cfg_N)], T)
    year = np.tile(np.arange(first_year, first_year + T), cfg_N)
    return unit, year


def generate(cfg: DgpConfig) -> SyntheticPanel:
    """Draw a panel from the common-factor production DGP.

    Observed variables ``y, k, l, n, m, g`` are logs.  The hidden truth
    holds ``eta``, ``omega``, ``eps`` and the year intercept ``gamma``,
    and ``y`` equals ``gamma + beta'x + eta + omega + eps`` exactly.
    """
    N, T = cfg.N, cfg.T
    S = T + _BURN
    # per unit: [eta, 5 input levels, heteroskedasticity, xi(S), eps(S), 5 x input shocks(S), ma(S),
    #            3 x cycle shocks(S)]
    width = 1 + 5 + 1 + S * 12
    z = _unit_draws(cfg.seed, N, (width,))
    eta = cfg.fixed_effect_sd * z[:, 0]
    levels = cfg.input_level_sd * z[:, 1:6]
    het = z[:, 6]
    pos = 7
    xi_raw = z[:, pos:pos + S]; pos += S
    eps_raw = z[:, pos:pos + S]; pos += S
    inp = z[:, pos:pos + 5 * S].reshape(N, 5, S); pos += 5 * S
    ma_raw = z[:, pos:pos + S]; pos += S
    cyc = z[:, pos:pos + 3 * S].reshape(N, 3, S)

    sd = cfg.tfp_shock_sd
    if cfg.error_type == MA1:
        th = cfg.ma_theta
        e = np.concatenate([ma_raw[:, :1], xi_raw], axis=1)
        xi = sd * (e[:, 1:] + th * e[:, :-1]) / math.sqrt(1 + th ** 2)
    elif cfg.error_type == HETEROSKEDASTIC:
        h = cfg.het_strength
        scale = np.exp(h * het - h ** 2)     # E[scale^2] = 1
        xi = sd * scale[:, None] * xi_raw
    else:
        xi = sd * xi_raw
    omega = np.empty((N, S))
    omega[:, 0] = xi[:, 0] / math.sqrt(1 - cfg.rho ** 2)
    for t in range(1, S):
        omega[:, t] = cfg.rho * omega[:, t - 1] + xi[:, t]

    x = {}
    for j, f in enumerate(FACTORS):
        ar = _stationary_ar(inp[:, j], cfg.input_persistence, cfg.input_shock_sd)
        base = levels[:, j:j + 1] + cfg.input_fe_loading * eta[:, None] + ar
        if f in ("k", "l"):
            fb = np.concatenate([np.zeros((N, 1)), omega[:, :-1]], axis=1)
            x[f] = base + cfg.state_feedback * fb
        else:
            c = _stationary_ar(cyc[:, j - 2], cfg.cycle_persistence, cfg.cycle_shock_sd)
            x[f] = base + c + cfg.endogeneity_strength * omega
        x[f] = x[f][:, _BURN:]
    omega = omega[:, _BURN:]
    eps = cfg.measurement_sd * eps_raw[:, _BURN:]
    gamma = cfg.intercept + cfg.year_effect_sd * common_rng(cfg.seed).standard_normal(T)

    y = gamma[None, :] + eta[:, None] + omega + eps
    for f, b in zip(FACTORS, cfg.beta):
        y = y + b * x[f]

    unit, year = _panel_frame(N, T, cfg.first_year)
    frame = pd.DataFrame({"unit_id": unit, "year": year, "y": y.ravel()})
    for f in FACTORS:
        frame[f] = x[f].ravel()
    registry = {v: VariableInfo("log", LOGGED) for v in ("y", *FACTORS)}
    truth = pd.DataFrame({"unit_id": unit, "year": year, "eta": np.repeat(eta, T),
                          "omega": omega.ravel(), "eps": eps.ravel(),
                          "gamma": np.tile(gamma, N)}).set_index(["unit_id", "year"])
    return SyntheticPanel(PanelDataset(frame, registry), truth, cfg)


# -- control-function timing DGP ------------------------------------------


@dataclass(frozen=True)
class AcfDgpConfig:
    """Production DGP satisfying control-function timing.

    No fixed effect.  k and l are set before the current productivity
    shock; n and g respond to current productivity plus own persistent
    noise; materials are strictly monotone in productivity given k, l and n
    (quadratic in n through ``proxy_curvature``), so productivity is a
    polynomial of degree at most 3 in the observed inputs when
    ``cubic == 0``.
    """

    N: int = 2000
    T: int = 10
    rho: float = 0.6
    beta: tuple[float, ...] = (0.3, 0.1, 0.2, 0.6, 0.05)
    tfp_shock_sd: float = 0.2
    measurement_sd: float = 0.05
    endogeneity_strength: float = 0.5
    cubic: float = 0.0
    proxy_curvature: float = 0.5
    seed: int = 0
    first_year: int = 2009
    input_persistence: float = 0.7
    input_shock_sd: float = 0.25
    input_level_sd: float = 0.8
    state_feedback: float = 0.3
    year_effect_sd: float = 0.05
    intercept: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not abs(self.rho) < 1:
            raise DgpError("|rho| must be < 1")
        if self.cubic < 0:
            raise DgpError("cubic coefficient must be >= 0 for monotone materials demand")

    @property
    def truth(self):
        return {f"beta_{f}": b for f, b in zip(FACTORS, self.beta)}


def _solve_monotone_cubic(w, c):
    """Real root u of ``u + c u^3 = w`` (c >= 0)."""
    if c == 0:
        return w.copy()
    p, q = 1.0 / c, -w / c
    disc = np.sqrt(q ** 2 / 4 + p ** 3 / 27)
    return np.cbrt(-q / 2 + disc) + np.cbrt(-q / 2 - disc)


def generate_acf(cfg: AcfDgpConfig) -> SyntheticPanel:
    N, T = cfg.N, cfg.T
    S = T + _BURN
    width = 5 + S * (2 + 5)
    z = _unit_draws(cfg.seed, N, (width,))
    levels = cfg.input_level_sd * z[:, :5]
    pos = 5
    xi = cfg.tfp_shock_sd * z[:, pos:pos + S]; pos += S
    eps_raw = z[:, pos:pos + S]; pos += S
    inp = z[:, pos:pos + 5 * S].reshape(N, 5, S)
    omega = np.empty((N, S))
    omega[:, 0] = xi[:, 0] / math.sqrt(1 - cfg.rho ** 2)
    for t in range(1, S):
        omega[:, t] = cfg.rho * omega[:, t - 1] + xi[:, t]
    prev = np.concatenate([np.zeros((N, 1)), omega[:, :-1]], axis=1)
    x = {}
    for j, f in enumerate(("k", "l", "n", "g")):
        jj = FACTORS.index(f)
        ar = _stationary_ar(inp[:, jj], cfg.input_persistence, cfg.input_shock_sd)
        base = levels[:, jj:jj + 1] + ar
        x[f] = base + (cfg.state_feedback * prev if f in ("k", "l") else cfg.endogeneity_strength * omega)
    # materials: omega = u + c u^3 with u = m - 0.5 k - 0.3 l - a n^2.  No unit-specific
    # term, so omega is an exact function of observed inputs; the curvature in n keeps
    # the proxy index from being a linear combination of the inputs.
    u = _solve_monotone_cubic(omega, cfg.cubic)
    x["m"] = 0.5 * x["k"] + 0.3 * x["l"] + cfg.proxy_curvature * x["n"] ** 2 + u
    for f in FACTORS:
        x[f] = x[f][:, _BURN:]
    omega = omega[:, _BURN:]
    eps = cfg.measurement_sd * eps_raw[:, _BURN:]
    gamma = cfg.intercept + cfg.year_effect_sd * common_rng(cfg.seed).standard_normal(T)
    y = gamma[None, :] + omega + eps
    for f, b in zip(FACTORS, cfg.beta):
        y = y + b * x[f]
    unit, year = _panel_frame(N, T, cfg.first_year)
    frame = pd.DataFrame({"unit_id": unit, "year": year, "y": y.ravel()})
    for f in FACTORS:
        frame[f] = x[f].ravel()
    registry = {v: VariableInfo("log", LOGGED) for v in ("y", *FACTORS)}
    truth = pd.DataFrame({"unit_id": unit, "year": year, "eta": 0.0, "omega": omega.ravel(),
                          "eps": eps.ravel(), "gamma": np.tile(gamma, N)}).set_index(["unit_id", "year"])
    return SyntheticPanel(PanelDataset(frame, registry), truth, cfg)


# -- subsidy impact DGP ---------------------------------------------------

SUBSIDIES = ("CDP", "DDP", "AES", "LFA", "RDP_Other", "RDP_inv")


@dataclass(frozen=True)
class ImpactDgpConfig:
    """Dynamic TFP-on-subsidies DGP (levels, currency units for subsidies).

    ``TFP_t = gamma_t + persistence*TFP_{t-1} + size_effect*size
    + sum_j effect_j * S_j / 1000 + (1 - persistence) eta + u_t``.
    Subsidies respond to the current shock ``u_t`` with
    ``endogeneity_strength`` (in thousands), so they are endogenous.
    """

    N: int = 2000
    T: int = 10
    persistence: float = 0.2
    size_effect: float = 0.001
    effects: tuple[float, ...] = (-0.002, 0.0, 0.0, 0.0, 0.0, 0.0)
    subsidy_mean: tuple[float, ...] = (10000.0, 20000.0, 4000.0, 3000.0, 2000.0, 1500.0)
    subsidy_sd: tuple[float, ...] = (4000.0, 6000.0, 2000.0, 1500.0, 1000.0, 800.0)
    subsidy_persistence: float = 0.6
    size_mean: float = 150.0
    size_sd: float = 60.0
    fixed_effect_sd: float = 0.1
    shock_sd: float = 0.05
    endogeneity_strength: float = 2000.0
    include_lfa: bool = True
    intercept: float = 0.8
    year_effect_sd: float = 0.02
    seed: int = 0
    first_year: int = 2009

    def __post_init__(self):
        for name in ("effects", "subsidy_mean", "subsidy_sd"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
            if len(getattr(self, name)) != len(SUBSIDIES):
                raise DgpError(f"{name} needs {len(SUBSIDIES)} entries")
        if not abs(self.persistence) < 1:
            raise DgpError("|persistence| must be < 1")

    @property
    def truth(self):
        out = {"TFP_lag_1": self.persistence, "EconomicSize": self.size_effect}
        out.update({s: e for s, e in zip(SUBSIDIES, self.effects)})
        if not self.include_lfa:
            out.pop("LFA")
        return out


def generate_impact(cfg: ImpactDgpConfig) -> SyntheticPanel:
    """Panel with columns ``TFP``, ``EconomicSize`` and the six subsidies."""
    N, T = cfg.N, cfg.T
    S = T + _BURN
    nsub = len(SUBSIDIES)
    width = 1 + 1 + nsub + S * (2 + nsub)
    z = _unit_draws(cfg.seed, N, (width,))
    eta = cfg.fixed_effect_sd * z[:, 0]
    size_level = z[:, 1]
    sub_level = z[:, 2:2 + nsub]
    pos = 2 + nsub
    u = cfg.shock_sd * z[:, pos:pos + S]; pos += S
    size_sh = z[:, pos:pos + S]; pos += S
    sub_sh = z[:, pos:pos + nsub * S].reshape(N, nsub, S)
    phi = cfg.subsidy_persistence
    size = cfg.size_mean + cfg.size_sd * (0.7 * size_level[:, None]
                                          + 0.7 * _stationary_ar(size_sh, 0.8, math.sqrt(1 - 0.8 ** 2)))
    size = np.abs(size)
    subs = {}
    for j, name in enumerate(SUBSIDIES):
        ar = _stationary_ar(sub_sh[:, j], phi, math.sqrt(1 - phi ** 2))
        val = cfg.subsidy_mean[j] + cfg.subsidy_sd[j] * (0.6 * sub_level[:, j:j + 1] + 0.8 * ar)
        val = val + cfg.endogeneity_strength * u / cfg.shock_sd * (cfg.subsidy_sd[j] / cfg.subsidy_sd[0])
        subs[name] = np.abs(val)
    if not cfg.include_lfa:
        subs["LFA"] = np.zeros((N, S))
    gamma_all = cfg.year_effect_sd * common_rng(cfg.seed).standard_normal(S)
    tfp = np.empty((N, S))
    drive = cfg.size_effect * size + sum(e * subs[s] / 1000.0 for s, e in zip(SUBSIDIES, cfg.effects))
    tfp[:, 0] = cfg.intercept + eta + drive[:, 0] / (1 - cfg.persistence)
    for t in range(1, S):
        tfp[:, t] = (cfg.intercept * (1 - cfg.persistence) + gamma_all[t] + cfg.persistence * tfp[:, t - 1]
                     + drive[:, t] + (1 - cfg.persistence) * eta + u[:, t])
    sl = slice(_BURN, S)
    unit, year = _panel_frame(N, T, cfg.first_year)
    frame = pd.DataFrame({"unit_id": unit, "year": year, "TFP": tfp[:, sl].ravel(),
                          "EconomicSize": size[:, sl].ravel()})
    for name in SUBSIDIES:
        frame[name] = subs[name][:, sl].ravel()
    truth = pd.DataFrame({"unit_id": unit, "year": year, "eta": np.repeat(eta, T),
                          "u": u[:, sl].ravel(), "gamma": np.tile(gamma_all[sl], N)}
                         ).set_index(["unit_id", "year"])
    registry = {"TFP": VariableInfo("index"), "EconomicSize": VariableInfo("thousand currency")}
    registry.update({s: VariableInfo("currency") for s in SUBSIDIES})
    return SyntheticPanel(PanelDataset(frame, registry), truth, cfg)


# -- Monte Carlo harness --------------------------------------------------


@dataclass
class Estimate:
    """One replication's output: point estimates, standard errors, test p-values."""

    values: dict[str, float]
    se: dict[str, float] = field(default_factory=dict)
    pvalues: dict[str, float] = field(default_factory=dict)


def _pipe_sysgmm(panel, options):
    from .production import build_production_spec, estimate_pi, minimum_distance

    ds = panel.dataset
    spec = build_production_spec(ds, collapsed=options.get("collapsed", True),
                                 overrides=options.get("overrides"))
    pi = estimate_pi(ds, spec)
    md = minimum_distance(pi)
    values = {f"beta_{f}": v for f, v in md.beta.items()}
    values["rho"] = md.rho
    se = {lab: s for lab, s in md.se.items()}
    for lab in ("y_lag_1", "m"):
        values[f"pi_{lab}"] = pi.fit.coef(lab)
        se[f"pi_{lab}"] = pi.fit.se(lab)
    pv = {k: v.p_value for k, v in pi.diagnostics.items() if v.applicable}
    return Estimate(values, se, pv)


def _pipe_ols(panel, options):
    from .production import ols_production

    res = ols_production(panel.dataset)
    return Estimate({f"beta_{f}": v for f, v in res.items()})


def _pipe_acf(panel, options):
    from .acf import AcfConfig, estimate_acf

    cfg = AcfConfig(**options.get("acf", {}))
    fit = estimate_acf(panel.dataset, cfg, start=options.get("start", panel.config.beta))
    return Estimate({f"beta_{f}": v for f, v in fit.beta.items()})


def _pipe_impact(panel, options):
    from .impact import ImpactSpec, classify_effect, estimate_impact

    spec = ImpactSpec(collapsed=options.get("collapsed", True))
    res = estimate_impact(None, panel.dataset, spec)
    fit = res.fit
    names = [n for n in fit.labels if not n.startswith("yr") and n != "_cons"]
    values = {n: fit.coef(n) for n in names}
    se = {n: fit.se(n) for n in names}
    pv = {k: v.p_value for k, v in res.diagnostics.items() if v.applicable}
    level = options.get("level", 0.05)
    for n in names:
        d, _ = classify_effect(values[n], se[n], level)
        pv[f"negative:{n}"] = 0.0 if d == "negative" else 1.0
    return Estimate(values, se, pv)


PIPELINES = {"sysgmm": _pipe_sysgmm, "ols": _pipe_ols, "acf": _pipe_acf, "impact": _pipe_impact}
_GENERATORS = {DgpConfig: generate, AcfDgpConfig: generate_acf, ImpactDgpConfig: generate_impact}


@dataclass
class MonteCarloSummary:
    table: pd.DataFrame            # parameter, truth, mean, bias, rmse, sd, mean_se, coverage
    rejection: pd.Series           # test -> rejection rate at ``level``
    replications: int
    failures: int
    estimates: pd.DataFrame
    failure_messages: list[str] = field(default_factory=list)

    def row(self, parameter) -> pd.Series:
        return self.table.set_index("parameter").loc[parameter]


def _one_replication(args):
    cfg, r, pipeline, options = args
    panel = _GENERATORS[type(cfg)](replace(cfg, seed=cfg.seed + r))
    return PIPELINES[pipeline](panel, options)


def monte_carlo(cfg, replications: int, pipeline: str = "sysgmm", *, options: dict | None = None,
                level: float = 0.05, max_failure_rate: float = 0.10, n_jobs: int = 1) -> MonteCarloSummary:
    """Repeat generate + estimate with seeds ``cfg.seed + r``.

    Replications that raise a package error are excluded and counted; the
    run fails when more than ``max_failure_rate`` of them do.
    """
    if replications < 1:
        raise DgpError("need at least one replication")
    if pipeline not in PIPELINES:
        raise DgpError(f"unknown pipeline {pipeline!r}; choose from {sorted(PIPELINES)}")
    options = dict(options or {})
    jobs = [(cfg, r, pipeline, options) for r in range(replications)]
    results, failures = [], []

    def _collect(r, fn):
        try:
            results.append((r, fn()))
        except FarmTfpError as exc:
            failures.append(f"replication {r}: {exc}")

    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(_one_replication, j) for j in jobs]
            for r, fut in enumerate(futures):
                _collect(r, fut.result)
    else:
        for r, job in enumerate(jobs):
            _collect(r, lambda job=job: _one_replication(job))
    if len(failures) > max_failure_rate * replications:
        raise DgpError(f"{len(failures)} of {replications} replications failed", failures=failures[:5])
    results.sort(key=lambda t: t[0])
    est = pd.DataFrame([e.values for _, e in results], index=[r for r, _ in results])
    ses = pd.DataFrame([e.se for _, e in results], index=est.index)
    pvs = pd.DataFrame([e.pvalues for _, e in results], index=est.index)
    truth = getattr(cfg, "truth", {})
    rows = []
    for name in est.columns:
        x = est[name].to_numpy(float)
        t = truth.get(name, math.nan)
        row = {"parameter": name, "truth": t, "mean": x.mean(), "bias": x.mean() - t,
               "rmse": math.sqrt(np.mean((x - t) ** 2)), "sd": x.std(ddof=1) if len(x) > 1 else 0.0,
               "mean_se": math.nan, "coverage": math.nan}
        if name in ses.columns:
            s = ses[name].to_numpy(float)
            row["mean_se"] = s.mean()
            if math.isfinite(t):
                row["coverage"] = float(np.mean(np.abs(x - t) <= 1.959963984540054 * s))
        rows.append(row)
    rejection = (pvs < level).mean() if not pvs.empty else pd.Series(dtype=float)
    return MonteCarloSummary(pd.DataFrame(rows), rejection, replications, len(failures), est, failures)


# -- export to the ingestion layout ---------------------------------------

DEFLATION = {"Y": "output", "K": "capital", "L": "capital", "M": "inputs", "G": "inputs"}


def price_index_frame(countries, years, seed=0, base_year=None) -> pd.DataFrame:
    """Smooth positive price indices equal to 1 in the base year."""
    years = list(years)
    base_year = years[0] if base_year is None else base_year
    rng = common_rng(seed + 7919)
    rows = []
    for c in countries:
        for cat in sorted(set(DEFLATION.values())):
            drift = 0.01 + 0.02 * rng.random()
            for y in years:
                rows.append({"country": c, "year": int(y), "category": cat,
                             "index": round(float((1 + drift) ** (y - base_year)), 6)})
    return pd.DataFrame(rows)


def export_accountancy(panel: SyntheticPanel, *, country: str = "DE", regions=("R1", "R2"),
                       farm_type: str = "FT1", scale: float = 1000.0, rate: float = 0.04,
                       prices: pd.DataFrame | None = None, subsidy_seed: int | None = None
                       ) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Accountancy records and price indices that reconstruct the panel.

    After variable construction, deflation with the returned indices and
    logs, ``log Y - log(scale)`` equals ``y`` (likewise for k, l, n, m, g).  Every
    farm's rent return equals ``rate``, so the regional median is
    ``rate`` and capitalized land value is exact.  Subsidy components are
    drawn independently of productivity.
    """
    frame = panel.dataset.frame
    idx = frame.index
    years = sorted(set(idx.get_level_values("year")))
    prices = price_index_frame([country], years, seed=getattr(panel.config, "seed", 0)) \
        if prices is None else prices
    lookup = {(r.category, r.year): r.index for r in prices[prices["country"] == country].itertuples()}
    yr = idx.get_level_values("year").to_numpy()
    p = {cat: np.array([lookup[(cat, y)] for y in yr]) for cat in set(DEFLATION.values())}
    units = idx.get_level_values("unit_id")
    codes = pd.Index(units).factorize()[0]
    region = np.array(regions)[codes % len(regions)]
    val = lambda v, cat: scale * np.exp(frame[v].to_numpy()) * (p[cat] if cat else 1.0)

    Y = val("y", "output")
    K = val("k", "capital")
    Lv = val("l", "capital")
    M = val("m", "inputs")
    G = val("g", "inputs")
    owned = 0.5 * Lv
    rent = rate * (Lv - owned)
    land = owned
    assets = K + land
    held = np.full(len(frame), 50.0)
    rented = rent * held / (rate * assets)
    sseed = getattr(panel.config, "seed", 0) if subsidy_seed is None else subsidy_seed
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(sseed, spawn_key=(2,))))
    share = rng.dirichlet(np.ones(6), size=len(frame))
    inv = rng.uniform(0.1, 0.3, len(frame)) * G
    excl = G - inv
    out = pd.DataFrame({
        "unit_id": units.astype(str), "year": yr, "country": country, "region": region,
        "farm_type": farm_type,
        "SE131": Y, "SE441": assets, "ALNDAGR_CV_X": land, "SE025": held + rented, "SE030": rented,
        "SE375": rent, "SE011": scale * np.exp(frame["n"].to_numpy()),
        "SE281": 0.6 * M, "SE336": 0.4 * M, "SE605": excl, "SE406": inv,
        "SE610": excl * share[:, 0], "SE615": excl * share[:, 1], "SE630": excl * share[:, 2],
        "SE621": excl * share[:, 3], "SE622": excl * share[:, 4],
        "SO": 1.2 * Y,
    })
    out["SE624"] = out["SE621"] + out["SE622"] + excl * share[:, 5] + inv
    return out, prices
