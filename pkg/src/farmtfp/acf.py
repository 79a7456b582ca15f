"""
Control-function production function estimator and TFP grouping.

The first stage projects output on a complete polynomial in the inputs
(materials acting as the productivity proxy) plus year dummies.  The
second stage searches the elasticities ``beta`` so that the productivity
innovation, net of an AR(1) law with year intercepts, is orthogonal to
the instruments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.optimize import minimize

from .exceptions import AcfError, ConvergenceError, GroupingError
from .panel import PanelDataset

FACTORS = ("k", "l", "n", "m", "g")
DEFAULT_INSTRUMENTS = ("k", "l", "n_lag", "m_lag", "g_lag")
LOW, MEDIUM, HIGH = "Low", "Medium", "High"


@dataclass(frozen=True)
class AcfConfig:
    """Settings for both stages.

    ``instruments`` entries are factor names (current value) or
    ``<factor>_lag`` (previous year).  ``include_g`` drops ``g`` from the
    factor list when false.
    """

    poly_degree: int = 3
    factors: tuple[str, ...] = FACTORS
    output: str = "y"
    instruments: tuple[str, ...] = DEFAULT_INSTRUMENTS
    include_g: bool = True
    time_dummies: bool = True
    tol: float = 1e-10
    max_iter: int = 20000
    n_starts: int = 8
    perturbation: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.poly_degree <= 4:
            raise AcfError("poly_degree must be in [1, 4]", poly_degree=self.poly_degree)
        if not self.tol > 0:
            raise AcfError("tolerance must be positive")
        if self.n_starts < 1:
            raise AcfError("need at least one start")
        if not self.include_g:
            object.__setattr__(self, "factors", tuple(f for f in self.factors if f != "g"))
            object.__setattr__(self, "instruments",
                               tuple(z for z in self.instruments if z not in ("g", "g_lag")))


# -- first stage ----------------------------------------------------------


def polynomial_terms(names, degree) -> list[tuple[str, ...]]:
    """All monomials of total degree 1..degree, as tuples of factor names."""
    out = []
    for d in range(1, degree + 1):
        out.extend(itertools.combinations_with_replacement(names, d))
    return out


def _term_label(t):
    parts = []
    for name, grp in itertools.groupby(t):
        p = len(list(grp))
        parts.append(name if p == 1 else f"{name}^{p}")
    return "*".join(parts)


@dataclass
class FirstStage:
    phi: pd.Series                # fitted values, index (unit_id, year)
    residual: pd.Series
    r2: float
    terms: list[str]
    degree: int

    @property
    def r2_defined(self) -> bool:
        return not math.isnan(self.r2)


def acf_first_stage(ds: PanelDataset, cfg: AcfConfig = AcfConfig()) -> FirstStage:
    """Series projection of output on the inputs."""
    cols = [cfg.output, *cfg.factors]
    missing = [c for c in cols if c not in ds]
    if missing:
        raise AcfError(f"first stage needs variable(s) {missing}")
    f = ds.frame[cols].dropna()
    if f.empty:
        raise AcfError("no complete observations for the first stage")
    X0 = f[list(cfg.factors)].to_numpy(float)
    # standardizing leaves the projection unchanged and helps conditioning
    mu, sd = X0.mean(0), X0.std(0)
    sd[sd == 0] = 1.0
    Xs = (X0 - mu) / sd
    pos = {n: j for j, n in enumerate(cfg.factors)}
    terms = polynomial_terms(cfg.factors, cfg.poly_degree)
    design = [np.ones(len(f))]
    labels = ["_cons"]
    for t in terms:
        design.append(np.prod([Xs[:, pos[n]] for n in t], axis=0))
        labels.append(_term_label(t))
    if cfg.time_dummies:
        yrs = f.index.get_level_values("year").to_numpy()
        for yr in np.unique(yrs)[1:]:
            design.append((yrs == yr).astype(float))
            labels.append(f"yr{yr}")
    D = np.column_stack(design)
    _, R, piv = scipy.linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > diag[0] * 1e-10 * max(D.shape)).sum()) if diag.size and diag[0] > 0 else 0
    if rank < D.shape[1]:
        bad = sorted(labels[j] for j in piv[rank:])
        raise AcfError(f"first-stage design is rank deficient; collinear terms: {bad}", terms=bad)
    y = f[cfg.output].to_numpy(float)
    coef, *_ = np.linalg.lstsq(D, y, rcond=None)
    fitted = D @ coef
    resid = y - fitted
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / tss if tss > 0 else math.nan
    return FirstStage(pd.Series(fitted, index=f.index, name="phi"),
                      pd.Series(resid, index=f.index, name="eps"), r2, labels[1:], cfg.poly_degree)


# -- second stage ---------------------------------------------------------


class _Moments:
    """Precomputed cross products so that Q(beta) costs O(K^2)."""

    def __init__(self, ds: PanelDataset, first: FirstStage, cfg: AcfConfig):
        F = ds.frame
        need = list(dict.fromkeys([*cfg.factors, *(z.removesuffix("_lag") for z in cfg.instruments)]))
        data = F[need].join(first.phi, how="inner")
        idx = data.index
        prev_index = pd.MultiIndex.from_arrays(
            [idx.get_level_values("unit_id"), idx.get_level_values("year") - 1], names=idx.names)
        prev = data.reindex(prev_index)
        prev.index = idx
        cur_cols = list(cfg.factors) + ["phi"]
        ok = data[cur_cols].notna().all(axis=1) & prev[cur_cols].notna().all(axis=1)
        zcols = []
        for z in cfg.instruments:
            if z.endswith("_lag"):
                col = prev[z.removesuffix("_lag")]
            else:
                col = data[z]
            zcols.append(col.to_numpy(float))
        Zm = np.column_stack(zcols)
        ok &= np.isfinite(Zm).all(axis=1)
        ok = ok.to_numpy()
        if ok.sum() <= len(cfg.factors) + 1:
            raise AcfError("too few consecutive-year observations for the second stage",
                           pairs=int(ok.sum()))
        years = idx.get_level_values("year").to_numpy()[ok]
        X = data.loc[ok, list(cfg.factors)].to_numpy(float)
        Xl = prev.loc[ok, list(cfg.factors)].to_numpy(float)
        phi = data.loc[ok, "phi"].to_numpy(float)
        phil = prev.loc[ok, "phi"].to_numpy(float)
        Z = Zm[ok]
        if cfg.time_dummies:
            X, Xl, phi, phil = (_demean_by(a, years) for a in (X, Xl, phi, phil))
        else:
            X, Xl, phi, phil = (a - a.mean(axis=0) for a in (X, Xl, phi, phil))
        self.n = len(phi)
        self.pairs = int(ok.sum())
        # current omega = a - X b, lagged omega = c - Xl b
        self.Za, self.ZX = Z.T @ phi, Z.T @ X
        self.Zc, self.ZXl = Z.T @ phil, Z.T @ Xl
        self.cc, self.cXl, self.XlXl = phil @ phil, phil @ Xl, Xl.T @ Xl
        self.ca, self.cX, self.Xla, self.XlX = phil @ phi, phil @ X, Xl.T @ phi, Xl.T @ X

    def rho(self, b):
        num = self.ca - self.cX @ b - b @ self.Xla + b @ self.XlX @ b
        den = self.cc - 2 * self.cXl @ b + b @ self.XlXl @ b
        return num / den if den > 0 else 0.0

    def mbar(self, b):
        r = self.rho(b)
        return ((self.Za - self.ZX @ b) - r * (self.Zc - self.ZXl @ b)) / self.n

    def Q(self, b):
        m = self.mbar(np.asarray(b, float))
        return float(m @ m)


@dataclass
class AcfFit:
    beta: dict[str, float]
    rho: float
    objective_value: float
    first_stage: FirstStage
    tfp_acf: pd.Series
    converged: bool
    trace: list[dict] = field(default_factory=list)
    pairs: int = 0

    @property
    def theta(self):
        return np.array(list(self.beta.values()))


def _demean_by(a, groups):
    a = np.asarray(a, float)
    out = a.copy()
    for g in np.unique(groups):
        sel = groups == g
        out[sel] = a[sel] - a[sel].mean(axis=0)
    return out


def acf_objective(ds: PanelDataset, first: FirstStage, cfg: AcfConfig = AcfConfig()):
    """The criterion ``Q(beta)`` as a callable (for probes and tests)."""
    return _Moments(ds, first, cfg).Q


def _starts(start, cfg):
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    start = np.asarray(start, float)
    out = [start]
    scale = np.where(np.abs(start) > 1e-3, np.abs(start), 0.1)
    for _ in range(cfg.n_starts - 1):
        out.append(start + cfg.perturbation * scale * rng.uniform(-1, 1, start.size))
    return out


def acf_second_stage(ds: PanelDataset, first: FirstStage, cfg: AcfConfig = AcfConfig(),
                     start=None) -> AcfFit:
    """Multistart Nelder-Mead search for the elasticities.

    ``start`` (mapping or array in factor order) is usually the production-function
    minimum-distance estimate; defaults to 0.2 for every factor.
    """
    mom = _Moments(ds, first, cfg)
    k = len(cfg.factors)
    if start is None:
        b0 = np.full(k, 0.2)
    elif isinstance(start, dict):
        b0 = np.array([float(start[f]) for f in cfg.factors])
    else:
        b0 = np.asarray(start, float)
    # scale the criterion so tolerances are relative to the start
    q0 = max(mom.Q(b0), 1e-300)
    crit = lambda b: mom.Q(b) / q0
    trace, best = [], None
    for j, s in enumerate(_starts(b0, cfg)):
        res = minimize(crit, s, method="Nelder-Mead",
                       options={"xatol": cfg.tol ** 0.5, "fatol": cfg.tol, "maxiter": cfg.max_iter,
                                "maxfev": 2 * cfg.max_iter, "adaptive": True})
        rec = {"start": j, "beta": res.x.copy(), "Q": float(res.fun) * q0,
               "converged": bool(res.success), "iterations": int(res.nit)}
        trace.append(rec)
        if res.success and (best is None or rec["Q"] < best["Q"]):
            best = rec
    if best is None:
        top = min(trace, key=lambda r: r["Q"])
        raise ConvergenceError("second-stage search did not converge from any start",
                               best=top, trace=trace)
    b = best["beta"]
    beta = dict(zip(cfg.factors, map(float, b)))
    F = ds.frame
    logt = F[cfg.output] - sum(beta[f] * F[f] for f in cfg.factors)
    tfp = np.exp(logt.dropna()).rename("tfp_acf")
    return AcfFit(beta, float(mom.rho(b)), best["Q"], first, tfp, True, trace, mom.pairs)


def estimate_acf(ds: PanelDataset, cfg: AcfConfig = AcfConfig(), start=None) -> AcfFit:
    return acf_second_stage(ds, acf_first_stage(ds, cfg), cfg, start)


# -- grouping -------------------------------------------------------------


def classify_groups(tfp_acf, countries=None) -> pd.DataFrame:
    """Low/Medium/High terciles of farm-median scores within country.

    ``tfp_acf`` is a Series indexed by ``(unit_id, year)`` (or an
    :class:`AcfFit`); ``countries`` maps unit -> country (Series or dict),
    all units in one country when omitted.  Scores at or below the 1/3
    quantile are Low, at or below the 2/3 quantile Medium.
    """
    if isinstance(tfp_acf, AcfFit):
        tfp_acf = tfp_acf.tfp_acf
    s = pd.Series(tfp_acf).dropna()
    score = s.groupby(level="unit_id").median()
    if countries is None:
        ctry = pd.Series("ALL", index=score.index)
    else:
        ctry = pd.Series(countries)
        if isinstance(ctry.index, pd.MultiIndex):
            ctry = ctry.groupby(level="unit_id").first()
        ctry = ctry.reindex(score.index)
        if ctry.isna().any():
            raise GroupingError("units without a country", units=list(ctry.index[ctry.isna()])[:5])
        ctry = ctry.astype(str)
    out = []
    for c in sorted(ctry.unique()):
        sc = score[ctry == c]
        if len(sc) < 3:
            raise GroupingError(f"country {c} has {len(sc)} unit(s); need at least 3 for terciles",
                                country=c, units=len(sc))
        v = sc.to_numpy(float)
        q1, q2 = np.quantile(v, [1 / 3, 2 / 3], method="inverted_cdf")
        grp = np.where(v <= q1, LOW, np.where(v <= q2, MEDIUM, HIGH))
        out.append(pd.DataFrame({"unit_id": sc.index, "country": c, "score": v, "group": grp}))
    return pd.concat(out, ignore_index=True)


__all__ = [
    "AcfConfig", "AcfFit", "FirstStage", "HIGH", "LOW", "MEDIUM", "acf_first_stage",
    "acf_objective", "acf_second_stage", "classify_groups", "estimate_acf", "polynomial_terms",
]
