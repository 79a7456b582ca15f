"""
Dynamic Cobb-Douglas production function: unrestricted System-GMM
estimate, common-factor minimum distance and Solow-residual TFP.

With AR(1) productivity the production function becomes

    y_t = rho y_{t-1} + sum_x (beta_x x_t - rho beta_x x_{t-1}) + ...

so the unrestricted coefficients ``pi`` satisfy ``pi_lag = -pi_1 pi_cur``
factor by factor.  :func:`minimum_distance` imposes that restriction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .diagnostics import TestResult, battery
from .exceptions import MinimumDistanceError, VariableError
from .gmm import GmmFit, fit_system_gmm
from .instruments import (ENDOGENOUS, PREDETERMINED, InstrumentSpec, InstrumentVariable,
                          ModelSpec, build_instruments)
from .panel import PanelDataset, lag_name, with_lags

FACTORS = ("k", "l", "n", "m", "g")
DEFAULT_CLASSES = {"y": PREDETERMINED, "k": PREDETERMINED, "l": PREDETERMINED,
                   "n": ENDOGENOUS, "m": ENDOGENOUS, "g": ENDOGENOUS}
PI_TOL = 1e-8


class MinimumDistanceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ProductionSpec:
    output: str = "y"
    factors: tuple[str, ...] = FACTORS
    model: ModelSpec | None = None
    instruments: InstrumentSpec | None = None

    @property
    def regressors(self) -> tuple[str, ...]:
        return self.model.regressors

    def prepare(self, ds: PanelDataset) -> PanelDataset:
        """Add any missing one-year lag columns."""
        need = [v for v in (self.output, *self.factors) if lag_name(v, 1) not in ds]
        return with_lags(ds, need, 1) if need else ds


def dynamic_regressors(output="y", factors=FACTORS) -> tuple[str, ...]:
    regs = [lag_name(output, 1)]
    for f in factors:
        regs += [f, lag_name(f, 1)]
    return tuple(regs)


def build_production_spec(ds: PanelDataset, *, output: str = "y", factors=FACTORS,
                          classes: dict | None = None, overrides: dict | None = None,
                          collapsed: bool = True, time_dummies: bool = True) -> ProductionSpec:
    """Default dynamic specification for a dataset holding logged y, k, l, n, m, g."""
    factors = tuple(factors)
    missing = [v for v in (output, *factors) if v not in ds]
    if missing:
        raise VariableError(f"production function needs variable(s) {missing}", missing=missing)
    cls = dict(DEFAULT_CLASSES)
    cls.update(classes or {})
    model = ModelSpec(output, dynamic_regressors(output, factors), time_dummies=time_dummies)
    ivs = tuple(InstrumentVariable(v, cls.get(v, PREDETERMINED)) for v in (output, *factors))
    spec = InstrumentSpec(ivs, include_time_dummies=time_dummies,
                          collapsed=collapsed).with_overrides(overrides)
    return ProductionSpec(output, factors, model, spec)


@dataclass
class PiVector:
    """Unrestricted coefficients with covariance (corrected two-step)."""

    values: np.ndarray
    labels: list[str]
    cov: np.ndarray
    factors: tuple[str, ...] = FACTORS
    output: str = "y"
    fit: GmmFit | None = None
    diagnostics: dict[str, TestResult] = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, values, cov, factors=FACTORS, output="y"):
        labels = list(dynamic_regressors(output, factors))
        values = np.asarray(values, float)
        return cls(values, labels[:len(values)], np.asarray(cov, float), tuple(factors), output)

    def _i(self, label):
        return self.labels.index(label)

    @property
    def rho_slot(self) -> float:
        return float(self.values[self._i(lag_name(self.output, 1))])

    def current(self, f) -> float:
        return float(self.values[self._i(f)])

    def lagged(self, f) -> float:
        return float(self.values[self._i(lag_name(f, 1))])

    def structural_block(self):
        """Values and covariance of ``(pi_1, (pi_cur, pi_lag) per factor)``."""
        names = dynamic_regressors(self.output, self.factors)
        idx = [self._i(n) for n in names]
        return self.values[idx], self.cov[np.ix_(idx, idx)]

    def table(self) -> pd.DataFrame:
        se = np.sqrt(np.clip(np.diag(self.cov), 0, None))
        return pd.DataFrame({"coef": self.values, "se": se}, index=self.labels)


def estimate_pi(ds: PanelDataset, spec: ProductionSpec) -> PiVector:
    """Two-step corrected System-GMM fit of the dynamic specification."""
    ds = spec.prepare(ds)
    Z = build_instruments(ds, spec.instruments, spec.model)
    fit = fit_system_gmm(ds, spec.model, Z)
    return PiVector(fit.params.copy(), list(fit.labels), fit.cov, spec.factors, spec.output,
                    fit, battery(fit))


@dataclass
class MdResult:
    beta: dict[str, float]
    rho: float
    distance: float
    vcov_theta: np.ndarray
    theta_labels: list[str]
    dof: int = 0
    warnings: list[str] = field(default_factory=list)

    @property
    def theta(self) -> np.ndarray:
        return np.array([*self.beta.values(), self.rho])

    @property
    def se(self) -> dict[str, float]:
        s = np.sqrt(np.clip(np.diag(self.vcov_theta), 0, None))
        return dict(zip(self.theta_labels, s))

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"coef": self.theta, "se": list(self.se.values())}, index=self.theta_labels)


def md_transform(p, n_factors):
    """``g(pi)`` and its Jacobian for ``p = (pi_1, pi_c1, pi_l1, ...)``."""
    p = np.asarray(p, float)
    pi1 = p[0]
    cur = p[1::2][:n_factors]
    lagged = p[2::2][:n_factors]
    g = np.concatenate([cur, -lagged / pi1, [pi1]])
    k = n_factors
    J = np.zeros((2 * k + 1, 2 * k + 1))
    for j in range(k):
        J[j, 1 + 2 * j] = 1.0
        J[k + j, 2 + 2 * j] = -1.0 / pi1
        J[k + j, 0] = lagged[j] / pi1 ** 2
    J[2 * k, 0] = 1.0
    return g, J


def md_design(n_factors):
    """``G`` with ``g(pi(theta)) = G theta`` for ``theta = (beta, rho)``."""
    k = n_factors
    G = np.zeros((2 * k + 1, k + 1))
    G[:k, :k] = np.eye(k)
    G[k:2 * k, :k] = np.eye(k)
    G[2 * k, k] = 1.0
    return G


def _weight(Omega, notes):
    s = np.sqrt(np.abs(np.diag(Omega)))
    s[s == 0] = 1.0
    C = Omega / np.outer(s, s)
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    tol = 1e-12 * max(vals.max(), 1.0)
    keep = vals > tol
    if not keep.all():
        msg = f"distance weighting matrix is singular (rank {int(keep.sum())} of {len(vals)}); pseudo-inverse used"
        warnings.warn(msg, MinimumDistanceWarning, stacklevel=3)
        notes.append(msg)
    Cinv = (vecs[:, keep] / vals[keep]) @ vecs[:, keep].T
    return Cinv / np.outer(s, s)


def minimum_distance(pi: PiVector) -> MdResult:
    """Common-factor restricted ``(beta, rho)`` by minimum distance.

    The distance is weighted by the delta-method covariance of ``g(pi)``;
    since ``g(pi(theta))`` is linear in theta the minimizer is a
    weighted least-squares solve.
    """
    p, V = pi.structural_block()
    k = len(pi.factors)
    if not abs(p[0]) >= PI_TOL:
        raise MinimumDistanceError("persistence coefficient too close to zero for common-factor mapping",
                                   pi_1=float(p[0]))
    if not np.all(np.isfinite(p)) or not np.all(np.isfinite(V)):
        raise MinimumDistanceError("non-finite coefficient vector or covariance")
    if np.linalg.eigvalsh(0.5 * (V + V.T)).min() < -1e-8 * max(1.0, np.abs(V).max()):
        raise MinimumDistanceError("coefficient covariance is not positive semidefinite")
    notes: list[str] = []
    g, J = md_transform(p, k)
    Omega = J @ V @ J.T
    Winv = _weight(Omega, notes)
    G = md_design(k)
    M = G.T @ Winv @ G
    vcov = np.linalg.pinv(0.5 * (M + M.T))
    theta = vcov @ G.T @ Winv @ g
    r = g - G @ theta
    distance = max(float(r @ Winv @ r), 0.0)
    rho = float(theta[-1])
    if not abs(rho) < 1:
        msg = f"estimated persistence {rho:.3f} outside (-1, 1)"
        warnings.warn(msg, MinimumDistanceWarning, stacklevel=2)
        notes.append(msg)
    labels = [f"beta_{f}" for f in pi.factors] + ["rho"]
    return MdResult(dict(zip(pi.factors, map(float, theta[:k]))), rho, distance,
                    0.5 * (vcov + vcov.T), labels, dof=k, warnings=notes)


def md_objective(theta, pi: PiVector) -> float:
    """Quadratic distance at an arbitrary theta (for checks and oracles)."""
    p, V = pi.structural_block()
    k = len(pi.factors)
    g, J = md_transform(p, k)
    Winv = _weight(J @ V @ J.T, [])
    r = g - md_design(k) @ np.asarray(theta, float)
    return float(r @ Winv @ r)


def ols_production(ds: PanelDataset, *, output: str = "y", factors=FACTORS,
                   time_dummies: bool = True) -> dict[str, float]:
    """Pooled least squares of log output on the log factors (a benchmark)."""
    cols = [output, *factors]
    f = ds.frame[cols].dropna()
    parts = [np.ones(len(f)), *(f[x].to_numpy(float) for x in factors)]
    if time_dummies:
        yrs = f.index.get_level_values("year").to_numpy()
        parts += [(yrs == y).astype(float) for y in np.unique(yrs)[1:]]
    coef, *_ = np.linalg.lstsq(np.column_stack(parts), f[output].to_numpy(float), rcond=None)
    return dict(zip(factors, map(float, coef[1:1 + len(factors)])))


# -- TFP ------------------------------------------------------------------


@dataclass
class TfpSeries:
    values: pd.DataFrame          # index (unit_id, year); columns tfp, country
    means: pd.DataFrame           # country, year, mean, n

    def country_means(self, country) -> pd.Series:
        m = self.means[self.means["country"] == country]
        return pd.Series(m["mean"].to_numpy(), index=m["year"].to_numpy(), name=str(country))


def compute_tfp(ds: PanelDataset, md: MdResult | dict, *, output: str = "y",
                partial_out_years: bool = False, country_label: str = "country") -> TfpSeries:
    """Solow residual ``exp(y - sum beta_x x)`` per observation.

    ``partial_out_years`` removes year-specific means of log TFP (within
    country) before exponentiating, keeping the overall mean.
    """
    beta = md.beta if isinstance(md, MdResult) else dict(md)
    vals = np.array(list(beta.values()), float)
    if not np.all(np.isfinite(vals)):
        raise MinimumDistanceError("non-finite elasticities")
    frame = ds.frame
    logt = frame[output].astype(float).copy()
    for f, b in beta.items():
        if f not in frame.columns:
            raise VariableError(f"factor {f!r} not in dataset")
        logt = logt - b * frame[f]
    if country_label in frame.columns:
        country = frame[country_label].astype(str)
    else:
        country = pd.Series("ALL", index=frame.index)
    out = pd.DataFrame({"country": country, "log_tfp": logt}).dropna(subset=["log_tfp"])
    if partial_out_years:
        yr = out.index.get_level_values("year")
        year_mean = out.groupby([out["country"], yr])["log_tfp"].transform("mean")
        overall = out.groupby("country")["log_tfp"].transform("mean")
        out["log_tfp"] = out["log_tfp"] - year_mean + overall
    out["tfp"] = np.exp(out["log_tfp"])
    out = out.drop(columns="log_tfp")
    grp = out.groupby([out["country"], out.index.get_level_values("year").rename("year")])["tfp"]
    means = grp.agg(["mean", "size"]).reset_index().rename(columns={"size": "n"})
    return TfpSeries(out, means)


def tfp_variation_table(tfp, years=None) -> pd.DataFrame:
    """Year-on-year change in mean TFP.

    Accepts a :class:`TfpSeries` with one country, a Series of means
    indexed by year, or a plain sequence of means (with optional
    ``years``).  ``percent`` is a fraction; ``cumulated`` chains
    ``1 + percent`` from 1 in the first year.
    """
    if isinstance(tfp, TfpSeries):
        countries = tfp.means["country"].unique()
        if len(countries) != 1:
            raise VariableError("TfpSeries holds several countries; pass one country's means")
        s = tfp.country_means(countries[0])
    elif isinstance(tfp, pd.Series):
        s = tfp.sort_index()
    else:
        vals = list(tfp)
        s = pd.Series(vals, index=list(years) if years is not None else range(len(vals)))
    if len(s) < 2:
        raise VariableError("variation table needs at least two years")
    m = s.to_numpy(float)
    delta = np.concatenate([[np.nan], np.diff(m)])
    pct = np.concatenate([[np.nan], np.diff(m) / m[:-1]])
    cum = np.cumprod(np.concatenate([[1.0], 1.0 + pct[1:]]))
    return pd.DataFrame({"year": s.index, "mean": m, "delta": delta, "percent": pct, "cumulated": cum})


__all__ = [
    "FACTORS", "MdResult", "MinimumDistanceWarning", "PiVector", "ProductionSpec", "TfpSeries",
    "build_production_spec", "compute_tfp", "dynamic_regressors", "estimate_pi", "md_design",
    "md_objective", "md_transform", "minimum_distance", "ols_production", "tfp_variation_table",
]
