"""Specification tests for System-GMM fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import stats

from .exceptions import DiagnosticsError
from .gmm import GmmFit, pinv_psd
from .instruments import CONST, DIFF


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    dof: int | None
    p_value: float
    applicable: bool = True

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0) and not math.isnan(self.p_value):
            raise DiagnosticsError(f"p-value {self.p_value} outside [0, 1]", test=self.name)

    def rejects(self, level=0.05) -> bool:
        return self.applicable and self.p_value < level


# -- distribution tails ---------------------------------------------------


def chi2_sf(x: float, dof: float) -> float:
    """Upper tail of the chi-square distribution."""
    if dof <= 0:
        raise DiagnosticsError("chi-square degrees of freedom must be positive", dof=dof)
    if math.isnan(x):
        return math.nan
    return float(stats.chi2.sf(max(x, 0.0), dof))


def norm_sf(z: float) -> float:
    return float(stats.norm.sf(z))


def norm_two_sided(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


# -- Sargan / Hansen ------------------------------------------------------


def _not_applicable(name):
    return TestResult(name, 0.0, 0, 1.0, applicable=False)


def sargan(fit: GmmFit, Z=None) -> TestResult:
    """Overidentification statistic from the two-step residuals and weighting.

    Reported as "Sargan"; this is the heteroskedasticity-robust J form.
    One-step fits use their own weighting after the usual variance scaling
    (see :func:`sargan_one_step`).  ``Z`` (an InstrumentMatrix) is only
    checked for consistency with the fit.
    """
    if Z is not None and list(Z.labels) != list(fit.system.z_labels):
        raise DiagnosticsError("instrument matrix does not match the fit")
    if fit.step == 1:
        return sargan_one_step(fit)
    system = fit.system
    dof = fit.instrument_rank - system.n_params
    if dof <= 0:
        return _not_applicable("Sargan")
    g = system.unit_moments(fit.residuals).sum(axis=0)
    J = float(g @ fit.weight_matrix @ g)
    J = max(J, 0.0)
    return TestResult("Sargan", J, dof, chi2_sf(J, dof))


def sargan_one_step(fit: GmmFit) -> TestResult:
    """Classic Sargan statistic from one-step residuals.

    ``J = (Z'e)' (sum Z_i'H Z_i)^+ (Z'e) / s2`` with ``s2`` half the mean
    squared differenced residual.
    """
    fit1 = fit.first_step if fit.step == 2 else fit
    system = fit1.system
    W1, rank = pinv_psd(system.zhz())
    dof = rank - system.n_params
    if dof <= 0:
        return _not_applicable("Sargan (one-step)")
    d = system.row_eq == DIFF
    e = fit1.residuals
    if d.any():
        n = int(system.usable[:, d].sum())
        s2 = float((e[:, d] ** 2).sum()) / (2.0 * n)
    else:
        n = int(system.usable.sum())
        s2 = float((e ** 2).sum()) / n
    if s2 <= 0:
        return TestResult("Sargan (one-step)", 0.0, dof, 1.0)
    g = system.unit_moments(e).sum(axis=0)
    J = max(float(g @ W1 @ g) / s2, 0.0)
    return TestResult("Sargan (one-step)", J, dof, chi2_sf(J, dof))


# -- Arellano-Bond serial correlation -------------------------------------


def ar_test(fit: GmmFit, order: int) -> TestResult:
    """Arellano-Bond m-statistic of the given order on differenced residuals.

    The variance accounts for the estimation error in the coefficients,
    using the covariance that matches the fit (corrected two-step when
    available, robust one-step otherwise).
    """
    name = f"AR({order})"
    if order < 1:
        raise DiagnosticsError("order must be >= 1", order=order)
    system = fit.system
    d = system.row_eq == DIFF
    if not d.any():
        return TestResult(name, math.nan, None, math.nan, applicable=False)
    ed = fit.residuals[:, d]
    ok = system.usable[:, d]
    nper = ed.shape[1]
    if nper < order + 1 or ok.any(axis=0).sum() < order + 2:
        return TestResult(name, math.nan, None, math.nan, applicable=False)
    pair = ok[:, order:] & ok[:, :-order]
    e = np.where(pair, ed[:, order:], 0.0)
    w = np.where(pair, ed[:, :-order], 0.0)
    if not pair.any():
        return TestResult(name, math.nan, None, math.nan, applicable=False)

    c = (w * e).sum(axis=1)                     # per unit
    num = float(c.sum())
    Xd = system.X[:, d, :][:, order:, :]
    xw = np.einsum("nrk,nr->k", Xd, w)
    g = system.unit_moments(fit.residuals)       # (N, L)
    V = fit.cov
    A, B = fit.weight_matrix, fit.bread
    gc = g.T @ c
    var = float(c @ c) - 2.0 * float(xw @ B @ system.ZX.T @ A @ gc) + float(xw @ V @ xw)
    if not var > 0:
        return TestResult(name, math.nan, None, math.nan, applicable=False)
    m = num / math.sqrt(var)
    return TestResult(name, m, None, norm_two_sided(m))


# -- Wald -----------------------------------------------------------------

COEFFICIENTS = "coefficients"
TIME = "time"


def _select(fit: GmmFit, subset) -> list[int]:
    labels = list(fit.labels)
    if isinstance(subset, str):
        if subset == COEFFICIENTS:
            idx = [i for i, lab in enumerate(labels) if lab != CONST]
        elif subset == TIME:
            idx = [i for i, lab in enumerate(labels) if lab.startswith("yr")]
        elif subset in labels:
            idx = [labels.index(subset)]
        else:
            raise DiagnosticsError(f"unknown coefficient selector {subset!r}")
    elif callable(subset):
        idx = [i for i, lab in enumerate(labels) if subset(lab)]
    else:
        names = list(subset)
        missing = [n for n in names if n not in labels]
        if missing:
            raise DiagnosticsError(f"coefficients not in fit: {missing}")
        idx = [labels.index(n) for n in names]
    if not idx:
        raise DiagnosticsError("Wald test needs a non-empty coefficient subset", subset=str(subset))
    return idx


def wald_from(beta, V, names=None, name="Wald") -> TestResult:
    beta = np.atleast_1d(np.asarray(beta, float))
    V = np.atleast_2d(np.asarray(V, float))
    if beta.size == 0:
        raise DiagnosticsError("Wald test needs a non-empty coefficient subset")
    # equilibrate so the rank check is scale free
    s = np.sqrt(np.abs(np.diag(V)))
    if np.any(s == 0):
        raise DiagnosticsError(f"singular covariance for Wald subset {names}", subset=names)
    C = V / np.outer(s, s)
    vals = np.linalg.eigvalsh(C)
    if vals.min() <= 1e-12 * max(vals.max(), 1.0):
        raise DiagnosticsError(f"singular covariance for Wald subset {names}", subset=names)
    b = beta / s
    W = float(b @ np.linalg.solve(C, b))
    dof = int(beta.size)
    return TestResult(name, W, dof, chi2_sf(W, dof))


def wald(fit: GmmFit, subset: str | Iterable[str] | Callable[[str], bool] = COEFFICIENTS) -> TestResult:
    """Joint zero test on a coefficient subset with the fit's best covariance.

    ``subset`` is a preset (``"coefficients"``: everything but the
    constant; ``"time"``: year dummies), a label list or a predicate.
    """
    idx = _select(fit, subset)
    names = [fit.labels[i] for i in idx]
    label = {COEFFICIENTS: "Wald (coefficients)", TIME: "Wald (time dummies)"}.get(subset, "Wald") \
        if isinstance(subset, str) else "Wald"
    return wald_from(fit.params[idx], fit.cov[np.ix_(idx, idx)], names, label)


def battery(fit: GmmFit) -> dict[str, TestResult]:
    """Sargan (both forms), AR(1), AR(2) and the two Wald presets."""
    out = {
        "sargan": sargan(fit),
        "sargan_one_step": sargan_one_step(fit),
        "ar1": ar_test(fit, 1),
        "ar2": ar_test(fit, 2),
        "wald_coefficients": wald(fit, COEFFICIENTS),
    }
    try:
        out["wald_time"] = wald(fit, TIME)
    except DiagnosticsError:
        out["wald_time"] = TestResult("Wald (time dummies)", math.nan, None, math.nan, applicable=False)
    return out


__all__ = [
    "TestResult", "ar_test", "battery", "chi2_sf", "norm_sf", "norm_two_sided",
    "sargan", "sargan_one_step", "wald", "wald_from",
]
