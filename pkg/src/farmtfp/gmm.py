"""
Linear one-step and two-step System-GMM with the Windmeijer correction.

All moment sums run over units; every per-unit quantity is held in
arrays with a leading unit axis, so accumulation is a reshape and a
matrix product.  Covariances are on the scale of the coefficients (the
weighting matrices are inverses of unscaled sums).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .exceptions import EstimationError, SingularMatrixError
from .instruments import (
    CONST, DIFF, LEVEL, InstrumentMatrix, ModelSpec, time_dummy_matrix, usable_rows,
)
from .panel import PanelDataset

RANK_RTOL = 1e-10


# -- linear algebra -------------------------------------------------------


def _deficient_labels(vecs, labels, cutoff=0.1):
    out = []
    for v in vecs.T:
        w = np.abs(v) / np.abs(v).max()
        out.extend(labels[i] for i in np.flatnonzero(w > cutoff))
    return list(dict.fromkeys(out))


def inv_psd(M, labels, what="matrix", rtol=RANK_RTOL):
    """Inverse of a symmetric positive semi-definite matrix.

    The matrix is equilibrated by its diagonal, then eigen-decomposed.  An
    eigenvalue below ``rtol`` times the largest one means the matrix is
    singular; :class:`SingularMatrixError` then names the columns loading
    on the null directions.
    """
    M = 0.5 * (M + M.T)
    d = np.sqrt(np.clip(np.diag(M), 0, None))
    zero = d <= np.finfo(float).tiny
    if zero.any():
        raise SingularMatrixError(f"{what} is singular (zero-variance columns)",
                                  labels=[labels[i] for i in np.flatnonzero(zero)])
    Mn = M / np.outer(d, d)
    lam, vec = np.linalg.eigh(Mn)
    small = lam <= rtol * lam.max()
    if small.any():
        raise SingularMatrixError(f"{what} is rank deficient ({int(small.sum())} direction(s))",
                                  labels=_deficient_labels(vec[:, small], labels))
    inv = (vec / lam) @ vec.T
    inv = inv / np.outer(d, d)
    return 0.5 * (inv + inv.T)


def pinv_psd(S, rtol=RANK_RTOL):
    """Pseudo-inverse of a symmetric PSD matrix and its numerical rank."""
    S = 0.5 * (S + S.T)
    lam, vec = np.linalg.eigh(S)
    top = lam.max() if lam.size else 0.0
    if top <= 0:
        return np.zeros_like(S), 0
    keep = lam > rtol * top
    inv = (vec[:, keep] / lam[keep]) @ vec[:, keep].T
    return 0.5 * (inv + inv.T), int(keep.sum())


# -- the stacked system ---------------------------------------------------


def first_difference_h(n):
    """``n x n`` matrix with 2 on the diagonal and -1 beside it."""
    H = 2.0 * np.eye(n)
    idx = np.arange(n - 1)
    H[idx, idx + 1] = -1.0
    H[idx + 1, idx] = -1.0
    return H


@dataclass
class GmmSystem:
    """Stacked per-unit data: ``X (N,R,K)``, ``y (N,R)``, ``Z (N,R,L)``.

    Unusable rows are zero in all three arrays.  ``H`` is the per-unit
    one-step weighting pattern for the error covariance.
    """

    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    H: np.ndarray
    usable: np.ndarray
    x_labels: list[str]
    z_labels: list[str]
    units: pd.Index | None = None
    row_eq: np.ndarray | None = None
    row_year: np.ndarray | None = None
    deleted: int = 0

    def __post_init__(self):
        N, R, K = self.X.shape
        if self.y.shape != (N, R) or self.Z.shape[:2] != (N, R):
            raise EstimationError("inconsistent system shapes",
                                  X=self.X.shape, y=self.y.shape, Z=self.Z.shape)
        if self.row_eq is None:
            self.row_eq = np.array([LEVEL] * R)
        if self.units is None:
            self.units = pd.RangeIndex(N)
        L = self.Z.shape[2]
        self._X2 = self.X.reshape(N * R, K)
        self._Z2 = self.Z.reshape(N * R, L)
        self.ZX = self._Z2.T @ self._X2
        self.Zy = self._Z2.T @ self.y.reshape(N * R)

    @classmethod
    def from_arrays(cls, X, y, Z, H=None, x_labels=None, z_labels=None, usable=None):
        """System from raw arrays; 2-D inputs are treated as one row per unit."""
        X = np.asarray(X, float)
        Z = np.asarray(Z, float)
        y = np.asarray(y, float)
        if X.ndim == 2:
            X, Z, y = X[:, None, :], Z[:, None, :], y[:, None]
        N, R, K = X.shape
        usable = np.ones((N, R), bool) if usable is None else np.asarray(usable, bool)
        return cls(X * usable[:, :, None], y * usable, Z * usable[:, :, None],
                   np.eye(R) if H is None else np.asarray(H, float), usable,
                   x_labels or [f"x{j}" for j in range(K)],
                   z_labels or [f"z{j}" for j in range(Z.shape[2])])

    @property
    def n_params(self):
        return self.X.shape[2]

    @property
    def n_instruments(self):
        return self.Z.shape[2]

    def residuals(self, beta):
        return (self.y - self.X @ beta) * self.usable

    def unit_moments(self, e):
        """Per-unit ``Z_i' e_i`` as an ``(N, L)`` array."""
        return np.einsum("nrl,nr->nl", self.Z, e)

    def zhz(self):
        N, R, L = self.Z.shape
        HZ = np.einsum("rs,nsl->nrl", self.H, self.Z).reshape(N * R, L)
        return self._Z2.T @ HZ

    def permuted_instruments(self, order) -> "GmmSystem":
        order = list(order)
        return replace(self, Z=self.Z[:, :, order], z_labels=[self.z_labels[i] for i in order])


def build_system(ds: PanelDataset, model: ModelSpec, Z: InstrumentMatrix) -> GmmSystem:
    """Align the model's regressors with the instrument rows of ``Z``."""
    diff_ok, level_ok, dense, units, grid = usable_rows(ds, model)
    if not units.equals(Z.units) or not np.array_equal(grid, Z.grid):
        raise EstimationError("instrument matrix was built for a different panel")
    N, T = len(units), len(grid)
    Rd = T - 1
    cols, labels = [], []
    for name in model.regressors:
        x = dense[name]
        cols.append(np.concatenate([x[:, 1:] - x[:, :-1], x], axis=1))
        labels.append(name)
    if model.time_dummies:
        D = time_dummy_matrix(grid, Z.dummy_years)
        dD = D[1:] - D[:-1]
        for j, yr in enumerate(Z.dummy_years):
            cols.append(np.broadcast_to(np.concatenate([dD[:, j], D[:, j]]), (N, Rd + T)))
            labels.append(f"yr{yr}")
    if model.constant_in_levels:
        cols.append(np.broadcast_to(np.concatenate([np.zeros(Rd), np.ones(T)]), (N, Rd + T)))
        labels.append(CONST)
    usable = Z.usable
    X = np.stack(cols, axis=2)
    X = np.where(usable[:, :, None], X, 0.0)
    yv = dense[model.dependent]
    y = np.concatenate([yv[:, 1:] - yv[:, :-1], yv], axis=1)
    y = np.where(usable, y, 0.0)
    H = np.zeros((Rd + T, Rd + T))
    H[:Rd, :Rd] = first_difference_h(Rd)
    H[Rd:, Rd:] = np.eye(T)
    present_rows = int(ds.n_obs)
    deleted = present_rows - int(level_ok.sum())
    return GmmSystem(X, y, Z.values, H, usable, labels, list(Z.labels), units,
                     Z.row_eq, Z.row_year, deleted)


# -- fits -----------------------------------------------------------------


@dataclass
class GmmFit:
    """Result of a one- or two-step fit.

    ``vcov_one_step`` is the unit-clustered robust one-step covariance;
    ``vcov_two_step`` the conventional two-step covariance and
    ``vcov_corrected`` its Windmeijer-corrected version (two-step fits
    only, after :func:`windmeijer_correct`).
    """

    params: np.ndarray
    labels: list[str]
    step: int
    system: GmmSystem
    residuals: np.ndarray                 # (N, R), zero on unusable rows
    weight_matrix: np.ndarray             # weighting used by this step
    bread: np.ndarray                     # (X'Z W Z'X)^-1 for that weighting
    instrument_rank: int
    vcov_one_step: np.ndarray | None = None
    vcov_two_step: np.ndarray | None = None
    vcov_corrected: np.ndarray | None = None
    weight_matrix_stage2: np.ndarray | None = None
    first_step: "GmmFit | None" = None
    notes: list[str] = field(default_factory=list)

    @property
    def pi_hat(self):
        return self.params

    @property
    def cov(self) -> np.ndarray:
        """Best available covariance: corrected, else two-step, else robust one-step."""
        for v in (self.vcov_corrected, self.vcov_two_step, self.vcov_one_step):
            if v is not None:
                return v
        raise EstimationError("fit carries no covariance")

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0, None))

    @property
    def instrument_count(self) -> int:
        return self.system.n_instruments

    @property
    def unit_count(self) -> int:
        return self.system.X.shape[0]

    @property
    def equation_counts(self) -> tuple[int, int]:
        u = self.system.usable
        d = self.system.row_eq == DIFF
        return int(u[:, d].sum()), int(u[:, ~d].sum())

    @property
    def nobs(self) -> int:
        """Level observations used (the conventional observation count)."""
        return self.equation_counts[1] if (self.system.row_eq == LEVEL).any() else self.equation_counts[0]

    @property
    def residuals_diff(self):
        return self.residuals[:, self.system.row_eq == DIFF]

    @property
    def residuals_level(self):
        return self.residuals[:, self.system.row_eq == LEVEL]

    def coef(self, label):
        return float(self.params[self.labels.index(label)])

    def se(self, label):
        return float(self.std_errors[self.labels.index(label)])

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"coef": self.params, "se": self.std_errors}, index=self.labels)


def _solve(system: GmmSystem, W):
    M = system.ZX.T @ W @ system.ZX
    B = inv_psd(M, system.x_labels, "X'Z W Z'X")
    # least squares on W^(1/2) Z'X avoids squaring its condition number;
    # exactly identified systems then zero the moments to rounding
    lam, vec = np.linalg.eigh(0.5 * (W + W.T))
    R = (vec * np.sqrt(np.clip(lam, 0, None))).T
    beta = np.linalg.lstsq(R @ system.ZX, R @ system.Zy, rcond=None)[0]
    return beta, B


def one_step(system: GmmSystem) -> GmmFit:
    if system.n_instruments < system.n_params:
        raise EstimationError("fewer instruments than coefficients",
                              instruments=system.n_instruments, coefficients=system.n_params)
    if system.usable.sum() < system.n_params:
        raise EstimationError("fewer usable equations than coefficients",
                              equations=int(system.usable.sum()), coefficients=system.n_params)
    W1, rank = pinv_psd(system.zhz())
    beta, B = _solve(system, W1)
    e = system.residuals(beta)
    G = system.unit_moments(e)
    S = G.T @ G
    ZXB = system.ZX @ B
    V = ZXB.T @ W1 @ S @ W1 @ ZXB
    return GmmFit(beta, list(system.x_labels), 1, system, e, W1, B, rank,
                  vcov_one_step=0.5 * (V + V.T))


def two_step(system: GmmSystem, fit1: GmmFit) -> GmmFit:
    scale = max(float(np.abs(system.y).max()), np.finfo(float).tiny)
    if np.abs(fit1.residuals).max() <= 1e-12 * scale:
        raise SingularMatrixError("second-step weighting matrix is zero (one-step residuals vanish)",
                                  labels=system.z_labels)
    G1 = system.unit_moments(fit1.residuals)
    S1 = G1.T @ G1
    W2, rank = pinv_psd(S1)
    if rank < system.n_params:
        raise SingularMatrixError(
            f"second-step weighting matrix has rank {rank} < {system.n_params} coefficients",
            labels=system.z_labels)
    notes = []
    if rank < system.n_instruments:
        notes.append(f"second-step weighting matrix pseudo-inverted (rank {rank} of {system.n_instruments})")
    beta, B = _solve(system, W2)
    e = system.residuals(beta)
    return GmmFit(beta, list(system.x_labels), 2, system, e, W2, B, rank,
                  vcov_one_step=fit1.vcov_one_step, vcov_two_step=B,
                  weight_matrix_stage2=W2, first_step=fit1, notes=notes)


def windmeijer(system: GmmSystem, fit2: GmmFit) -> GmmFit:
    fit1 = fit2.first_step
    if fit2.step != 2 or fit1 is None:
        raise EstimationError("Windmeijer correction needs a two-step fit")
    W2, V2, V1 = fit2.weight_matrix, fit2.vcov_two_step, fit1.vcov_one_step
    G1 = system.unit_moments(fit1.residuals)
    q = W2 @ system.unit_moments(fit2.residuals).sum(axis=0)
    A = np.einsum("nrl,nrk->nkl", system.Z, system.X)          # per-unit Z_i'x_ij
    vec = np.einsum("nkl,n->kl", A, G1 @ q) + (A @ q).T @ G1     # (K, L)
    P = V2 @ system.ZX.T @ W2
    D = P @ vec.T
    if not np.all(np.isfinite(D)):
        raise EstimationError("non-finite Windmeijer derivative")
    Vc = V2 + D @ V2 + V2 @ D.T + D @ V1 @ D.T
    return replace(fit2, vcov_corrected=0.5 * (Vc + Vc.T))


# -- dataset-level entry points -------------------------------------------


def _system_for(ds, model, Z):
    return build_system(ds, model, Z)


def estimate_one_step(ds: PanelDataset, model: ModelSpec, Z: InstrumentMatrix) -> GmmFit:
    """One-step System-GMM with the first-difference ``H`` weighting."""
    fit = one_step(_system_for(ds, model, Z))
    fit.notes.append(f"listwise deletion removed {fit.system.deleted} observation(s)")
    return fit


def _check_same(fit, model, Z):
    if model is not None and list(fit.system.x_labels[:len(model.regressors)]) != list(model.regressors):
        raise EstimationError("fit was produced for a different model")
    if Z is not None and list(Z.labels) != list(fit.system.z_labels):
        raise EstimationError("fit was produced with a different instrument matrix")


def estimate_two_step(fit1: GmmFit, ds=None, model: ModelSpec | None = None,
                      Z: InstrumentMatrix | None = None) -> GmmFit:
    """Two-step estimate with weighting from the one-step residuals."""
    _check_same(fit1, model, Z)
    return two_step(fit1.system, fit1)


def windmeijer_correct(fit2: GmmFit, ds=None, model: ModelSpec | None = None,
                       Z: InstrumentMatrix | None = None) -> GmmFit:
    """Finite-sample corrected two-step covariance."""
    _check_same(fit2, model, Z)
    return windmeijer(fit2.system, fit2)


def fit_system_gmm(ds: PanelDataset, model: ModelSpec, Z: InstrumentMatrix) -> GmmFit:
    """One-step, two-step and correction in sequence."""
    fit1 = estimate_one_step(ds, model, Z)
    return windmeijer_correct(estimate_two_step(fit1))
