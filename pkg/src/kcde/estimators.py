"""Conditional density estimators: regularised fits and kernel baselines.

Four families share one fitted-model container:

* ``GRS-Tikhonov`` / ``GRS-Landweber``: representer-form fits produced by the
  closed-form and iterated regularisers.
* ``NW``: the ratio-of-kernel-density-estimates smoother, a convex
  combination of response kernels.
* ``KMD``: ridge-weighted response kernels,
  ``f(x, y) = sum_i w_i(x) k_Y(y, y_i)`` with
  ``w(x) = (K_X + n lam1 I)^{-1} k_X(x, X)``.
* ``CDO``: auxiliary-grid response kernels,
  ``f(x, y) = sum_j wt_j(x) k_Y(y, u_j)`` with
  ``wt(x) = (1/n_u^2) (K_U + lam2 I)^{-2} K_UY w(x)``.

All four evaluate raw (possibly signed) surfaces; an opt-in post-processing
step clips at zero and renormalises each covariate slice to integrate to one
over the auxiliary support.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datagen import even_aux, sample_aux
from .kernels import KernelConfig, kx_cross, ky_cross, median_heuristic
from .operators import (
    AuxiliaryGrid,
    CoefficientRep,
    FitContext,
    PairedDataset,
    dhat_from_values,
    eval_rep,
    rep_grid_values,
    rep_point_values,
)
from .regularizers import StepPolicy, landweber_path, tikhonov_fit

__all__ = [
    "FittedCDE",
    "grs_eval",
    "nw_fit",
    "nw_fit_eval",
    "nw_weights",
    "kmd_fit",
    "kmd_eval",
    "cdo_fit",
    "cdo_eval",
    "normalize_slice",
    "GRSConditionalDensity",
    "NadarayaWatsonConditionalDensity",
    "KernelMeanConditionalDensity",
    "CDOConditionalDensity",
]

GRS_KINDS = ("GRS-Tikhonov", "GRS-Landweber")
ALL_KINDS = GRS_KINDS + ("NW", "KMD", "CDO")

# Row sums of the covariate kernel below this are treated as vanished and the
# smoother falls back to uniform weights.
_FARFIELD_EPS = 1e-300

_DEFAULT_QUAD_POINTS = 512


@dataclass(frozen=True)
class FittedCDE:
    """A fitted conditional density estimator of any kind.

    ``params`` records the selected hyperparameters, ``state`` the
    kind-specific coefficients.  ``normalize`` switches ``pdf_grid`` and
    ``pdf_points`` to the clipped-and-renormalised surface; the raw surface
    stays available through ``raw_grid_values`` / ``raw_point_values``.
    """

    kind: str
    ctx: FitContext
    params: dict
    state: dict
    normalize: bool = False
    quad_points: int = _DEFAULT_QUAD_POINTS

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    def with_normalize(self, flag: bool) -> "FittedCDE":
        return replace(self, normalize=bool(flag))

    # -- raw surfaces -----------------------------------------------------

    def raw_grid_values(self, X, ygrid) -> np.ndarray:
        """Raw estimator values ``f(X[i], ygrid[j])`` as an (m, g) matrix."""
        ctx = self.ctx
        ygrid = np.asarray(ygrid, dtype=float).reshape(-1)
        if self.kind in GRS_KINDS:
            return rep_grid_values(self.state["rep"], ctx.train, ctx.aux, ctx.cfg, X, ygrid)
        if self.kind == "NW":
            W = nw_weights(ctx.train, ctx.cfg, X)
            return W @ ky_cross(ctx.train.ys, ygrid, ctx.cfg.h_y)
        if self.kind == "KMD":
            W = self._ridge_weights(X)
            return W @ ky_cross(ctx.train.ys, ygrid, ctx.cfg.h_y)
        W = self._ridge_weights(X) @ self.state["M"].T
        return W @ ky_cross(ctx.aux.us, ygrid, ctx.cfg.h_y)

    def raw_point_values(self, X, Y) -> np.ndarray:
        """Raw estimator values ``f(X[i], Y[i])`` as an (m,) vector."""
        ctx = self.ctx
        Y = np.asarray(Y, dtype=float).reshape(-1)
        if self.kind in GRS_KINDS:
            return rep_point_values(self.state["rep"], ctx.train, ctx.aux, ctx.cfg, X, Y)
        if self.kind == "NW":
            W = nw_weights(ctx.train, ctx.cfg, X)
            return np.sum(W * ky_cross(Y, ctx.train.ys, ctx.cfg.h_y), axis=1)
        if self.kind == "KMD":
            W = self._ridge_weights(X)
            return np.sum(W * ky_cross(Y, ctx.train.ys, ctx.cfg.h_y), axis=1)
        W = self._ridge_weights(X) @ self.state["M"].T
        return np.sum(W * ky_cross(Y, ctx.aux.us, ctx.cfg.h_y), axis=1)

    def _ridge_weights(self, X) -> np.ndarray:
        kq = kx_cross(X, self.ctx.train.xs, self.ctx.cfg.h_x)
        return cho_solve(self.state["cho"], kq.T).T

    # -- normalisation-aware surfaces --------------------------------------

    def _slice_integrals(self, X) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.ctx.aux.support
        grid = np.linspace(lo, hi, self.quad_points)
        vals = np.maximum(self.raw_grid_values(X, grid), 0.0)
        return np.trapezoid(vals, grid, axis=1), grid

    def pdf_grid(self, X, ygrid) -> np.ndarray:
        raw = self.raw_grid_values(X, ygrid)
        if not self.normalize:
            return raw
        integrals, _ = self._slice_integrals(X)
        out = np.maximum(raw, 0.0)
        ok = integrals > 1e-12
        out[ok] /= integrals[ok, None]
        if not np.all(ok):
            out[~ok] = self.ctx.aux.q_density(np.asarray(ygrid, dtype=float).reshape(-1))[None, :]
        return out

    def pdf_points(self, X, Y) -> np.ndarray:
        raw = self.raw_point_values(X, Y)
        if not self.normalize:
            return raw
        integrals, _ = self._slice_integrals(X)
        out = np.maximum(raw, 0.0)
        ok = integrals > 1e-12
        out[ok] /= integrals[ok]
        out[~ok] = self.ctx.aux.q_density(np.asarray(Y, dtype=float).reshape(-1))[~ok]
        return out

    def dhat_score(self, eval_data: PairedDataset) -> float:
        """Two-term empirical loss of the raw estimator on an evaluation split."""
        aux = self.ctx.aux
        node_vals = self.raw_grid_values(eval_data.xs, aux.us)
        point_vals = self.raw_point_values(eval_data.xs, eval_data.ys)
        return dhat_from_values(node_vals, point_vals, eval_data.ys, aux)


def grs_eval(fit: FittedCDE, x, y) -> float:
    """Pointwise evaluation of a representer-form fit (delegation)."""
    if fit.kind not in GRS_KINDS:
        raise ValueError(f"grs_eval requires a GRS fit, got kind {fit.kind!r}")
    ctx = fit.ctx
    return eval_rep(fit.state["rep"], ctx.train, ctx.aux, ctx.cfg, x, y)


def nw_weights(train: PairedDataset, cfg: KernelConfig, X) -> np.ndarray:
    """Normalised covariate-kernel weights with a far-field uniform fallback."""
    rows = kx_cross(X, train.xs, cfg.h_x)
    sums = rows.sum(axis=1)
    far = sums < _FARFIELD_EPS
    if np.any(far):
        rows[far] = 1.0
        sums[far] = float(train.n)
    return rows / sums[:, None]


def nw_fit(train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig,
           normalize: bool = False) -> FittedCDE:
    ctx = FitContext(train=train, aux=aux, cfg=cfg)
    return FittedCDE(kind="NW", ctx=ctx, params={"h_x": cfg.h_x, "h_y": cfg.h_y},
                     state={}, normalize=normalize)


def nw_fit_eval(train: PairedDataset, cfg: KernelConfig, x, y) -> float:
    """One-shot smoother evaluation ``sum_i w_i(x) k_Y(y, y_i)``."""
    X = np.asarray(x, dtype=float).reshape(1, -1)
    W = nw_weights(train, cfg, X)
    return float(W[0] @ ky_cross([float(y)], train.ys, cfg.h_y)[0])


def kmd_fit(train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig, lam1: float,
            normalize: bool = False) -> FittedCDE:
    """Ridge-weighted response-kernel estimator."""
    lam1 = float(lam1)
    if not lam1 > 0.0:
        raise ValueError("lam1 must be strictly positive")
    ctx = FitContext(train=train, aux=aux, cfg=cfg)
    K = ctx.gram.K_X + train.n * lam1 * np.eye(train.n)
    cho = cho_factor(K)
    return FittedCDE(kind="KMD", ctx=ctx,
                     params={"h_x": cfg.h_x, "h_y": cfg.h_y, "lam1": lam1},
                     state={"cho": cho}, normalize=normalize)


def kmd_eval(fit: FittedCDE, x, y) -> float:
    if fit.kind != "KMD":
        raise ValueError(f"kmd_eval requires a KMD fit, got kind {fit.kind!r}")
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(fit.raw_point_values(X, [float(y)])[0])


def cdo_fit(train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig, lam1: float,
            lam2: float, normalize: bool = False) -> FittedCDE:
    """Auxiliary-grid response-kernel estimator sharing the ridge weights."""
    lam1, lam2 = float(lam1), float(lam2)
    if not (lam1 > 0.0 and lam2 > 0.0):
        raise ValueError("lam1 and lam2 must be strictly positive")
    ctx = FitContext(train=train, aux=aux, cfg=cfg)
    K = ctx.gram.K_X + train.n * lam1 * np.eye(train.n)
    cho = cho_factor(K)
    cho_u = cho_factor(ctx.gram.K_U + lam2 * np.eye(aux.n_u))
    M = cho_solve(cho_u, cho_solve(cho_u, ctx.gram.K_UY)) / aux.n_u**2
    return FittedCDE(kind="CDO", ctx=ctx,
                     params={"h_x": cfg.h_x, "h_y": cfg.h_y, "lam1": lam1, "lam2": lam2},
                     state={"cho": cho, "M": M}, normalize=normalize)


def cdo_eval(fit: FittedCDE, x, y) -> float:
    if fit.kind != "CDO":
        raise ValueError(f"cdo_eval requires a CDO fit, got kind {fit.kind!r}")
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(fit.raw_point_values(X, [float(y)])[0])


def normalize_slice(fit: FittedCDE, x, quad_points: int = _DEFAULT_QUAD_POINTS):
    """Return the clipped-and-renormalised density slice at covariate ``x``.

    The slice integral is a composite trapezoid rule over the auxiliary
    support; if it vanishes (entirely nonpositive slice) the uniform density
    on the support is returned instead.
    """
    lo, hi = fit.ctx.aux.support
    X = np.asarray(x, dtype=float).reshape(1, -1)
    grid = np.linspace(lo, hi, quad_points)
    vals = np.maximum(fit.raw_grid_values(X, grid)[0], 0.0)
    integral = float(np.trapezoid(vals, grid))
    if integral <= 1e-12:
        q = fit.ctx.aux

        def uniform(y):
            return q.q_density(y)

        return uniform

    def density(y):
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        raw = np.maximum(fit.raw_grid_values(X, y_arr)[0], 0.0) / integral
        return raw if np.ndim(y) else float(raw[0])

    return density


# ---------------------------------------------------------------------------
# Estimator-API wrappers


class _ConditionalDensityMixin:
    """Shared prediction surface for fitted conditional density models."""

    def pdf(self, X, Y) -> np.ndarray:
        """Density estimates at paired covariates and responses."""
        check_is_fitted(self, "fitted_")
        X = check_array(np.asarray(X, dtype=float), ensure_2d=True)
        Y = np.asarray(Y, dtype=float).reshape(-1)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y must have the same number of rows")
        return self.fitted_.pdf_points(X, Y)

    def pdf_grid(self, X, ygrid) -> np.ndarray:
        """Density estimates over a shared response grid, one row per covariate."""
        check_is_fitted(self, "fitted_")
        X = check_array(np.asarray(X, dtype=float), ensure_2d=True)
        return self.fitted_.pdf_grid(X, ygrid)

    def _resolve_inputs(self, X, y, aux, random_state, n_u, u_support, u_design):
        X, y = check_X_y(np.asarray(X, dtype=float), np.asarray(y, dtype=float),
                         ensure_2d=True, y_numeric=True)
        train = PairedDataset(xs=X, ys=y)
        if aux is None:
            support = u_support if u_support is not None else (float(y.min()), float(y.max()))
            if u_design == "even":
                aux = even_aux(support, n_u)
            elif u_design == "iid":
                aux = sample_aux(support, n_u, np.random.default_rng(random_state))
            else:
                raise ValueError("u_design must be 'even' or 'iid'")
        return train, aux

    def _resolve_cfg(self, train, h_x, h_y):
        hx = median_heuristic(train.xs) if h_x is None else h_x
        hy = median_heuristic(train.ys) if h_y is None else h_y
        return KernelConfig(h_x=np.broadcast_to(np.atleast_1d(hx), (train.d,)), h_y=hy)


class GRSConditionalDensity(_ConditionalDensityMixin, BaseEstimator):
    """Regularised RKHS conditional density estimator.

    Parameters
    ----------
    regularizer : {"landweber", "tikhonov"}
    step : {"fixed", "els"}
        Step rule for the iterated regulariser: the kernel-bound reciprocal
        or exact line search.
    n_steps : int
        Iteration budget for the iterated regulariser.
    lam : float
        Penalty weight for the closed-form regulariser.
    h_x, h_y : bandwidths; None selects the median heuristic from the
        training sample.
    f0 : {"qu", "zero"}
        Start function of the iteration.
    n_u : int
        Auxiliary sample size when no auxiliary grid is passed to ``fit``.
    u_support : tuple or None
        Auxiliary support; None uses the training response range.
    u_design : {"even", "iid"}
        Evenly spaced auxiliary points (default) or i.i.d. uniform draws
        seeded by ``random_state``.
    """

    def __init__(self, regularizer="landweber", step="els", n_steps=10, lam=1.0,
                 h_x=None, h_y=None, f0="qu", n_u=50, u_support=None,
                 u_design="even", normalize=False, random_state=None):
        self.regularizer = regularizer
        self.step = step
        self.n_steps = n_steps
        self.lam = lam
        self.h_x = h_x
        self.h_y = h_y
        self.f0 = f0
        self.n_u = n_u
        self.u_support = u_support
        self.u_design = u_design
        self.normalize = normalize
        self.random_state = random_state

    def fit(self, X, y, aux: AuxiliaryGrid | None = None):
        train, aux = self._resolve_inputs(X, y, aux, self.random_state, self.n_u,
                                          self.u_support, self.u_design)
        cfg = self._resolve_cfg(train, self.h_x, self.h_y)
        ctx = FitContext(train=train, aux=aux, cfg=cfg)
        if self.regularizer == "tikhonov":
            rep = tikhonov_fit(ctx.bhat, ctx.gram, self.lam)
            kind, sel = "GRS-Tikhonov", {"lam": float(self.lam)}
        elif self.regularizer == "landweber":
            policy = StepPolicy.fixed() if self.step == "fixed" else StepPolicy.exact_line_search()
            reps = landweber_path(self.f0, ctx, policy, self.n_steps)
            if not reps:
                rep = CoefficientRep(f0=self.f0, A=np.zeros((train.n, aux.n_u)), beta=0.0)
            else:
                rep = reps[-1]
            kind, sel = "GRS-Landweber", {"step": self.step, "t": len(reps)}
        else:
            raise ValueError("regularizer must be 'landweber' or 'tikhonov'")
        params = {"h_x": cfg.h_x, "h_y": cfg.h_y, **sel}
        self.fitted_ = FittedCDE(kind=kind, ctx=ctx, params=params,
                                 state={"rep": rep}, normalize=self.normalize)
        self.n_features_in_ = train.d
        return self


class NadarayaWatsonConditionalDensity(_ConditionalDensityMixin, BaseEstimator):
    """Ratio-of-kernel-density-estimates conditional density smoother."""

    def __init__(self, h_x=None, h_y=None, n_u=50, u_support=None,
                 u_design="even", normalize=False, random_state=None):
        self.h_x = h_x
        self.h_y = h_y
        self.n_u = n_u
        self.u_support = u_support
        self.u_design = u_design
        self.normalize = normalize
        self.random_state = random_state

    def fit(self, X, y, aux: AuxiliaryGrid | None = None):
        train, aux = self._resolve_inputs(X, y, aux, self.random_state, self.n_u,
                                          self.u_support, self.u_design)
        cfg = self._resolve_cfg(train, self.h_x, self.h_y)
        self.fitted_ = nw_fit(train, aux, cfg, normalize=self.normalize)
        self.n_features_in_ = train.d
        return self


class KernelMeanConditionalDensity(_ConditionalDensityMixin, BaseEstimator):
    """Ridge-weighted response-kernel conditional density estimator."""

    def __init__(self, lam1=1e-3, h_x=None, h_y=None, n_u=50, u_support=None,
                 u_design="even", normalize=False, random_state=None):
        self.lam1 = lam1
        self.h_x = h_x
        self.h_y = h_y
        self.n_u = n_u
        self.u_support = u_support
        self.u_design = u_design
        self.normalize = normalize
        self.random_state = random_state

    def fit(self, X, y, aux: AuxiliaryGrid | None = None):
        train, aux = self._resolve_inputs(X, y, aux, self.random_state, self.n_u,
                                          self.u_support, self.u_design)
        cfg = self._resolve_cfg(train, self.h_x, self.h_y)
        self.fitted_ = kmd_fit(train, aux, cfg, self.lam1, normalize=self.normalize)
        self.n_features_in_ = train.d
        return self


class CDOConditionalDensity(_ConditionalDensityMixin, BaseEstimator):
    """Auxiliary-grid response-kernel conditional density estimator."""

    def __init__(self, lam1=1e-3, lam2=1e-3, h_x=None, h_y=None, n_u=50,
                 u_support=None, u_design="even", normalize=False, random_state=None):
        self.lam1 = lam1
        self.lam2 = lam2
        self.h_x = h_x
        self.h_y = h_y
        self.n_u = n_u
        self.u_support = u_support
        self.u_design = u_design
        self.normalize = normalize
        self.random_state = random_state

    def fit(self, X, y, aux: AuxiliaryGrid | None = None):
        train, aux = self._resolve_inputs(X, y, aux, self.random_state, self.n_u,
                                          self.u_support, self.u_design)
        cfg = self._resolve_cfg(train, self.h_x, self.h_y)
        self.fitted_ = cdo_fit(train, aux, cfg, self.lam1, self.lam2, normalize=self.normalize)
        self.n_features_in_ = train.d
        return self
