"""Hyperparameter grids and validation-loss model selection.

The search space is a cross of bandwidth grids around the median heuristic
and a regularisation axis: iteration count for the iterated regulariser,
penalty weight for the closed form and the ridge baselines, nothing for the
plain smoother.  Every grid point is scored by the two-term empirical loss
on the validation split (shared auxiliary sample) and the minimiser is
returned with deterministic lexicographic tie-breaking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .estimators import FittedCDE, cdo_fit, kmd_fit, nw_fit
from .kernels import BandwidthGrid, KernelConfig, kx_cross, ky_cross, median_heuristic
from .operators import AuxiliaryGrid, CoefficientRep, FitContext, PairedDataset
from .regularizers import StepPolicy, gram_eigh, landweber_path, tikhonov_fit

__all__ = [
    "HyperGrid",
    "Grids",
    "SelectionResult",
    "build_grids",
    "select",
    "SELECTION_KINDS",
]

logger = logging.getLogger(__name__)

SELECTION_KINDS = ("grs-fixed", "grs-els", "grs-tikhonov", "nw", "kmd", "cdo")


@dataclass(frozen=True)
class HyperGrid:
    """Grid-shape parameters: ratios, half-widths, and iteration budgets."""

    p_x: float = 2.0
    p_y: float = 1.6
    p_lam: float = 3.0
    L_x: int = 3
    L_y: int = 3
    L_lam: int = 6
    T1: int = 40
    T2: int = 10

    def __post_init__(self):
        for name in ("p_x", "p_y", "p_lam"):
            if not getattr(self, name) > 1.0:
                raise ValueError(f"{name} must exceed 1")
        for name in ("L_x", "L_y", "L_lam"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("T1", "T2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass(frozen=True)
class Grids:
    """Concrete hyperparameter grids built from a training sample."""

    h_x: np.ndarray
    h_x_factors: np.ndarray
    h_y: np.ndarray
    lam: np.ndarray
    hyper: HyperGrid

    @property
    def n_hx(self) -> int:
        return self.h_x.shape[0]

    @property
    def n_hy(self) -> int:
        return self.h_y.shape[0]


def build_grids(train: PairedDataset, hyper: HyperGrid = HyperGrid()) -> Grids:
    """Median-heuristic bandwidth grids and the geometric penalty grid.

    The covariate grid scales the whole median vector by a common factor;
    the penalty grid is p_lam**(-l) for l = 0..L_lam, decreasing from 1.
    """
    m_x = median_heuristic(train.xs)
    m_y = median_heuristic(train.ys)
    gx = BandwidthGrid(base=np.atleast_1d(m_x), ratio=hyper.p_x, half_width=hyper.L_x)
    gy = BandwidthGrid(base=m_y, ratio=hyper.p_y, half_width=hyper.L_y)
    lam = hyper.p_lam ** (-np.arange(hyper.L_lam + 1, dtype=float))
    return Grids(h_x=np.atleast_2d(gx.values), h_x_factors=gx.factors,
                 h_y=np.asarray(gy.values, dtype=float), lam=lam, hyper=hyper)


@dataclass(frozen=True)
class SelectionResult:
    """Minimiser of the validation-loss table for one estimator kind.

    ``losses`` has one entry per grid point: (h_x, h_y) for the plain
    smoother, (h_x, h_y, t) for the iterated regulariser, (h_x, h_y, lam)
    otherwise.  ``ties`` records every index attaining the minimum; the
    reported ``best_index`` is the lexicographically smallest.
    """

    kind: str
    losses: np.ndarray
    best_index: tuple
    params: dict
    fit: FittedCDE
    ties: tuple = field(default_factory=tuple)

    @property
    def best_loss(self) -> float:
        return float(self.losses[self.best_index])


class _GRSValScorer:
    """Validation loss of a coefficient pair (A, beta) without refitting.

    Precomputes the cross-kernel matrices from the validation split to the
    training atoms once per bandwidth configuration, so a whole iteration
    path is scored with two small matrix products per step.
    """

    def __init__(self, ctx: FitContext, val: PairedDataset, f0: str):
        train, aux, cfg = ctx.train, ctx.aux, ctx.cfg
        self.n = train.n
        self.Kv = kx_cross(val.xs, train.xs, cfg.h_x)
        self.KU = ctx.gram.K_U
        self.Wg = ky_cross(val.ys, aux.us, cfg.h_y)
        q_train = aux.q_density(train.ys)
        self.Bv = self.Kv @ (ctx.gram.K_UY * q_train[None, :]).T / train.n
        kyy_vt = ky_cross(val.ys, train.ys, cfg.h_y)
        self.bv_pts = np.sum(self.Kv * (kyy_vt * q_train[None, :]), axis=1) / train.n
        self.q_val = aux.q_density(val.ys)
        if f0 == "qu":
            self.f0_node = aux.q_u
            self.f0_pts = aux.q_density(val.ys)
        else:
            self.f0_node = 0.0
            self.f0_pts = 0.0

    def loss(self, A: np.ndarray, beta: float) -> float:
        P = self.Kv @ A
        node = P @ self.KU + (beta * self.n) * self.Bv + self.f0_node
        pts = np.sum(P * self.Wg, axis=1) + (beta * self.n) * self.bv_pts + self.f0_pts
        return float(np.mean(node**2) - 2.0 * np.mean(pts * self.q_val))

    def loss_rep(self, rep: CoefficientRep) -> float:
        return self.loss(rep.A, rep.beta)


def _cfg(grids: Grids, i: int, j: int) -> KernelConfig:
    return KernelConfig(h_x=grids.h_x[i], h_y=float(grids.h_y[j]))


def _scan_nw(train, val, aux, grids, f0):
    losses = np.full((grids.n_hx, grids.n_hy), np.inf)
    for i in range(grids.n_hx):
        for j in range(grids.n_hy):
            try:
                fit = nw_fit(train, aux, _cfg(grids, i, j))
                losses[i, j] = fit.dhat_score(val)
            except Exception as exc:  # noqa: BLE001 - grid point marked unusable
                logger.warning("nw grid point (%d, %d) failed: %s", i, j, exc)
    return losses


def _scan_ridge(kind, train, val, aux, grids, f0):
    losses = np.full((grids.n_hx, grids.n_hy, grids.lam.size), np.inf)
    for i in range(grids.n_hx):
        for j in range(grids.n_hy):
            cfg = _cfg(grids, i, j)
            for k, lam in enumerate(grids.lam):
                try:
                    if kind == "kmd":
                        fit = kmd_fit(train, aux, cfg, lam)
                    else:
                        fit = cdo_fit(train, aux, cfg, lam, lam)
                    losses[i, j, k] = fit.dhat_score(val)
                except Exception as exc:  # noqa: BLE001
                    logger.warning("%s grid point (%d, %d, %d) failed: %s", kind, i, j, k, exc)
    return losses


def _scan_tikhonov(train, val, aux, grids, f0):
    losses = np.full((grids.n_hx, grids.n_hy, grids.lam.size), np.inf)
    for i in range(grids.n_hx):
        for j in range(grids.n_hy):
            try:
                ctx = FitContext(train=train, aux=aux, cfg=_cfg(grids, i, j))
                eig = gram_eigh(ctx.gram)
                scorer = _GRSValScorer(ctx, val, "zero")
            except Exception as exc:  # noqa: BLE001
                logger.warning("tikhonov bandwidth point (%d, %d) failed: %s", i, j, exc)
                continue
            for k, lam in enumerate(grids.lam):
                try:
                    rep = tikhonov_fit(ctx.bhat, ctx.gram, lam, eig=eig)
                    losses[i, j, k] = scorer.loss_rep(rep)
                except Exception as exc:  # noqa: BLE001
                    logger.warning("tikhonov grid point (%d, %d, %d) failed: %s", i, j, k, exc)
    return losses


def _scan_landweber(kind, train, val, aux, grids, f0):
    T = grids.hyper.T1 if kind == "grs-fixed" else grids.hyper.T2
    policy = StepPolicy.fixed() if kind == "grs-fixed" else StepPolicy.exact_line_search()
    losses = np.full((grids.n_hx, grids.n_hy, T), np.inf)
    for i in range(grids.n_hx):
        for j in range(grids.n_hy):
            try:
                ctx = FitContext(train=train, aux=aux, cfg=_cfg(grids, i, j))
                scorer = _GRSValScorer(ctx, val, f0)
                reps = landweber_path(f0, ctx, policy, T)
                for t, rep in enumerate(reps, start=1):
                    losses[i, j, t - 1] = scorer.loss_rep(rep)
            except Exception as exc:  # noqa: BLE001
                logger.warning("%s bandwidth point (%d, %d) failed: %s", kind, i, j, exc)
    return losses


def _refit(kind, train, val, aux, grids, f0, idx) -> tuple[FittedCDE, dict]:
    i, j = idx[0], idx[1]
    cfg = _cfg(grids, i, j)
    params = {"h_x": cfg.h_x, "h_x_factor": float(grids.h_x_factors[i]), "h_y": cfg.h_y}
    if kind == "nw":
        return nw_fit(train, aux, cfg), params
    ctx = FitContext(train=train, aux=aux, cfg=cfg)
    if kind == "grs-tikhonov":
        lam = float(grids.lam[idx[2]])
        rep = tikhonov_fit(ctx.bhat, ctx.gram, lam)
        params["lam"] = lam
        fit = FittedCDE(kind="GRS-Tikhonov", ctx=ctx, params=params, state={"rep": rep})
        return fit, params
    if kind in ("grs-fixed", "grs-els"):
        t = idx[2] + 1
        policy = StepPolicy.fixed() if kind == "grs-fixed" else StepPolicy.exact_line_search()
        reps = landweber_path(f0, ctx, policy, t)
        params["t"] = t
        params["step"] = "fixed" if kind == "grs-fixed" else "els"
        fit = FittedCDE(kind="GRS-Landweber", ctx=ctx, params=params, state={"rep": reps[-1]})
        return fit, params
    lam = float(grids.lam[idx[2]])
    params["lam"] = lam
    if kind == "kmd":
        return kmd_fit(train, aux, cfg, lam), params
    return cdo_fit(train, aux, cfg, lam, lam), params


_SCANNERS = {
    "nw": _scan_nw,
    "kmd": lambda *a: _scan_ridge("kmd", *a),
    "cdo": lambda *a: _scan_ridge("cdo", *a),
    "grs-tikhonov": _scan_tikhonov,
    "grs-fixed": lambda *a: _scan_landweber("grs-fixed", *a),
    "grs-els": lambda *a: _scan_landweber("grs-els", *a),
}


def select(kind: str, train: PairedDataset, val: PairedDataset, aux: AuxiliaryGrid,
           grids: Grids, f0: str = "qu") -> SelectionResult:
    """Scan the grid for one estimator kind and return the refitted minimiser.

    Failed grid points carry an infinite loss; ties are broken by ascending
    grid index.  Raises if every grid point failed.
    """
    if kind not in _SCANNERS:
        raise ValueError(f"unknown selection kind {kind!r}; expected one of {SELECTION_KINDS}")
    losses = _SCANNERS[kind](train, val, aux, grids, f0)
    flat = int(np.argmin(losses))
    best_index = np.unravel_index(flat, losses.shape)
    best = losses[best_index]
    if not np.isfinite(best):
        raise RuntimeError(f"every grid point failed for kind {kind!r}")
    ties = tuple(tuple(int(v) for v in t) for t in zip(*np.nonzero(losses == best)))
    fit, params = _refit(kind, train, val, aux, grids, f0, best_index)
    losses.setflags(write=False)
    return SelectionResult(kind=kind, losses=losses,
                           best_index=tuple(int(v) for v in best_index),
                           params=params, fit=fit, ties=ties)
