"""Regularised fits: Tikhonov closed form and the Landweber iteration.

Both back-ends minimise (exactly or iteratively) the empirical quadratic
``Dhat(f) + penalty`` over the representer span.  The Tikhonov coefficients
come from a Kronecker eigen-solve of the two small Gram blocks; the Landweber
iteration performs gradient descent on ``Dhat``,

    f_{t+1} = f_t - delta_t * (2 Lhat f_t - 2 bhat),

so a step of size ``delta_t`` applies the relaxation ``2 delta_t`` to the
operator residual.  ``delta_t`` is either the fixed value ``1/kappa^2`` (the
reciprocal kernel bound, below the reciprocal Lipschitz constant of the
gradient, so ``Dhat`` never increases) or the exact-line-search value
``delta2``, the step that exactly minimises the H-norm of the next residual.
In coefficient form one step reads ``A <- A - (2 delta/n_z) F`` and
``beta <- beta + 2 delta/n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .kernels import GramFactors, kappa_sq
from .operators import (
    CoefficientRep,
    FitContext,
    apply_Lhat,
    dhat_from_values,
    f0_node_values,
    f0_point_values,
    inner_emp,
    ky_cross,
    residual_hnorm_sq,
    znorm_sq,
)

__all__ = [
    "ResidualConverged",
    "LandweberState",
    "StepPolicy",
    "gram_eigh",
    "tikhonov_fit",
    "landweber_init",
    "landweber_step",
    "step_delta2",
    "step_delta1",
    "landweber_path",
]

# Relative floor under which the line-search denominator counts as converged.
_CONVERGED_RTOL = 1e-14


class ResidualConverged(Exception):
    """The operator residual is numerically in the Gram null space."""


@dataclass(frozen=True)
class LandweberState:
    """State of the iteration after ``t`` steps.

    ``steps`` records the step sizes, so ``beta = 2 * sum(steps)/n``.
    ``F`` caches the node values of the current iterate.  ``res_hnorm_sq``
    and ``dhat_train`` hold per-step diagnostics when they were requested.
    """

    A: np.ndarray
    beta: float
    t: int
    steps: tuple
    F: np.ndarray
    res_hnorm_sq: tuple = ()
    dhat_train: tuple = ()

    def rep(self, f0) -> CoefficientRep:
        return CoefficientRep(f0=f0, A=self.A, beta=self.beta)


@dataclass(frozen=True)
class StepPolicy:
    """Step-size rule for the iteration.

    ``kind`` is ``"fixed"`` or ``"els"`` (exact line search).  For the fixed
    rule, ``step`` is the gradient-descent step size ``delta`` (the residual
    relaxation is ``2 delta``); ``None`` means the kernel-bound reciprocal
    ``1/kappa^2`` of the active config.  ``cap`` optionally bounds the step
    size (the line search is uncapped by default).
    """

    kind: str
    step: float | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "els"):
            raise ValueError("kind must be 'fixed' or 'els'")
        if self.kind == "fixed" and self.step is not None and not self.step >= 0.0:
            raise ValueError("fixed step must be nonnegative and finite")

    @classmethod
    def fixed(cls, step: float | None = None) -> "StepPolicy":
        return cls(kind="fixed", step=step)

    @classmethod
    def exact_line_search(cls, cap: float | None = None) -> "StepPolicy":
        return cls(kind="els", cap=cap)


def gram_eigh(gram: GramFactors):
    """Eigendecompositions ``(lam_x, Q_x, lam_u, Q_u)`` of the two Gram blocks."""
    if not (np.all(np.isfinite(gram.K_X)) and np.all(np.isfinite(gram.K_U))):
        raise ValueError("Gram blocks contain non-finite entries")
    lam_x, Q_x = np.linalg.eigh(gram.K_X)
    lam_u, Q_u = np.linalg.eigh(gram.K_U)
    return lam_x, Q_x, lam_u, Q_u


def tikhonov_fit(bhat: np.ndarray, gram: GramFactors, lam: float, eig=None) -> CoefficientRep:
    """Closed-form Tikhonov coefficients.

    Solves ``A = -(4/lam) (2K + n_z lam I)^{-1} Bhat`` over the node grid via
    the Kronecker structure ``K = K_X (x) K_U``: with ``K_X = Qx Lx Qx'`` and
    ``K_U = Qu Lu Qu'``, the transformed coefficients are
    ``At[p, q] = -4 Bt[p, q] / (lam (2 Lx_p Lu_q + n_z lam))`` with
    ``Bt = Qx' Bhat Qu``.  The embedding coefficient is ``beta = 2/(n lam)``
    and the start function is zero.

    In this parametrisation the fit is the exact minimiser of the empirical
    loss plus ``(lam/2)`` times the squared H-norm over the representer span
    (equivalently, of twice the loss plus ``lam`` times the penalty).
    """
    lam = float(lam)
    if not lam > 0.0:
        raise ValueError("lam must be strictly positive")
    if eig is None:
        eig = gram_eigh(gram)
    lam_x, Q_x, lam_u, Q_u = eig
    bt = Q_x.T @ bhat @ Q_u
    at = (-4.0 / lam) * bt / (2.0 * np.outer(lam_x, lam_u) + gram.n_z * lam)
    A = Q_x @ at @ Q_u.T
    return CoefficientRep(f0="zero", A=A, beta=2.0 / (gram.n * lam))


def landweber_init(f0, ctx: FitContext) -> LandweberState:
    """Fresh state at ``t = 0`` with the start function's node values cached."""
    F = f0_node_values(f0, ctx.train.xs, ctx.aux)
    return LandweberState(A=np.zeros((ctx.n, ctx.n_u)), beta=0.0, t=0, steps=(), F=F)


def _residual(state: LandweberState, ctx: FitContext) -> np.ndarray:
    return apply_Lhat(state.F, ctx.gram) - ctx.bhat


def _els_quantities(R: np.ndarray, ctx: FitContext):
    zn = znorm_sq(R)
    LR = apply_Lhat(R, ctx.gram)
    den = inner_emp(LR, R)
    if zn == 0.0 or den <= 0.0 or den < _CONVERGED_RTOL * zn:
        raise ResidualConverged("line-search denominator is numerically zero")
    return zn, den


def step_delta2(state: LandweberState, ctx: FitContext) -> float:
    """Exact-line-search step value ``znorm(R)^2 / (2 <Lhat R, R>_Z)``.

    Raises
    ------
    ResidualConverged
        If the denominator vanishes relative to the residual norm.
    """
    zn, den = _els_quantities(_residual(state, ctx), ctx)
    return zn / (2.0 * den)


def step_delta1(state: LandweberState, ctx: FitContext) -> float:
    """Diagnostic step value ``|Lhat f - bhat|_H^2 / (2 |Lhat f - bhat|_Z^2)``."""
    R = _residual(state, ctx)
    zn = znorm_sq(R)
    if zn == 0.0:
        raise ResidualConverged("residual is identically zero at the nodes")
    h = residual_hnorm_sq(state.F, ctx.gram, ctx.aux, ctx.train.ys)
    return h / (2.0 * zn)


def _train_point_values(A: np.ndarray, beta: float, f0, ctx: FitContext) -> np.ndarray:
    gram, train, aux, cfg = ctx.gram, ctx.train, ctx.aux, ctx.cfg
    ky = ky_cross(train.ys, aux.us, cfg.h_y)
    pts = np.sum((gram.K_X @ A) * ky, axis=1)
    if beta != 0.0:
        q = aux.q_density(train.ys)
        pts += beta * np.sum(gram.K_X * (gram.K_YY * q[None, :]), axis=1)
    return pts + f0_point_values(f0, train.xs, train.ys, aux)


def landweber_step(state: LandweberState, ctx: FitContext, policy: StepPolicy,
                   f0="qu", diagnostics: bool = False) -> LandweberState:
    """One gradient-descent step ``f - delta * (2 Lhat f - 2 bhat)``.

    The cached node values update incrementally as ``F - 2 delta * R``, which
    equals recomputation from the new coefficients because node values are
    linear in ``(A, beta)``.

    Raises
    ------
    ResidualConverged
        Under the exact-line-search rule when the residual has numerically
        converged; the caller stops iterating.
    """
    R = _residual(state, ctx)
    if policy.kind == "fixed":
        delta = policy.step if policy.step is not None else 1.0 / kappa_sq(ctx.cfg)
    else:
        zn, den = _els_quantities(R, ctx)
        delta = zn / (2.0 * den)
    if policy.cap is not None:
        delta = min(delta, policy.cap)
    if not (np.isfinite(delta) and delta >= 0.0):
        raise ValueError("step size must be finite and nonnegative")
    gamma = 2.0 * delta
    A = state.A - (gamma / ctx.n_z) * state.F
    beta = state.beta + gamma / ctx.n
    F = state.F - gamma * R
    res_h, dh = state.res_hnorm_sq, state.dhat_train
    if diagnostics:
        res_h = res_h + (residual_hnorm_sq(F, ctx.gram, ctx.aux, ctx.train.ys),)
        pts = _train_point_values(A, beta, f0, ctx)
        dh = dh + (dhat_from_values(F, pts, ctx.train.ys, ctx.aux),)
    return LandweberState(A=A, beta=beta, t=state.t + 1, steps=state.steps + (delta,),
                          F=F, res_hnorm_sq=res_h, dhat_train=dh)


def landweber_path(f0, ctx: FitContext, policy: StepPolicy, T: int,
                   diagnostics: bool = False,
                   observer: Callable[[LandweberState, LandweberState], None] | None = None):
    """Run up to ``T`` steps and return one coefficient snapshot per step.

    Stops early when the exact line search signals a converged residual, so
    the returned list may be shorter than ``T``.  ``observer`` (if given)
    receives ``(previous_state, new_state)`` after every step.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    state = landweber_init(f0, ctx)
    reps = []
    for _ in range(T):
        try:
            new_state = landweber_step(state, ctx, policy, f0=f0, diagnostics=diagnostics)
        except ResidualConverged:
            break
        if observer is not None:
            observer(state, new_state)
        reps.append(new_state.rep(f0))
        state = new_state
    return reps
