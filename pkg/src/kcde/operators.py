"""Empirical operator algebra over the covariate-times-auxiliary node grid.

A sample ``(x_i, y_i), i = 1..n`` crossed with an auxiliary sample
``u_j, j = 1..n_u`` yields ``n_z = n * n_u`` nodes ``z = (x, u)``.  The
empirical kernel operator acts on node values as
``Lhat f = (1/n_z) * K_X F K_U`` and the empirical embedding has node matrix
``Bhat[p, q] = (1/n) * sum_l k_X(x_p, x_l) k_Y(u_q, y_l) q_U(y_l)``.  Fitted
functions live in representer form

    f(x, y) = f0(x, y) + sum_{p,q} A[p, q] k_X(x, x_p) k_Y(y, u_q)
              + beta * n * bhat(x, y)

and everything here evaluates such functions, their empirical norms, and the
two-term empirical loss used for model selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .kernels import GramFactors, KernelConfig, build_gram, kx_cross, ky_cross

__all__ = [
    "PairedDataset",
    "AuxiliaryGrid",
    "NodeGrid",
    "CoefficientRep",
    "FitContext",
    "bhat_matrix",
    "bhat_grid_values",
    "bhat_point_values",
    "f0_node_values",
    "f0_point_values",
    "eval_rep",
    "rep_grid_values",
    "rep_point_values",
    "eval_at_nodes",
    "apply_Lhat",
    "znorm_sq",
    "inner_emp",
    "dhat",
    "dhat_from_values",
    "residual_hnorm_sq",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PairedDataset:
    """An i.i.d. sample of covariate-response pairs.

    Attributes
    ----------
    xs : ndarray of shape (n, d)
    ys : ndarray of shape (n,)
    """

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.ndim != 2:
            raise ValueError("xs must be a (n, d) array")
        if xs.shape[0] != ys.shape[0]:
            raise ValueError("xs and ys must have the same number of rows")
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "xs", _readonly(xs))
        object.__setattr__(self, "ys", _readonly(ys))

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def d(self) -> int:
        return self.xs.shape[1]

    def subset(self, idx) -> "PairedDataset":
        return PairedDataset(self.xs[idx], self.ys[idx])


@dataclass(frozen=True)
class AuxiliaryGrid:
    """The auxiliary sample, its support interval, and the uniform density.

    ``q_u = 1/(u_hi - u_lo)`` is the value of the uniform density on the
    support; as a function of ``y`` the density clamps to zero outside it.
    """

    us: np.ndarray
    support: tuple[float, float]

    def __post_init__(self):
        us = np.asarray(self.us, dtype=float).reshape(-1)
        lo, hi = (float(self.support[0]), float(self.support[1]))
        if not lo < hi:
            raise ValueError("support interval must have positive width")
        if us.size == 0:
            raise ValueError("auxiliary grid must be nonempty")
        if np.any(us < lo) or np.any(us > hi):
            raise ValueError("all auxiliary points must lie inside the support")
        object.__setattr__(self, "us", _readonly(us))
        object.__setattr__(self, "support", (lo, hi))

    @property
    def n_u(self) -> int:
        return self.us.shape[0]

    @property
    def q_u(self) -> float:
        lo, hi = self.support
        return 1.0 / (hi - lo)

    def q_density(self, y) -> np.ndarray:
        """Uniform density on the support evaluated at ``y`` (0 outside)."""
        y = np.asarray(y, dtype=float)
        lo, hi = self.support
        return np.where((y >= lo) & (y <= hi), self.q_u, 0.0)


@dataclass(frozen=True)
class NodeGrid:
    """Cross product of covariate rows and auxiliary points, row-major.

    Node ``i = p * n_u + q`` (0-based) is ``(xs[p], us[q])``, so that in
    1-based arithmetic ``i1 = (p1 - 1) * n_u + q1`` with ``p1 = ceil(i1/n_u)``
    and ``q1 = i1 - n_u * floor((i1 - 1)/n_u)``.
    """

    xs: np.ndarray
    us: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        us = np.asarray(self.us, dtype=float).reshape(-1)
        object.__setattr__(self, "xs", _readonly(xs))
        object.__setattr__(self, "us", _readonly(us))

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def n_u(self) -> int:
        return self.us.shape[0]

    @property
    def n_z(self) -> int:
        return self.n * self.n_u

    def flat_index(self, p: int, q: int) -> int:
        if not (0 <= p < self.n and 0 <= q < self.n_u):
            raise IndexError("node indices out of range")
        return p * self.n_u + q

    def unflatten(self, i: int) -> tuple[int, int]:
        if not (0 <= i < self.n_z):
            raise IndexError("flat node index out of range")
        return divmod(i, self.n_u)

    def node(self, i: int) -> tuple[np.ndarray, float]:
        p, q = self.unflatten(i)
        return self.xs[p], float(self.us[q])


@dataclass(frozen=True)
class CoefficientRep:
    """A fitted function in representer form.

    ``f0`` is the start-function descriptor: ``"zero"``, ``"qu"`` (the
    uniform auxiliary density, clamped to its support), or a callable
    ``f0(X, Y) -> values`` over point arrays.  ``A`` is the (n, n_u) node
    coefficient matrix and ``beta`` scales the embedding atom ``n * bhat``.
    """

    f0: object
    A: np.ndarray
    beta: float

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2:
            raise ValueError("A must be a (n, n_u) matrix")
        if not np.all(np.isfinite(A)) or not np.isfinite(self.beta):
            raise ValueError("coefficients must be finite")
        if not (self.f0 in ("zero", "qu") or callable(self.f0)):
            raise ValueError("f0 must be 'zero', 'qu', or a callable")
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "beta", float(self.beta))


@dataclass(frozen=True)
class FitContext:
    """Training sample, auxiliary grid, and kernel config, with cached blocks."""

    train: PairedDataset
    aux: AuxiliaryGrid
    cfg: KernelConfig
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.train.n

    @property
    def n_u(self) -> int:
        return self.aux.n_u

    @property
    def n_z(self) -> int:
        return self.train.n * self.aux.n_u

    @property
    def gram(self) -> GramFactors:
        if "gram" not in self._cache:
            self._cache["gram"] = build_gram(self.train, self.aux, self.cfg)
        return self._cache["gram"]

    @property
    def bhat(self) -> np.ndarray:
        if "bhat" not in self._cache:
            self._cache["bhat"] = _readonly(bhat_matrix(self.gram, self.aux, self.train.ys))
        return self._cache["bhat"]


def bhat_matrix(gram: GramFactors, aux: AuxiliaryGrid, ys) -> np.ndarray:
    """Node-value matrix of the empirical embedding.

    ``Bhat[p, q] = (1/n) sum_l K_X[p, l] * K_UY[q, l] * q_U(y_l)`` where
    ``q_U`` clamps to zero outside the auxiliary support.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.shape[0] != gram.n:
        raise ValueError("ys length must match the Gram dimension")
    q = aux.q_density(ys)
    return gram.K_X @ (q[:, None] * gram.K_UY.T) / gram.n


def bhat_grid_values(train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig, X, ygrid,
                     kxq: np.ndarray | None = None) -> np.ndarray:
    """Embedding values ``bhat(X[i], ygrid[j])`` as an (m, g) matrix.

    ``kxq`` optionally supplies the precomputed cross matrix
    ``k_X(X[i], x_l)`` of shape (m, n).
    """
    if kxq is None:
        kxq = kx_cross(X, train.xs, cfg.h_x)
    q = aux.q_density(train.ys)
    return kxq @ (q[:, None] * ky_cross(train.ys, ygrid, cfg.h_y)) / train.n


def bhat_point_values(train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig, X, Y,
                      kxq: np.ndarray | None = None) -> np.ndarray:
    """Embedding values ``bhat(X[i], Y[i])`` as an (m,) vector."""
    if kxq is None:
        kxq = kx_cross(X, train.xs, cfg.h_x)
    q = aux.q_density(train.ys)
    return np.sum(kxq * (ky_cross(Y, train.ys, cfg.h_y) * q[None, :]), axis=1) / train.n


def f0_node_values(f0, xs, aux: AuxiliaryGrid) -> np.ndarray:
    """Start-function values on the grid ``xs x aux.us`` as an (m, n_u) matrix."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    m, n_u = xs.shape[0], aux.n_u
    if f0 == "zero":
        return np.zeros((m, n_u))
    if f0 == "qu":
        # auxiliary points always lie inside the support
        return np.full((m, n_u), aux.q_u)
    if isinstance(f0, str):
        raise ValueError(f"unknown start function {f0!r}; use 'zero', 'qu', or a callable")
    cols = np.repeat(xs, n_u, axis=0)
    rows = np.tile(aux.us, m)
    return np.asarray(f0(cols, rows), dtype=float).reshape(m, n_u)


def f0_point_values(f0, X, Y, aux: AuxiliaryGrid) -> np.ndarray:
    """Start-function values at point pairs as an (m,) vector."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if f0 == "zero":
        return np.zeros(Y.shape[0])
    if f0 == "qu":
        return aux.q_density(Y)
    if isinstance(f0, str):
        raise ValueError(f"unknown start function {f0!r}; use 'zero', 'qu', or a callable")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.asarray(f0(X, Y), dtype=float).reshape(-1)


def rep_grid_values(rep: CoefficientRep, train: PairedDataset, aux: AuxiliaryGrid,
                    cfg: KernelConfig, X, ygrid, kxq: np.ndarray | None = None) -> np.ndarray:
    """Representer values ``f(X[i], ygrid[j])`` as an (m, g) matrix."""
    ygrid = np.asarray(ygrid, dtype=float).reshape(-1)
    if kxq is None:
        kxq = kx_cross(X, train.xs, cfg.h_x)
    out = (kxq @ rep.A) @ ky_cross(aux.us, ygrid, cfg.h_y)
    if rep.beta != 0.0:
        out += (rep.beta * train.n) * bhat_grid_values(train, aux, cfg, X, ygrid, kxq=kxq)
    if rep.f0 == "qu":
        out += aux.q_density(ygrid)[None, :]
    elif callable(rep.f0):
        xs = np.asarray(X, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        cols = np.repeat(xs, ygrid.shape[0], axis=0)
        rows = np.tile(ygrid, xs.shape[0])
        out += np.asarray(rep.f0(cols, rows), dtype=float).reshape(out.shape)
    return out


def rep_point_values(rep: CoefficientRep, train: PairedDataset, aux: AuxiliaryGrid,
                     cfg: KernelConfig, X, Y, kxq: np.ndarray | None = None) -> np.ndarray:
    """Representer values ``f(X[i], Y[i])`` as an (m,) vector."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if kxq is None:
        kxq = kx_cross(X, train.xs, cfg.h_x)
    out = np.sum((kxq @ rep.A) * ky_cross(Y, aux.us, cfg.h_y), axis=1)
    if rep.beta != 0.0:
        out += (rep.beta * train.n) * bhat_point_values(train, aux, cfg, X, Y, kxq=kxq)
    out += f0_point_values(rep.f0, X, Y, aux)
    return out


def eval_rep(rep: CoefficientRep, train: PairedDataset, aux: AuxiliaryGrid,
             cfg: KernelConfig, x, y) -> float:
    """Pointwise representer evaluation ``f(x, y)``."""
    X = np.asarray(x, dtype=float).reshape(1, -1)
    return float(rep_point_values(rep, train, aux, cfg, X, [float(y)])[0])


def eval_at_nodes(rep: CoefficientRep, gram: GramFactors, aux: AuxiliaryGrid, ys,
                  bhat: np.ndarray | None = None, xs=None) -> np.ndarray:
    """Node values ``F = F0 + K_X A K_U + beta * n * Bhat`` on the fit grid."""
    if bhat is None:
        bhat = bhat_matrix(gram, aux, ys)
    if rep.A.shape != bhat.shape:
        raise ValueError("coefficient matrix does not match the node grid")
    F = gram.K_X @ rep.A @ gram.K_U + (rep.beta * gram.n) * bhat
    if rep.f0 == "qu":
        F += aux.q_u
    elif callable(rep.f0):
        if xs is None:
            raise ValueError("evaluating a callable f0 at the nodes requires xs")
        F += f0_node_values(rep.f0, xs, aux)
    return F


def apply_Lhat(F: np.ndarray, gram: GramFactors) -> np.ndarray:
    """Node values of the empirical operator applied to node values.

    ``(Lhat f)(z) = (1/n_z) sum_i k(z, z_i) f(z_i)`` factorises into
    ``(1/n_z) * K_X F K_U``.
    """
    if F.shape != (gram.n, gram.n_u):
        raise ValueError("node-value matrix has the wrong shape")
    return gram.K_X @ F @ gram.K_U / gram.n_z


def znorm_sq(F: np.ndarray) -> float:
    """Empirical squared Z-norm, the mean of squared node values."""
    F = np.asarray(F, dtype=float)
    if F.size == 0:
        raise ValueError("empty node-value matrix")
    return float(np.mean(F * F))


def inner_emp(F: np.ndarray, G: np.ndarray) -> float:
    """Empirical Z-inner product, the mean of elementwise products."""
    return float(np.mean(np.asarray(F) * np.asarray(G)))


def dhat_from_values(node_vals: np.ndarray, point_vals: np.ndarray, ys,
                     aux: AuxiliaryGrid) -> float:
    """Two-term empirical loss from precomputed values.

    ``Dhat(f) = (1/n_z) sum f(z_i)^2 - (2/n) sum f(x_i, y_i) q_U(y_i)``; the
    first sum runs over the evaluation nodes (rows of ``node_vals``), the
    second over the evaluation pairs.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1)
    point_vals = np.asarray(point_vals, dtype=float).reshape(-1)
    if point_vals.shape[0] != ys.shape[0]:
        raise ValueError("point values and responses must align")
    if point_vals.shape[0] == 0:
        raise ValueError("empty evaluation set")
    return float(np.mean(node_vals * node_vals) - 2.0 * np.mean(point_vals * aux.q_density(ys)))


def dhat(rep: CoefficientRep, train: PairedDataset, aux: AuxiliaryGrid, cfg: KernelConfig,
         eval_data: PairedDataset) -> float:
    """Empirical loss of a representer fit on an evaluation sample.

    Nodes are the evaluation covariates crossed with the shared auxiliary
    sample; the pair term uses the evaluation responses.
    """
    kxq = kx_cross(eval_data.xs, train.xs, cfg.h_x)
    node_vals = rep_grid_values(rep, train, aux, cfg, eval_data.xs, aux.us, kxq=kxq)
    point_vals = rep_point_values(rep, train, aux, cfg, eval_data.xs, eval_data.ys, kxq=kxq)
    return dhat_from_values(node_vals, point_vals, eval_data.ys, aux)


def residual_hnorm_sq(F: np.ndarray, gram: GramFactors, aux: AuxiliaryGrid, ys) -> float:
    """Squared H-norm of the operator residual ``Lhat f - bhat``.

    With ``f`` given by its node values ``F``, the residual is the kernel
    expansion ``sum_{p,q} (F[p,q]/n_z) k(., z_{pq}) - sum_l (q_U(y_l)/n) k(., v_l)``
    over node atoms and data atoms; the quadratic form is evaluated through
    the factored blocks without building the joint Gram.
    """
    ys = np.asarray(ys, dtype=float).reshape(-1)
    C = np.asarray(F, dtype=float) / gram.n_z
    d = -aux.q_density(ys) / gram.n
    term_cc = float(np.sum(C * (gram.K_X @ C @ gram.K_U)))
    P = gram.K_X.T @ C            # P[l, q] = sum_p K_X[p, l] C[p, q]
    t = np.sum(P * gram.K_UY.T, axis=1)
    term_cd = 2.0 * float(d @ t)
    term_dd = float(d @ ((gram.K_X * gram.K_YY) @ d))
    return max(term_cc + term_cd + term_dd, 0.0)
