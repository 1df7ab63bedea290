"""Gaussian product kernels, Gram blocks, and median-heuristic bandwidths.

The joint kernel over covariate-response pairs factorises as
``k((x, y), (x', y')) = k_X(x, x') * k_Y(y, y')`` where ``k_X`` is a
unit-height anisotropic Gaussian and ``k_Y`` is a Gaussian density in its
first argument.  Everything downstream (node-grid operators, regularised
fits, baselines) works on the four dense Gram blocks built here, so the full
``n_z x n_z`` node Gram is never materialised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KernelConfig",
    "GramFactors",
    "BandwidthGrid",
    "gaussian_kx",
    "gaussian_ky",
    "kx_cross",
    "ky_cross",
    "build_gram",
    "median_heuristic",
    "kappa_sq",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _as_bandwidth_vector(h_x) -> np.ndarray:
    h = np.atleast_1d(np.asarray(h_x, dtype=float))
    if h.ndim != 1:
        raise ValueError("h_x must be a scalar or a 1-d vector of bandwidths")
    if not np.all(np.isfinite(h)) or np.any(h <= 0.0):
        raise ValueError("all covariate bandwidths must be finite and strictly positive")
    return h


def _check_hy(h_y: float) -> float:
    h_y = float(h_y)
    if not math.isfinite(h_y) or h_y <= 0.0:
        raise ValueError("h_y must be finite and strictly positive")
    return h_y


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidths of the product kernel.

    Parameters
    ----------
    h_x : ndarray of shape (d,)
        Per-coordinate covariate bandwidths, all strictly positive.
    h_y : float
        Response bandwidth, strictly positive.
    """

    h_x: np.ndarray
    h_y: float

    def __post_init__(self):
        object.__setattr__(self, "h_x", _readonly(_as_bandwidth_vector(self.h_x)))
        object.__setattr__(self, "h_y", _check_hy(self.h_y))

    @property
    def d(self) -> int:
        return self.h_x.shape[0]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GramFactors:
    """Dense Gram blocks shared by every estimator.

    Attributes
    ----------
    K_X : ndarray of shape (n, n)
        ``K_X[i, l] = k_X(x_i, x_l)``; symmetric, unit diagonal.
    K_U : ndarray of shape (n_u, n_u)
        ``K_U[j, l] = k_Y(u_j, u_l)``; symmetric, diagonal ``1/(h_y*sqrt(2*pi))``.
    K_UY : ndarray of shape (n_u, n)
        ``K_UY[j, i] = k_Y(u_j, y_i)``.
    K_YY : ndarray of shape (n, n)
        ``K_YY[i, l] = k_Y(y_i, y_l)``; used by the structured H-norm of
        residuals, nowhere else.
    """

    K_X: np.ndarray
    K_U: np.ndarray
    K_UY: np.ndarray
    K_YY: np.ndarray

    def __post_init__(self):
        for name in ("K_X", "K_U", "K_UY", "K_YY"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=float)))
        n = self.K_X.shape[0]
        n_u = self.K_U.shape[0]
        if self.K_X.shape != (n, n) or self.K_U.shape != (n_u, n_u):
            raise ValueError("K_X and K_U must be square")
        if self.K_UY.shape != (n_u, n) or self.K_YY.shape != (n, n):
            raise ValueError("K_UY must be (n_u, n) and K_YY must be (n, n)")

    @property
    def n(self) -> int:
        return self.K_X.shape[0]

    @property
    def n_u(self) -> int:
        return self.K_U.shape[0]

    @property
    def n_z(self) -> int:
        return self.n * self.n_u


@dataclass(frozen=True)
class BandwidthGrid:
    """Geometric bandwidth grid ``{base * ratio**l : l = -L..L}``.

    ``base`` may be a scalar (response bandwidth grid) or a vector (covariate
    bandwidth grid, scaled by a common factor per grid point).  ``values`` has
    shape ``(2L+1,)`` for scalar base and ``(2L+1, d)`` for vector base, in
    strictly increasing factor order.
    """

    base: np.ndarray
    ratio: float
    half_width: int
    factors: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        if base.ndim > 1:
            raise ValueError("base must be a scalar or a 1-d vector")
        if not np.all(np.isfinite(base)) or np.any(base <= 0.0):
            raise ValueError("base bandwidths must be finite and strictly positive")
        ratio = float(self.ratio)
        if not ratio > 1.0:
            raise ValueError("ratio must exceed 1")
        half_width = int(self.half_width)
        if half_width < 0:
            raise ValueError("half_width must be nonnegative")
        factors = ratio ** np.arange(-half_width, half_width + 1, dtype=float)
        values = base * factors if base.ndim == 0 else factors[:, None] * base[None, :]
        object.__setattr__(self, "base", _readonly(base))
        object.__setattr__(self, "ratio", ratio)
        object.__setattr__(self, "half_width", half_width)
        object.__setattr__(self, "factors", _readonly(factors))
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self) -> int:
        return 2 * self.half_width + 1


def gaussian_kx(x, x_prime, h_x) -> float:
    """Unit-height anisotropic Gaussian covariate kernel.

    Returns ``exp(-0.5 * sum_l (x_l - x'_l)**2 / h_l**2)``, a value in
    ``(0, 1]``.

    Parameters
    ----------
    x, x_prime : array_like of shape (d,)
    h_x : array_like of shape (d,)
        Strictly positive bandwidths.
    """
    h = _as_bandwidth_vector(h_x)
    a = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if a.shape != h.shape or b.shape != h.shape:
        raise ValueError("x, x_prime and h_x must share the same dimension")
    return float(np.exp(-0.5 * np.sum(((a - b) / h) ** 2)))


def gaussian_ky(y, y_prime, h_y) -> float:
    """Gaussian density kernel in the response.

    Returns ``(h_y * sqrt(2*pi))**-1 * exp(-(y - y')**2 / (2 * h_y**2))``;
    integrates to 1 over ``y'`` for fixed ``y``.
    """
    h_y = _check_hy(h_y)
    diff = float(y) - float(y_prime)
    return math.exp(-0.5 * (diff / h_y) ** 2) / (h_y * _SQRT_2PI)


def kx_cross(X1, X2, h_x) -> np.ndarray:
    """Covariate kernel matrix ``[k_X(X1[i], X2[j])]`` of shape (m1, m2)."""
    h = _as_bandwidth_vector(h_x)
    A = np.asarray(X1, dtype=float)
    B = np.asarray(X2, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != h.shape[0] or B.shape[1] != h.shape[0]:
        raise ValueError("covariate dimension does not match h_x")
    # Explicit difference broadcasting keeps the matrix exactly symmetric when X1 is X2.
    diff = A[:, None, :] - B[None, :, :]
    sq = np.einsum("ijl,l->ij", diff * diff, 1.0 / (h * h))
    return np.exp(-0.5 * sq)


def ky_cross(y1, y2, h_y) -> np.ndarray:
    """Response kernel matrix ``[k_Y(y1[i], y2[j])]`` of shape (m1, m2)."""
    h_y = _check_hy(h_y)
    a = np.asarray(y1, dtype=float).reshape(-1)
    b = np.asarray(y2, dtype=float).reshape(-1)
    diff = (a[:, None] - b[None, :]) / h_y
    return np.exp(-0.5 * diff * diff) / (h_y * _SQRT_2PI)


def build_gram(dataset, aux, cfg: KernelConfig) -> GramFactors:
    """Build the four Gram blocks for a sample and an auxiliary grid.

    Parameters
    ----------
    dataset : object with ``xs`` (n, d) and ``ys`` (n,)
    aux : object with ``us`` (n_u,)
    cfg : KernelConfig

    Returns
    -------
    GramFactors
    """
    xs = np.asarray(dataset.xs, dtype=float)
    ys = np.asarray(dataset.ys, dtype=float).reshape(-1)
    us = np.asarray(aux.us, dtype=float).reshape(-1)
    if xs.size == 0 or ys.size == 0 or us.size == 0:
        raise ValueError("dataset and auxiliary grid must be nonempty")
    K_X = kx_cross(xs, xs, cfg.h_x)
    np.fill_diagonal(K_X, 1.0)
    K_U = ky_cross(us, us, cfg.h_y)
    np.fill_diagonal(K_U, 1.0 / (cfg.h_y * _SQRT_2PI))
    K_UY = ky_cross(us, ys, cfg.h_y)
    K_YY = ky_cross(ys, ys, cfg.h_y)
    return GramFactors(K_X=K_X, K_U=K_U, K_UY=K_UY, K_YY=K_YY)


def median_heuristic(samples) -> np.ndarray | float:
    """Componentwise median-heuristic bandwidth scale.

    For each coordinate ``l`` returns
    ``M_l = sqrt(med(|x_{i,l} - x_{j,l}|^2, i < j) / 2)`` using the exact
    median over all ``n(n-1)/2`` pairs (the even-count median averages the two
    central values).  If a coordinate's median squared distance is zero, the
    smallest strictly positive squared pairwise distance in that coordinate is
    substituted; if none exists the coordinate is degenerate and an error is
    raised.

    Parameters
    ----------
    samples : array_like of shape (n,) or (n, d), with n >= 2

    Returns
    -------
    float or ndarray of shape (d,)
        Scalar for 1-d input, vector otherwise.
    """
    a = np.asarray(samples, dtype=float)
    scalar_input = a.ndim == 1
    if scalar_input:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("median_heuristic needs at least 2 sample vectors")
    i, j = np.triu_indices(a.shape[0], k=1)
    sq = (a[i] - a[j]) ** 2
    med = np.median(sq, axis=0)
    out = np.empty_like(med)
    for l, m in enumerate(med):
        if m > 0.0:
            out[l] = m
            continue
        positive = sq[:, l][sq[:, l] > 0.0]
        if positive.size == 0:
            raise ValueError(f"all samples coincide in coordinate {l}; no positive pairwise distance")
        out[l] = positive.min()
    out = np.sqrt(out / 2.0)
    return float(out[0]) if scalar_input else out


def kappa_sq(cfg: KernelConfig) -> float:
    """Supremum of the product kernel on the diagonal, ``1/(h_y*sqrt(2*pi))``.

    The covariate factor peaks at 1, so the bound is the response kernel's
    height.  Its reciprocal is the fixed step size of the iterated
    regulariser.
    """
    return 1.0 / (cfg.h_y * _SQRT_2PI)
