"""Synthetic data models, ground-truth densities, and CSV loading.

Four synthetic models, each with a sampler and a closed-form conditional
density used as the benchmark target:

* ``mixture``: a 50-component Gaussian location mixture whose means sit on a
  circle embedded in the last two coordinates; the response is the final
  coordinate.
* ``cir``: a discretely observed square-root diffusion; consecutive values
  form covariate/response pairs and the transition density is a scaled
  noncentral chi-square.
* ``ar``: an autoregressive chain whose lag window is the covariate.
* ``beta``: uniform covariates driving the shape of a Beta response.

The ``csv`` model name covers datasets loaded from disk; it has no ground
truth and is scored by the two-term empirical loss instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp, softmax
from scipy.stats import norm

from .operators import AuxiliaryGrid, PairedDataset

__all__ = [
    "ModelSpec",
    "GroundTruth",
    "SplitData",
    "make_model",
    "gen_mixture",
    "gen_beta",
    "gen_cir",
    "gen_ar",
    "generate",
    "split_random",
    "aux_support",
    "sample_aux",
    "even_aux",
    "load_csv",
    "ncx2_pdf",
    "MODEL_NAMES",
]

MODEL_NAMES = ("mixture", "cir", "ar", "beta", "csv")

MIXTURE_N_COMPONENTS = 50
CIR_PARAMS = {"mu": 0.21459, "theta": 0.08571, "sigma": 0.0783, "dt": 1.0 / 12.0}
CIR_SUPPORT = (0.0, 0.3)
AR_INIT_VAR = 4.0 / 3.0
AR_BURN_IN = 100


@dataclass(frozen=True)
class ModelSpec:
    """Named data model with covariate dimension ``d``."""

    name: str
    d: int = 1

    def __post_init__(self):
        if self.name not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.name!r}")
        if self.name == "cir" and self.d != 1:
            raise ValueError("cir is a scalar-covariate model")
        if self.name != "csv" and self.d < 1:
            raise ValueError("d must be at least 1")


def make_model(name: str, d: int = 1) -> ModelSpec:
    if name == "cir":
        d = 1
    return ModelSpec(name=name, d=d)


@dataclass(frozen=True)
class SplitData:
    """Train/validation/test splits plus the ground truth when one exists."""

    train: PairedDataset
    val: PairedDataset
    test: PairedDataset
    truth: "GroundTruth | None"


# ---------------------------------------------------------------------------
# Noncentral chi-square density


def _ncx2_logpdf_scalar(s: float, df: float, nc: float) -> float:
    if s <= 0.0:
        return -np.inf
    half_df = 0.5 * df
    if nc <= 0.0:
        return (half_df - 1.0) * math.log(s) - 0.5 * s - half_df * math.log(2.0) - gammaln(half_df)
    # Poisson-weighted central terms, summed in log space around the modal
    # index so the leading Poisson weight cannot underflow the whole sum.
    # The window is wide enough that the edge terms sit below 1e-14 of the
    # total: the log-term profile is concave with curvature ~1/j_star, and
    # the chosen width puts the edges ~80 nats under the peak.
    j_star = 0.5 * math.sqrt(nc * s)
    width = 16 + int(math.ceil(math.sqrt(160.0 * (j_star + 1.0))))
    j_lo = max(0, int(j_star) - width)
    j = np.arange(j_lo, int(j_star) + width + 1, dtype=float)
    log_terms = (
        -0.5 * nc
        + j * math.log(0.5 * nc)
        - gammaln(j + 1.0)
        + (half_df + j - 1.0) * math.log(s)
        - 0.5 * s
        - (half_df + j) * math.log(2.0)
        - gammaln(half_df + j)
    )
    return float(logsumexp(log_terms))


def ncx2_pdf(s, df: float, nc: float):
    """Noncentral chi-square density, elementwise over ``s``.

    Stable for large noncentrality: values far in the tails underflow to
    exactly zero instead of producing NaNs.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.empty_like(s_arr)
    for i, si in enumerate(s_arr):
        out[i] = math.exp(_ncx2_logpdf_scalar(float(si), df, nc)) if si > 0.0 else 0.0
    return out if np.ndim(s) else float(out[0])


# ---------------------------------------------------------------------------
# Ground truths


def _mixture_means(d: int) -> tuple[np.ndarray, np.ndarray]:
    phi = 2.0 * np.pi * np.arange(1, MIXTURE_N_COMPONENTS + 1) / MIXTURE_N_COMPONENTS
    means_x = np.zeros((MIXTURE_N_COMPONENTS, d))
    means_x[:, -1] = np.cos(phi)
    return means_x, np.sin(phi)


def _cir_constants() -> tuple[float, float, float]:
    p = CIR_PARAMS
    decay = math.exp(-p["mu"] * p["dt"])
    c = 2.0 * p["mu"] / (p["sigma"] ** 2 * (1.0 - decay))
    df = 4.0 * p["mu"] * p["theta"] / p["sigma"] ** 2
    return c, df, decay


@dataclass(frozen=True)
class GroundTruth:
    """Conditional density ``q(y | x)`` of a synthetic model."""

    model: ModelSpec

    def pdf_grid(self, X, ygrid) -> np.ndarray:
        """Truth values ``q(ygrid[j] | X[i])`` as an (m, g) matrix."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        ygrid = np.asarray(ygrid, dtype=float).reshape(-1)
        name = self.model.name
        if name == "mixture":
            means_x, means_y = _mixture_means(self.model.d)
            diffs = X[:, None, :] - means_x[None, :, :]
            logw = -0.5 * np.einsum("mcd,mcd->mc", diffs, diffs)
            W = softmax(logw, axis=1)
            comp = norm.pdf(ygrid[None, :], loc=means_y[:, None])
            return W @ comp
        if name == "ar":
            phi = 1.0 / (2.0 * self.model.d)
            mu = phi * X.sum(axis=1)
            return norm.pdf(ygrid[None, :], loc=mu[:, None])
        if name == "beta":
            alpha = 1.0 + np.mean(X**2, axis=1)
            inside = (ygrid >= 0.0) & (ygrid <= 1.0)
            out = np.zeros((X.shape[0], ygrid.size))
            yin = ygrid[inside]
            out[:, inside] = alpha[:, None] * yin[None, :] ** (alpha[:, None] - 1.0)
            return out
        if name == "cir":
            c, df, decay = _cir_constants()
            out = np.empty((X.shape[0], ygrid.size))
            for i, xi in enumerate(X[:, 0]):
                out[i] = 2.0 * c * ncx2_pdf(2.0 * c * ygrid, df, 2.0 * c * xi * decay)
            return out
        raise ValueError(f"model {name!r} has no closed-form conditional density")

    def pdf_points(self, X, Y) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        Y = np.asarray(Y, dtype=float).reshape(-1)
        return np.array([self.pdf_grid(X[i : i + 1], [Y[i]])[0, 0] for i in range(X.shape[0])])

    def pdf(self, x, y) -> float:
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.pdf_grid(x, [float(y)])[0, 0])


# ---------------------------------------------------------------------------
# Samplers


def gen_mixture(model: ModelSpec, n: int, rng: np.random.Generator) -> tuple[PairedDataset, GroundTruth]:
    """Draw ``n`` i.i.d. pairs: uniform component, then a unit-covariance
    Gaussian around its mean; the response is the last coordinate."""
    means_x, means_y = _mixture_means(model.d)
    idx = rng.integers(0, MIXTURE_N_COMPONENTS, size=n)
    z = rng.standard_normal((n, model.d + 1))
    xs = means_x[idx] + z[:, : model.d]
    ys = means_y[idx] + z[:, model.d]
    return PairedDataset(xs=xs, ys=ys), GroundTruth(model)


def gen_beta(model: ModelSpec, n: int, rng: np.random.Generator) -> tuple[PairedDataset, GroundTruth]:
    xs = rng.random((n, model.d))
    alpha = 1.0 + np.mean(xs**2, axis=1)
    ys = rng.beta(alpha, 1.0)
    return PairedDataset(xs=xs, ys=ys), GroundTruth(model)


def gen_cir(model: ModelSpec, m: int, rng: np.random.Generator) -> tuple[PairedDataset, GroundTruth]:
    """Simulate ``m`` observations of the square-root diffusion and pair
    consecutive values: m-1 rows of (previous value, next value)."""
    if m < 2:
        raise ValueError("need at least two observations to form a pair")
    p = CIR_PARAMS
    c, df, decay = _cir_constants()
    shape = 2.0 * p["mu"] * p["theta"] / p["sigma"] ** 2
    scale = p["sigma"] ** 2 / (2.0 * p["mu"])
    x = rng.gamma(shape, scale)
    path = np.empty(m)
    for t in range(m):
        x = rng.noncentral_chisquare(df, 2.0 * c * x * decay) / (2.0 * c)
        path[t] = x
    return PairedDataset(xs=path[:-1].reshape(-1, 1), ys=path[1:]), GroundTruth(model)


def gen_ar(model: ModelSpec, m: int, rng: np.random.Generator) -> tuple[PairedDataset, GroundTruth]:
    """Simulate the autoregressive chain with a burn-in and pair each retained
    value except the first with its most-recent-first lag window."""
    if m < 2:
        raise ValueError("need at least two retained observations to form a pair")
    d = model.d
    phi = 1.0 / (2.0 * d)
    v = np.empty(d + AR_BURN_IN + m)
    v[:d] = rng.normal(0.0, math.sqrt(AR_INIT_VAR), size=d)
    eps = rng.standard_normal(AR_BURN_IN + m)
    for t in range(d, v.size):
        v[t] = phi * v[t - d : t].sum() + eps[t - d]
    # Early lag windows reach back into the burn-in tail.
    first = v.size - m + 1
    ys = v[first:]
    xs = np.stack([v[pos - d : pos][::-1] for pos in range(first, v.size)])
    return PairedDataset(xs=xs, ys=ys), GroundTruth(model)


def split_random(data: PairedDataset, n_train: int, n_val: int, n_test: int,
                 rng: np.random.Generator) -> tuple[PairedDataset, PairedDataset, PairedDataset]:
    """Random split with exact train and test sizes; validation absorbs any deficit."""
    total = data.n
    if total < n_train + n_test:
        raise ValueError("not enough pairs for the requested train and test sizes")
    perm = rng.permutation(total)
    tr = perm[:n_train]
    te = perm[n_train : n_train + n_test]
    va = perm[n_train + n_test : n_train + n_test + n_val]
    return data.subset(tr), data.subset(va), data.subset(te)


def generate(model: ModelSpec, n_train: int, n_val: int, n_test: int,
             rng: np.random.Generator) -> SplitData:
    """Draw one replication of a synthetic model and split it.

    Independent models are sliced in draw order; the time-series pair sets
    are randomly shuffled before splitting.
    """
    total = n_train + n_val + n_test
    if model.name in ("mixture", "beta"):
        gen = gen_mixture if model.name == "mixture" else gen_beta
        data, truth = gen(model, total, rng)
        train = data.subset(np.arange(n_train))
        val = data.subset(np.arange(n_train, n_train + n_val))
        test = data.subset(np.arange(n_train + n_val, total))
        return SplitData(train=train, val=val, test=test, truth=truth)
    if model.name in ("cir", "ar"):
        gen = gen_cir if model.name == "cir" else gen_ar
        data, truth = gen(model, total, rng)
        train, val, test = split_random(data, n_train, n_val, n_test, rng)
        return SplitData(train=train, val=val, test=test, truth=truth)
    raise ValueError(f"model {model.name!r} has no sampler; load it from a file")


# ---------------------------------------------------------------------------
# Auxiliary sample and CSV loading


def aux_support(model: ModelSpec, ys: np.ndarray) -> tuple[float, float]:
    """Support of the auxiliary distribution for a model.

    ``ys`` is the training response sample for range-based supports; for the
    ``csv`` model pass the responses of the full file.
    """
    if model.name == "cir":
        return CIR_SUPPORT
    if model.name == "beta":
        return (0.0, 1.0)
    ys = np.asarray(ys, dtype=float)
    return (float(ys.min()), float(ys.max()))


def sample_aux(support: tuple[float, float], n_u: int, rng: np.random.Generator) -> AuxiliaryGrid:
    """Auxiliary design of ``n_u`` i.i.d. uniform draws on the support."""
    lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise ValueError("auxiliary support must be a nonempty interval")
    return AuxiliaryGrid(us=rng.uniform(lo, hi, size=n_u), support=(lo, hi))


def even_aux(support: tuple[float, float], n_u: int) -> AuxiliaryGrid:
    """Auxiliary design of ``n_u`` evenly spaced points spanning the support.

    The auxiliary points double as the response-side atom locations of the
    grid-based estimators, so even coverage bounds the distance from any
    response value to the nearest atom; an i.i.d. draw leaves gaps that
    degrade both the fit and the sampled square term of the selection loss.
    """
    lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise ValueError("auxiliary support must be a nonempty interval")
    return AuxiliaryGrid(us=np.linspace(lo, hi, n_u), support=(lo, hi))


def load_csv(path, response: str | None = None, covariates: list[str] | None = None) -> PairedDataset:
    """Load a CSV dataset into covariate/response arrays.

    The response defaults to the last column and the covariates to all other
    columns.  Non-numeric columns are integer-coded in order of first
    appearance; rows with missing values are dropped with a warning.
    """
    frame = pd.read_csv(path)
    if response is None:
        response = frame.columns[-1]
    if covariates is None:
        covariates = [c for c in frame.columns if c != response]
    missing = [c for c in [*covariates, response] if c not in frame.columns]
    if missing:
        raise ValueError(f"columns not in file: {missing}")
    frame = frame[[*covariates, response]]
    n_before = len(frame)
    frame = frame.dropna()
    if len(frame) < n_before:
        warnings.warn(f"dropped {n_before - len(frame)} rows with missing values", stacklevel=2)
    if len(frame) == 0:
        raise ValueError("no complete rows in file")

    def encode(col: pd.Series) -> np.ndarray:
        if pd.api.types.is_numeric_dtype(col):
            return col.to_numpy(dtype=float)
        codes = {v: i for i, v in enumerate(pd.unique(col.astype(str)))}
        return col.astype(str).map(codes).to_numpy(dtype=float)

    xs = np.column_stack([encode(frame[c]) for c in covariates])
    ys = encode(frame[response])
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ValueError("non-numeric values remain after encoding")
    return PairedDataset(xs=xs, ys=ys)
