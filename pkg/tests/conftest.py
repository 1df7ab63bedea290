"""Shared fixtures and independent oracles.

The oracles here recompute every quantity from scalar definitions (explicit
loops, full node Grams, dense solves) without reusing the library's vectorised
code paths, so agreement is evidence rather than tautology.
"""

import math

import numpy as np
import pytest

from kcde.kernels import KernelConfig, build_gram
from kcde.operators import AuxiliaryGrid, FitContext, PairedDataset

# ---------------------------------------------------------------------------
# Scalar reference kernels


def ref_kx(x, x_prime, h_x):
    s = 0.0
    for xl, xpl, hl in zip(np.atleast_1d(x), np.atleast_1d(x_prime), np.atleast_1d(h_x)):
        s += (xl - xpl) ** 2 / hl**2
    return math.exp(-0.5 * s)


def ref_ky(y, y_prime, h_y):
    return math.exp(-((y - y_prime) ** 2) / (2.0 * h_y**2)) / (h_y * math.sqrt(2.0 * math.pi))


def ref_k_joint(z, z_prime, cfg):
    return ref_kx(z[0], z_prime[0], cfg.h_x) * ref_ky(z[1], z_prime[1], cfg.h_y)


def ref_qu(y, support):
    lo, hi = support
    return 1.0 / (hi - lo) if lo <= y <= hi else 0.0


# ---------------------------------------------------------------------------
# Node-level brute-force constructions (1-based ordering i = (p-1)*n_u + q)


def node_list(xs, us):
    """Nodes in flat order: index i-1 for i = (p-1)*n_u + q, p,q 1-based."""
    return [(np.atleast_1d(xs)[p], us[q]) for p in range(len(xs)) for q in range(len(us))]


def full_node_gram(xs, us, cfg):
    nodes = node_list(xs, us)
    n_z = len(nodes)
    K = np.empty((n_z, n_z))
    for i in range(n_z):
        for j in range(n_z):
            K[i, j] = ref_k_joint(nodes[i], nodes[j], cfg)
    return K


def brute_bhat_point(x, y, train, aux, cfg):
    total = 0.0
    for l in range(train.n):
        total += (ref_kx(x, train.xs[l], cfg.h_x) * ref_ky(y, train.ys[l], cfg.h_y)
                  * ref_qu(train.ys[l], aux.support))
    return total / train.n


def brute_bhat_matrix(train, aux, cfg):
    B = np.empty((train.n, aux.n_u))
    for p in range(train.n):
        for q in range(aux.n_u):
            B[p, q] = brute_bhat_point(train.xs[p], aux.us[q], train, aux, cfg)
    return B


def brute_apply_Lhat(F, xs, us, cfg):
    """(Lhat f) at every node via the full flat node loop."""
    nodes = node_list(xs, us)
    flat = np.asarray(F, dtype=float).reshape(-1)
    n_z = len(nodes)
    out = np.empty(n_z)
    for i in range(n_z):
        acc = 0.0
        for j in range(n_z):
            acc += ref_k_joint(nodes[i], nodes[j], cfg) * flat[j]
        out[i] = acc / n_z
    return out.reshape(len(xs), len(us))


def brute_dhat(fn, eval_data, aux):
    n, n_u = eval_data.n, aux.n_u
    node_term = 0.0
    for i in range(n):
        for j in range(n_u):
            node_term += fn(eval_data.xs[i], aux.us[j]) ** 2
    point_term = 0.0
    for i in range(n):
        point_term += fn(eval_data.xs[i], eval_data.ys[i]) * ref_qu(eval_data.ys[i], aux.support)
    return node_term / (n * n_u) - 2.0 * point_term / n


def two_block_atoms(train, aux):
    """Atom centres of a residual/representer element: all nodes, then the
    training points."""
    atoms = node_list(train.xs, aux.us)
    atoms += [(train.xs[l], train.ys[l]) for l in range(train.n)]
    return atoms


def atom_gram(atoms, cfg):
    m = len(atoms)
    G = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            G[i, j] = ref_k_joint(atoms[i], atoms[j], cfg)
    return G


def brute_residual_hnorm_sq(F, train, aux, cfg):
    """H-norm^2 of Lhat f - bhat via the dense two-block atom Gram."""
    atoms = two_block_atoms(train, aux)
    G = atom_gram(atoms, cfg)
    c = np.asarray(F, dtype=float).reshape(-1) / (train.n * aux.n_u)
    d = np.array([-ref_qu(y, aux.support) / train.n for y in train.ys])
    w = np.concatenate([c, d])
    return float(w @ G @ w)


# ---------------------------------------------------------------------------
# Dense quadratic oracle for the closed-form regulariser


class QPOracle:
    """Dense minimiser of Dhat(f) + lam * |f|_H^2 over the joint span of the
    node atoms and the training-point atoms."""

    def __init__(self, train, aux, cfg):
        self.train, self.aux, self.cfg = train, aux, cfg
        self.atoms = two_block_atoms(train, aux)
        self.G = atom_gram(self.atoms, cfg)
        n_z = train.n * aux.n_u
        # Rows: function values at the nodes and at the training points.
        self.M_nodes = self.G[:n_z, :]
        self.M_pts = self.G[n_z:, :]
        self.q = np.array([ref_qu(y, aux.support) for y in train.ys])
        self.n_z = n_z

    def objective(self, w, lam):
        node_vals = self.M_nodes @ w
        pt_vals = self.M_pts @ w
        dhat = node_vals @ node_vals / self.n_z - 2.0 * (self.q @ pt_vals) / self.train.n
        return float(dhat + lam * (w @ self.G @ w))

    def solve(self, lam):
        H = 2.0 * self.M_nodes.T @ self.M_nodes / self.n_z + 2.0 * lam * self.G
        rhs = 2.0 * self.M_pts.T @ self.q / self.train.n
        w, *_ = np.linalg.lstsq(H, rhs, rcond=None)
        return w

    def coeffs_from_rep(self, rep):
        """Atom coefficients of a representer-form fit with f0 = zero."""
        return np.concatenate([np.asarray(rep.A, dtype=float).reshape(-1), rep.beta * self.q])

    def evaluate(self, w, x, y):
        return float(sum(wi * ref_k_joint((x, y), atom, self.cfg) for wi, atom in zip(w, self.atoms)))


# ---------------------------------------------------------------------------
# Spectral filter oracle


def filter_apply(K_nodes, n_z, bvec, delta, t):
    """g_t(K/n_z) applied to bvec, with g_t(s) = s^-1 (1 - (1 - delta*s)^t)."""
    sig, Q = np.linalg.eigh(K_nodes / n_z)
    x = delta * sig
    g = np.where(
        np.abs(x) > 1e-6,
        (1.0 - (1.0 - x) ** t) / np.where(sig == 0.0, 1.0, sig),
        delta * t * (1.0 - (t - 1) * x / 2.0),
    )
    return Q @ (g * (Q.T @ bvec))


# ---------------------------------------------------------------------------
# Instance factory


def random_instance(rng, n=4, n_u=3, d=2, support=None):
    xs = rng.normal(size=(n, d))
    ys = rng.normal(size=n)
    if support is None:
        lo = float(ys.min()) - 0.5
        hi = float(ys.max()) + 0.5
        support = (lo, hi)
    us = rng.uniform(support[0], support[1], size=n_u)
    train = PairedDataset(xs=xs, ys=ys)
    aux = AuxiliaryGrid(us=us, support=support)
    h_x = rng.uniform(0.6, 1.8, size=d)
    h_y = float(rng.uniform(0.5, 1.5))
    cfg = KernelConfig(h_x=h_x, h_y=h_y)
    return FitContext(train=train, aux=aux, cfg=cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_ctx(rng):
    return random_instance(rng, n=4, n_u=3, d=2)
