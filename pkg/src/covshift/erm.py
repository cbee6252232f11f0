"""Additive least-squares ERM and the population risk functionals."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import distmodel as dm
from .errors import InputError, ShapeError
from .funclass import Domain, FiniteFamily, bias_beta, on_atoms

TIE_TOL = 1e-12


@dataclass
class ErmSolution:
    empirical_loss: float
    f_index: Optional[int] = None
    g_index: Optional[int] = None
    f_weights: Optional[np.ndarray] = None
    g_weights: Optional[np.ndarray] = None
    ties: int = 1
    kkt_residual: float = 0.0

    def to_dict(self) -> dict:
        d = {"empirical_loss": self.empirical_loss, "ties": self.ties}
        if self.f_index is not None:
            d.update(f_index=self.f_index, g_index=self.g_index)
        if self.f_weights is not None:
            d.update(f_weights=[float(v) for v in self.f_weights],
                     g_weights=[float(v) for v in self.g_weights],
                     kkt_residual=self.kkt_residual)
        return d


def _loss_block(a, b, z):
    # (a + b - z)^2 = (a - z)^2 + b^2 + 2 (a - z) b, averaged over samples
    n = len(z)
    r = a - z
    return (np.einsum("ij,ij->i", r, r)[:, None] + np.einsum("ij,ij->i", b, b)[None, :]
            + 2.0 * (r @ b.T)) / n


def erm_finite(F: FiniteFamily, G: FiniteFamily, s: dm.SampleSet, threads: int = 1,
               block: int = 512) -> ErmSolution:
    """Exhaustive minimizer of the empirical squared loss over F x G.

    Ties within TIE_TOL of the minimum are counted; the lexicographically
    smallest (f_index, g_index) wins.
    """
    if F.domain != Domain.X or G.domain != Domain.Y:
        raise ShapeError("erm_finite expects an X-family F and a Y-family G")
    a = F.values[:, s.x_ids]
    b = G.values[:, s.y_ids]
    z = np.asarray(s.z, float)
    starts = list(range(0, F.m, block))

    def run(i0):
        L = _loss_block(a[i0:i0 + block], b, z)
        return np.maximum(L, 0.0)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as ex:
            blocks = list(ex.map(run, starts))
    else:
        blocks = [run(i) for i in starts]
    L = np.vstack(blocks)
    flat = int(np.argmin(L))  # row-major: first hit is lexicographically smallest
    i, j = divmod(flat, G.m)
    best = float(L[i, j])
    ties = int(np.count_nonzero(L <= best + TIE_TOL))
    return ErmSolution(best, f_index=i, g_index=j, ties=ties)


def erm_linear(features_x, features_y, z, ridge: float = 0.0) -> ErmSolution:
    """Joint least squares on [features_x, features_y].

    Minimizes (1/n)||A w - z||^2 + ridge ||w||^2 through an SVD of A, so the
    ridge = 0 solution is the minimum-norm one when A is rank deficient.
    """
    X = np.atleast_2d(np.asarray(features_x, float))
    Y = np.atleast_2d(np.asarray(features_y, float))
    z = np.asarray(z, float).reshape(-1)
    if X.shape[0] != len(z) or Y.shape[0] != len(z):
        raise ShapeError("feature blocks and labels must share n rows")
    if len(z) < 1:
        raise ShapeError("n must be >= 1")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y)) and np.all(np.isfinite(z))):
        raise InputError("non-finite features or labels")
    if ridge < 0:
        raise InputError("ridge must be >= 0")
    n = len(z)
    A = np.hstack([X, Y])
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if ridge == 0:
        cut = sv.max(initial=0.0) * max(A.shape) * np.finfo(float).eps
        inv = np.where(sv > cut, 1.0 / np.where(sv > cut, sv, 1.0), 0.0)
    else:
        inv = sv / (sv * sv + n * ridge)
    w = Vt.T @ (inv * (U.T @ z))
    resid = A @ w - z
    loss = float(resid @ resid / n)
    grad = 2.0 / n * (A.T @ resid) + 2.0 * ridge * w
    d1 = X.shape[1]
    return ErmSolution(loss, f_weights=w[:d1], g_weights=w[d1:], ties=1,
                       kkt_residual=float(np.abs(grad).max(initial=0.0)))


# population risks

def _truth(env, f_star, g_star):
    fs = env.f_star if f_star is None else np.asarray(f_star, float)
    gs = env.g_star if g_star is None else np.asarray(g_star, float)
    return fs, gs


def risk_pair(env: dm.DiscreteEnv, f, g, f_star=None, g_star=None) -> float:
    """R_env(f, g) = E_env[((f - f*)(x) + (g - g*)(y))^2]."""
    fs, gs = _truth(env, f_star, g_star)
    h = on_atoms(env, np.asarray(f) - fs, Domain.X) + on_atoms(env, np.asarray(g) - gs, Domain.Y)
    return dm.expect(env, h * h)


def risk_f(env: dm.DiscreteEnv, f, f_star=None, beta_env: dm.DiscreteEnv | None = None) -> float:
    """E_env[(f - f* - beta_f)^2], with beta_f computed under ``beta_env``
    (the training law; defaults to env itself)."""
    fs, _ = _truth(env, f_star, None)
    beta = bias_beta(beta_env or env, f, fs)
    h = on_atoms(env, np.asarray(f) - fs, Domain.X) - on_atoms(env, beta, Domain.Y)
    return dm.expect(env, h * h)


def risk_g_given_f(env: dm.DiscreteEnv, g, f, g_star=None, f_star=None,
                   beta_env: dm.DiscreteEnv | None = None) -> float:
    """E_env[(g - g* + beta_f)^2]."""
    fs, gs = _truth(env, f_star, g_star)
    beta = bias_beta(beta_env or env, f, fs)
    h = on_atoms(env, np.asarray(g) - gs + beta, Domain.Y)
    return dm.expect(env, h * h)
