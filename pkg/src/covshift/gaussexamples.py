"""Gaussian examples: OLS under covariance shift and sign classifiers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .distmodel import GaussianLinearEnv
from .errors import InputError, ShapeError

EIG_FLOOR = 1e-12


def sqrtm_psd(S: np.ndarray, power: float = 0.5) -> np.ndarray:
    """Symmetric S^power via eigendecomposition, eigenvalues floored at 1e-12."""
    S = np.asarray(S, float)
    lam, Q = np.linalg.eigh((S + S.T) / 2)
    lam = np.maximum(lam, EIG_FLOOR)
    return (Q * lam ** power) @ Q.T


# linear regression

def _ols_chunk(gen, size, L0, Se, n, sigma):
    d = L0.shape[0]
    X = gen.standard_normal((size, n, d)) @ L0.T
    xi = sigma * gen.standard_normal((size, n))
    XtX = np.einsum("tni,tnj->tij", X, X)
    Xtxi = np.einsum("tni,tn->ti", X, xi)
    risks = np.full(size, np.nan)
    for k in range(size):
        try:
            e = np.linalg.solve(XtX[k], Xtxi[k])
        except np.linalg.LinAlgError:
            continue
        if np.linalg.cond(XtX[k]) > 1e12:
            continue
        risks[k] = e @ Se @ e
    return risks


def linreg_shift_mc(env: GaussianLinearEnv, n: int, trials: int, seed: int = 0,
                    threads: int = 1) -> dict:
    """Excess test risk e^T Sigma_e e of OLS, e = (X^T X)^-1 X^T xi.

    Trials with a numerically singular X^T X are discarded and counted.
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    d = env.dim
    if n < d:
        raise InputError("need n >= d for an invertible design")
    L0 = sqrtm_psd(env.cov_train)
    Se = np.asarray(env.cov_test)
    parts = rng.map_chunks(lambda g, s: _ols_chunk(g, s, L0, Se, n, env.sigma),
                           trials, seed, 40, chunk=256, threads=threads)
    r = np.concatenate(parts)
    ok = r[np.isfinite(r)]
    q = np.quantile(ok, [0.05, 0.25, 0.5, 0.75, 0.95]) if ok.size else np.full(5, np.nan)
    return {"mean_risk": float(ok.mean()) if ok.size else float("nan"),
            "std_error": float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else float("nan"),
            "quantiles": dict(zip(("q05", "q25", "q50", "q75", "q95"), map(float, q))),
            "discarded": int(r.size - ok.size), "risks": ok}


def linreg_bound(cov_train, cov_test, n: int, delta: float) -> float:
    """(tr(Se S0^-1) + ||A||_F sqrt(log 1/delta) + ||A||_op log(1/delta)) / n,
    A = Se^1/2 S0^-1 Se^1/2."""
    S0 = np.asarray(cov_train, float)
    Se = np.asarray(cov_test, float)
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    lam = np.linalg.eigvalsh((S0 + S0.T) / 2)
    if lam.min() <= EIG_FLOOR * max(1.0, lam.max()):
        raise InputError("cov_train must be positive definite")
    S0inv = np.linalg.inv(S0)
    Ch = sqrtm_psd(Se) if np.linalg.eigvalsh(Se).min() > 0 else _psd_sqrt_exact(Se)
    A = Ch @ S0inv @ Ch
    L = math.log(1 / delta)
    return float((np.trace(Se @ S0inv) + np.linalg.norm(A, "fro") * math.sqrt(L)
                  + np.linalg.norm(A, 2) * L) / n)


def _psd_sqrt_exact(S):
    lam, Q = np.linalg.eigh((S + S.T) / 2)
    return (Q * np.sqrt(np.maximum(lam, 0.0))) @ Q.T


# classification

@dataclass
class Disagreement:
    value: float
    std_error: float
    samples: int


def _unit(v):
    v = np.asarray(v, float)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise InputError("vectors must be nonzero")
    return v / nv


def class_angle(cov_test, w_star, w_hat, power: float = 0.5) -> float:
    """arccos(<v*, v_hat>) / pi with v = Sigma_e^power w normalized.

    For x ~ N(0, Sigma_e), <x, w> = <z, Sigma_e^(1/2) w> with z standard normal,
    so power = 0.5 is the exact disagreement probability.  power = -0.5 is kept
    for comparison.
    """
    W = sqrtm_psd(cov_test, power)
    a = float(np.clip(_unit(W @ w_star) @ _unit(W @ w_hat), -1.0, 1.0))
    return math.acos(a) / math.pi


def class_disagreement_mc(cov_test, w_star, w_hat, samples: int, seed: int = 0,
                          threads: int = 1) -> Disagreement:
    """P[sign<x, w_hat> != sign<x, w_star>] for x ~ N(0, Sigma_e), by Monte Carlo."""
    ws, wh = np.asarray(w_star, float), np.asarray(w_hat, float)
    if not (np.any(ws) and np.any(wh)):
        raise InputError("vectors must be nonzero")
    C = sqrtm_psd(cov_test)
    d = len(ws)
    a, b = C @ ws, C @ wh  # <x, w> = <z, C w>

    def run(gen, size):
        Z = gen.standard_normal((size, d))
        return np.count_nonzero(np.sign(Z @ a) != np.sign(Z @ b))

    hits = sum(rng.map_chunks(run, int(samples), seed, 50, chunk=1 << 16, threads=threads))
    p = hits / samples
    return Disagreement(p, math.sqrt(max(p * (1 - p), 0.0) / samples), int(samples))


def class_risk_bound(cov_test, w_star, w_hat, c: float = 2.3) -> float:
    """c min_{gamma >= 0} ||C (w* - gamma w_hat)|| / ||C w*||, C = Sigma_e^1/2.

    Dominates theta / pi for any c >= 1: ||v* - v_hat|| = 2 sin(theta/2) >= 2 theta / pi,
    and the renormalization inequality bounds ||v* - v_hat|| by twice the ratio.
    """
    C = sqrtm_psd(cov_test)
    a, b = C @ np.asarray(w_star, float), C @ np.asarray(w_hat, float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise InputError("whitened vectors must be nonzero")
    gamma = max(0.0, float(a @ b) / (nb * nb))
    return float(c * np.linalg.norm(a - gamma * b) / na)


@dataclass
class RenormCheck:
    lhs: float
    rhs: float
    holds: bool


def renormalize_check(w, v, slack: float = 1e-12) -> RenormCheck:
    """||w/|w| - v/|v||| against 2 min_{gamma >= 0} ||w - gamma v|| / ||w||."""
    w, v = np.asarray(w, float), np.asarray(v, float)
    nw, nv = np.linalg.norm(w), np.linalg.norm(v)
    if nw == 0 or nv == 0:
        raise InputError("vectors must be nonzero")
    lhs = float(np.linalg.norm(w / nw - v / nv))
    gamma = max(0.0, float(w @ v) / (nv * nv))
    rhs = float(2 * np.linalg.norm(w - gamma * v) / nw)
    return RenormCheck(lhs, rhs, lhs <= rhs + slack)


def renormalize_batch(W: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (lhs, rhs) for row pairs."""
    nw = np.linalg.norm(W, axis=1)
    nv = np.linalg.norm(V, axis=1)
    if np.any(nw == 0) or np.any(nv == 0):
        raise InputError("vectors must be nonzero")
    lhs = np.linalg.norm(W / nw[:, None] - V / nv[:, None], axis=1)
    gamma = np.maximum(0.0, np.einsum("ij,ij->i", W, V) / nv ** 2)
    rhs = 2 * np.linalg.norm(W - gamma[:, None] * V, axis=1) / nw
    return lhs, rhs


def dist_shift_class_mc(cov_train, cov_test, w_star, alpha: float, trials: int,
                        seed: int = 0, c: float = 1.0) -> dict:
    """Random estimators at a fixed whitened angle and the trace bound.

    w_star is rescaled so that ||Sigma_0^-1/2 w*|| = 1.  Each trial draws a unit
    e orthogonal to u = Sigma_0^-1/2 w* uniformly, sets
    Sigma_0^-1/2 w_hat = alpha u + sqrt(1 - alpha^2) e, and records

      expression = gamma* ||Sigma_e^-1/2 Sigma_0^1/2 w_perp|| / ||Sigma_e^-1/2 w*||,
      quad       = e^T (I-P0) Sigma_0^1/2 Sigma_e^-1 Sigma_0^1/2 (I-P0) e,
      risk       = exact disagreement probability of w_hat under N(0, Sigma_e),

    with w_perp = (I - P0) Sigma_0^-1/2 w_hat and gamma* = 1 / alpha.  The trace
    bound is (c / (alpha ||Sigma_e^-1/2 w*||)) sqrt(tr(Sigma_e^-1 Sigma_0^1/2 (I-P0) Sigma_0^1/2)).
    """
    if not alpha > 0:
        raise InputError("alpha must be > 0")
    if alpha > 1:
        raise InputError("alpha is a cosine and must be <= 1")
    S0 = np.asarray(cov_train, float)
    Se = np.asarray(cov_test, float)
    d = S0.shape[0]
    if S0.shape != (d, d) or Se.shape != (d, d) or len(w_star) != d:
        raise ShapeError("dimension mismatch")
    for S in (S0, Se):
        if np.linalg.eigvalsh(S).min() <= 0:
            raise InputError("covariances must be positive definite")
    S0h, S0mh = sqrtm_psd(S0, 0.5), sqrtm_psd(S0, -0.5)
    Seinv, Semh = np.linalg.inv(Se), sqrtm_psd(Se, -0.5)
    w = np.asarray(w_star, float)
    w = w / np.linalg.norm(S0mh @ w)
    u = S0mh @ w
    P0 = np.outer(u, u)
    Q = np.eye(d) - P0
    K = Q @ S0h @ Seinv @ S0h @ Q
    norm_e = np.linalg.norm(Semh @ w)
    trace_bound = c / (alpha * norm_e) * math.sqrt(max(np.trace(Seinv @ S0h @ Q @ S0h), 0.0))

    gen = rng.stream(seed, 60)
    G = gen.standard_normal((trials, d)) @ Q
    E = G / np.linalg.norm(G, axis=1, keepdims=True)
    s = math.sqrt(max(1 - alpha ** 2, 0.0))
    Vhat = alpha * u[None, :] + s * E  # Sigma_0^-1/2 w_hat
    What = Vhat @ S0h.T
    Wperp = s * E
    expr = (1 / alpha) * np.linalg.norm(Wperp @ (Semh @ S0h).T, axis=1) / norm_e
    quad = np.einsum("ti,ij,tj->t", E, K, E)
    Ch = sqrtm_psd(Se)
    a = Ch @ w
    B = What @ Ch.T
    cosang = np.clip(B @ a / (np.linalg.norm(B, axis=1) * np.linalg.norm(a)), -1, 1)
    risk = np.arccos(cosang) / math.pi
    return {"expression": expr, "quad": quad, "risk": risk, "trace_bound": float(trace_bound),
            "mean_quad": float(np.trace(K) / max(d - 1, 1))}
