"""Closed-form rate calculus: entropy-family envelopes, Xi complexities, phi_n."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import nnls

from .empproc import EntropyCurve
from .errors import InputError

DEFAULT_P = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
P2_TOL = 1e-9
E = math.e


def _branch(p: float) -> str:
    if p < 0:
        raise InputError("p must be >= 0")
    if p == 0:
        return "log"
    if abs(p - 2.0) < P2_TOL:
        return "two"
    return "low" if p < 2 else "high"


def xi_glob_branch(p: float, tau, R: float, n: float) -> float:
    t0, t1, t2 = (float(t) for t in tau)
    br = _branch(p)
    if t1 == 0:
        return 0.0
    if br == "log":
        if R == 0:
            return 0.0
        return R * math.sqrt(t1 * math.log(E + t2 / R) / n)
    if br == "low":
        return R ** (1 - p / 2) / (1 - p / 2) * math.sqrt(t1 / n)
    if br == "two":
        return math.sqrt(t1 / n) * math.log(E + R * math.sqrt(n / t1))
    return (t1 / n) ** (1 / p) * (p / 2 - 1) ** (-2 / p)


def xi_glob(p: float, tau, R: float, n: float) -> float:
    """Global complexity term R tau0 / sqrt(n) + branch(p)."""
    if n <= 0 or R < 0 or min(tau) < 0:
        raise InputError("need n > 0, R >= 0 and tau >= 0")
    return R * float(tau[0]) / math.sqrt(n) + xi_glob_branch(p, tau, R, n)


def xi_loc_branch(p: float, tau, c: float, n: float) -> float:
    t0, t1, t2 = (float(t) for t in tau)
    br = _branch(p)
    if t1 == 0:
        return 0.0
    if br == "log":
        return c * c * t1 * math.log(E + math.sqrt(n) * t2 / c) / n
    if br == "low":
        return (c * c / (1 - p / 2) ** 2 * t1 / n) ** (2 / (2 + p))
    if br == "two":
        return c * math.sqrt(t1 * math.log(E + c * math.sqrt(n) / t1) / n)
    return (p / 2 - 1) ** (-2 / p) * (t1 / n) ** (1 / p)


def xi_loc(p: float, tau, c: float, n: float) -> float:
    """Local complexity term c^2 (1 + tau0)^2 / n + branch(p)."""
    if n <= 0 or c <= 0 or min(tau) < 0:
        raise InputError("need n > 0, c > 0 and tau >= 0")
    return c * c * (1 + float(tau[0])) ** 2 / n + xi_loc_branch(p, tau, c, n)


# entropy-family fitting

def envelope(p: float, tau, eps) -> np.ndarray:
    eps = np.asarray(eps, float)
    t0, t1, t2 = (float(t) for t in tau)
    if p == 0:
        return t0 + t1 * np.log(t2 / eps) if t1 > 0 else np.full_like(eps, t0)
    return t0 + t1 * eps ** (-p)


@dataclass
class EntropyFamilyFit:
    p: float
    tau: tuple
    R: float
    fit_residual: float
    xi_loc: float = 0.0
    xi_glob: float = 0.0
    q: float = 2.0
    candidates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q"] = "inf" if self.q == np.inf else self.q
        d["tau"] = list(self.tau)
        return d


def _fit_one(p, eps, M, R):
    t2 = 2 * R if R > 0 else 1.0
    basis = np.log(t2 / eps) if p == 0 else eps ** (-p)
    A = np.column_stack([np.ones_like(eps), basis])
    (t0, t1), _ = nnls(A, M)
    # smallest tau1 (keeping tau0) under which the envelope dominates every point
    gap = M - t0
    pos = gap > 0
    if pos.any():
        if np.any(basis[pos] <= 0):
            # basis vanishes at eps = tau2; fall back to raising tau0
            t0 = max(t0, float(M[pos & (basis <= 0)].max()))
            gap = M - t0
            pos = gap > 0
        if pos.any():
            t1 = max(t1, float(np.max(gap[pos] / basis[pos])))
    env = envelope(p, (t0, t1, t2), eps)
    viol = float(np.max(np.maximum(M - env, 0.0) / np.maximum(M, 1.0)))
    return (float(t0), float(t1), float(t2)), viol


def fit_entropy_family(curve: EntropyCurve, p_candidates: Sequence[float] = DEFAULT_P,
                       n: int | None = None, c: float = 1.0) -> EntropyFamilyFit:
    """Fit EntFam envelopes to a measured entropy curve.

    For each p: nonnegative least squares for (tau0, tau1) on the transformed
    grid, then tau1 is raised to the smallest value that dominates every
    curve point.  A flat envelope (tau1 = 0, tau0 = max entropy) is always a
    candidate.  The candidate with the smallest Xi_loc at (n, c) wins; ties go
    to the earlier candidate.
    """
    eps = curve.eps
    M = np.maximum(curve.entropy, 0.0)
    keep = eps > 0
    eps, M = eps[keep], M[keep]
    if eps.size == 0:
        raise InputError("entropy curve has no positive-epsilon points")
    n = n or curve.n or 1
    R = curve.rad_q
    cands = []
    flat = (float(M.max()), 0.0, 2 * R if R > 0 else 1.0)
    cands.append((0.0, flat, 0.0))
    for p in p_candidates:
        tau, viol = _fit_one(float(p), eps, M, R)
        cands.append((float(p), tau, viol))
    rows = []
    for p, tau, viol in cands:
        rows.append({"p": p, "tau": list(tau), "fit_residual": viol,
                     "xi_loc": xi_loc(p, tau, c, n), "xi_glob": xi_glob(p, tau, R, n)})
    best = min(range(len(rows)), key=lambda i: (rows[i]["xi_loc"], i))
    b = rows[best]
    return EntropyFamilyFit(b["p"], tuple(b["tau"]), R, b["fit_residual"], b["xi_loc"],
                            b["xi_glob"], curve.q, rows)


def rate_q(curve: EntropyCurve, c: float, n: int, p_candidates=DEFAULT_P) -> float:
    """Smallest Xi_loc over the admissible fitted envelopes."""
    fit = fit_entropy_family(curve, p_candidates, n, c)
    return min(r["xi_loc"] for r in fit.candidates)


def rate_star(curve: EntropyCurve, n: int, p_candidates=DEFAULT_P) -> float:
    """Smallest Xi_glob over envelopes fitted to an infinity-norm curve."""
    if curve.q != np.inf:
        raise InputError("rate_star needs an infinity-norm entropy curve")
    fit = fit_entropy_family(curve, p_candidates, n)
    return min(r["xi_glob"] for r in fit.candidates)


# finite classes under hypercontractivity

REGIMES = ("general", "four_four", "subgaussian")


def phi_n(d1: float, d2: float, n: float, regime: str = "four_four", q1: float = 4.0,
          q2: float = 4.0, kappa: float = 1.0) -> float:
    if not 1 <= d1 <= d2:
        raise InputError("need 1 <= d1 <= d2")
    if n <= 0:
        raise InputError("n must be > 0")
    if regime == "general":
        if abs(1 / q1 + 1 / q2 - 0.5) > 1e-12:
            raise InputError("general regime needs 1/q1 + 1/q2 = 1/2")
        return (d2 / n) ** (2 / q2) + (d1 / d2) ** (1 / q1)
    if regime == "four_four":
        return (d2 / n) ** 0.5 + (d1 / d2) ** 0.25
    if regime == "subgaussian":
        return (d2 / n) * (d1 + math.log(n))
    raise InputError(f"unknown regime {regime!r}; choose from {REGIMES}")


def finite_class_bound(nu_xy: float, nu_y: float, d1: float, d2: float, n: float,
                       kappa: float, phi: float) -> float:
    """(nu_xy d1 + nu_y d2 + nu_xy d2 kappa^2 phi) / n."""
    return (nu_xy * d1 + nu_y * d2 + nu_xy * d2 * kappa ** 2 * phi) / n


def best_general_phi(d1, d2, n, grid: int = 2001) -> tuple[float, float]:
    """min over q1 of the general-regime phi_n; returns (phi, q1)."""
    a = np.linspace(1e-6, 0.5 - 1e-6, grid)  # a = 1/q1
    vals = (d2 / n) ** (2 * (0.5 - a)) + (d1 / d2) ** a
    i = int(np.argmin(vals))
    return float(vals[i]), float(1 / a[i])


@dataclass
class RateSpec:
    fit: EntropyFamilyFit
    n: int
    c: float
    rate_q: float
    rate_star: float | None = None
    regime_table: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"p": self.fit.p, "tau": list(self.fit.tau), "R": self.fit.R,
                "xi_glob": self.fit.xi_glob, "xi_loc": self.fit.xi_loc, "n": self.n, "c": self.c,
                "rate_q": self.rate_q, "rate_star": self.rate_star,
                "fit_residual": self.fit.fit_residual, "candidates": self.fit.candidates,
                "regime_table": self.regime_table}
