"""Environments: finite joint laws over (x, y) atoms and Gaussian linear models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .errors import ConfigError, DomainError, ShapeError

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteEnv:
    """Finite law over (x_id, y_id) atoms with Gaussian label noise.

    ``f_star`` and ``g_star`` are truth tables over x ids and y ids.  They default
    to zero and are carried here so that ``sample`` can produce labels.
    """

    x_ids: np.ndarray
    y_ids: np.ndarray
    probs: np.ndarray
    sigma: float = 0.0
    num_x: int = 0
    num_y: int = 0
    f_star: np.ndarray = field(default=None)
    g_star: np.ndarray = field(default=None)

    def __post_init__(self):
        x = _frozen(self.x_ids, np.int64).reshape(-1)
        y = _frozen(self.y_ids, np.int64).reshape(-1)
        p = _frozen(self.probs).reshape(-1)
        if not (len(x) == len(y) == len(p)):
            raise ShapeError("atom arrays must have equal length")
        if len(p) == 0:
            raise ConfigError("environment has no atoms")
        num_x = int(self.num_x) if self.num_x else int(x.max()) + 1
        num_y = int(self.num_y) if self.num_y else int(y.max()) + 1
        if x.min() < 0 or y.min() < 0 or x.max() >= num_x or y.max() >= num_y:
            raise ConfigError("atom ids outside [0, num_x) x [0, num_y)")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ConfigError("atom probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ConfigError(f"atom probabilities sum to {p.sum():.17g}, not 1")
        if len(np.unique(x * num_y + y)) != len(x):
            raise ConfigError("duplicate (x_id, y_id) atom")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        fs = np.zeros(num_x) if self.f_star is None else np.asarray(self.f_star, float)
        gs = np.zeros(num_y) if self.g_star is None else np.asarray(self.g_star, float)
        if fs.shape != (num_x,) or gs.shape != (num_y,):
            raise ConfigError("f_star / g_star tables must have num_x / num_y entries")
        for k, v in (("x_ids", x), ("y_ids", y), ("probs", p), ("f_star", _frozen(fs)),
                     ("g_star", _frozen(gs))):
            object.__setattr__(self, k, v)
        object.__setattr__(self, "num_x", num_x)
        object.__setattr__(self, "num_y", num_y)
        object.__setattr__(self, "sigma", float(self.sigma))

    # construction / serialization

    @classmethod
    def from_atoms(cls, atoms, sigma=0.0, num_x=0, num_y=0, f_star=None, g_star=None):
        atoms = list(atoms)
        if not atoms:
            raise ConfigError("environment has no atoms")
        arr = np.asarray(atoms, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ConfigError("atoms must be [x_id, y_id, prob] triples")
        if np.any(arr[:, :2] != np.round(arr[:, :2])):
            raise ConfigError("atom ids must be integers")
        return cls(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2],
                   sigma, num_x, num_y, f_star, g_star)

    @classmethod
    def from_joint(cls, P, sigma=0.0, f_star=None, g_star=None, keep_zeros=False):
        """Build from a dense num_x x num_y probability matrix."""
        P = np.asarray(P, float)
        if P.ndim != 2:
            raise ShapeError("joint table must be 2-d")
        xs, ys = np.nonzero(P > 0) if not keep_zeros else np.indices(P.shape).reshape(2, -1)
        return cls(xs, ys, P[xs, ys], sigma, P.shape[0], P.shape[1], f_star, g_star)

    def to_dict(self) -> dict:
        return {
            "atoms": [[int(x), int(y), float(p)] for x, y, p in zip(self.x_ids, self.y_ids, self.probs)],
            "sigma": self.sigma,
            "num_x": self.num_x,
            "num_y": self.num_y,
            "f_star": [float(v) for v in self.f_star],
            "g_star": [float(v) for v in self.g_star],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteEnv":
        allowed = {"atoms", "sigma", "num_x", "num_y", "f_star", "g_star"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown environment keys: {sorted(extra)}")
        if "atoms" not in d:
            raise ConfigError("environment needs 'atoms'")
        return cls.from_atoms(d["atoms"], d.get("sigma", 0.0), d.get("num_x", 0),
                              d.get("num_y", 0), d.get("f_star"), d.get("g_star"))

    # dense views

    @property
    def cell(self) -> np.ndarray:
        """Flattened XY index x * num_y + y of each atom."""
        return self.x_ids * self.num_y + self.y_ids

    def joint(self) -> np.ndarray:
        P = np.zeros((self.num_x, self.num_y))
        P[self.x_ids, self.y_ids] = self.probs
        return P

    def with_truth(self, f_star=None, g_star=None, sigma=None) -> "DiscreteEnv":
        return DiscreteEnv(self.x_ids, self.y_ids, self.probs,
                           self.sigma if sigma is None else sigma, self.num_x, self.num_y,
                           self.f_star if f_star is None else f_star,
                           self.g_star if g_star is None else g_star)

    def same_space(self, other: "DiscreteEnv") -> bool:
        return self.num_x == other.num_x and self.num_y == other.num_y


@dataclass(frozen=True, eq=False)
class GaussianLinearEnv:
    cov_train: np.ndarray
    cov_test: np.ndarray
    w_star: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        S0 = np.atleast_2d(np.asarray(self.cov_train, float))
        Se = np.atleast_2d(np.asarray(self.cov_test, float))
        w = np.asarray(self.w_star, float).reshape(-1)
        d = len(w)
        for name, S in (("cov_train", S0), ("cov_test", Se)):
            if S.shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}")
            if np.max(np.abs(S - S.T), initial=0.0) > 1e-10:
                raise ConfigError(f"{name} is not symmetric")
            if np.linalg.eigvalsh((S + S.T) / 2).min() < -1e-10:
                raise ConfigError(f"{name} is not positive semidefinite")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        object.__setattr__(self, "cov_train", _frozen(S0))
        object.__setattr__(self, "cov_test", _frozen(Se))
        object.__setattr__(self, "w_star", _frozen(w))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dim(self) -> int:
        return len(self.w_star)


@dataclass(frozen=True, eq=False)
class SampleSet:
    x_ids: Optional[np.ndarray]
    y_ids: Optional[np.ndarray]
    z: np.ndarray
    n: int
    seed: int
    x_vecs: Optional[np.ndarray] = None
    y_vecs: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ShapeError("sample size must be >= 1")
        for a in (self.x_ids, self.y_ids, self.z, self.x_vecs, self.y_vecs):
            if a is not None and len(a) != self.n:
                raise ShapeError("all sample arrays must have length n")


def sample(env: DiscreteEnv, n: int, seed: int, threads: int = 1) -> SampleSet:
    """Draw n i.i.d. atoms with labels z = f*(x) + g*(y) + sigma * xi."""
    n = int(n)
    if n < 1:
        raise ShapeError("n must be >= 1")
    cdf = np.cumsum(env.probs)
    last = int(np.flatnonzero(env.probs > 0)[-1])

    def draw(gen, size):
        u = gen.random(size)
        xi = gen.standard_normal(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"), last), xi

    parts = rng.map_chunks(draw, n, seed, 0, threads=threads)
    idx = np.concatenate([p[0] for p in parts])
    xi = np.concatenate([p[1] for p in parts])
    xs, ys = env.x_ids[idx], env.y_ids[idx]
    z = env.f_star[xs] + env.g_star[ys] + env.sigma * xi
    return SampleSet(xs, ys, z, n, int(seed))


def expect(env: DiscreteEnv, h: Callable | np.ndarray) -> float:
    """Exact E[h(x, y)].

    ``h`` is either a vectorized callable on (x_ids, y_ids) or an array of
    values aligned with the atoms.  Zero-mass atoms are skipped.
    """
    live = env.probs > 0
    if callable(h):
        vals = np.asarray(h(env.x_ids[live], env.y_ids[live]), float)
    else:
        vals = np.asarray(h, float)[live]
    return float(np.dot(env.probs[live], np.broadcast_to(vals, env.probs[live].shape)))


def marginal_y(env: DiscreteEnv) -> np.ndarray:
    return np.bincount(env.y_ids, weights=env.probs, minlength=env.num_y)


def marginal_x(env: DiscreteEnv) -> np.ndarray:
    return np.bincount(env.x_ids, weights=env.probs, minlength=env.num_x)


def _as_x_table(env: DiscreteEnv, h) -> np.ndarray:
    if callable(h):
        return np.asarray(h(np.arange(env.num_x)), float)
    h = np.asarray(h, float)
    if h.shape != (env.num_x,):
        raise ShapeError(f"expected a table over {env.num_x} x ids")
    return h


def cond_expect_table(env: DiscreteEnv, h) -> tuple[np.ndarray, np.ndarray]:
    """E[h(x) | y] for every y id, plus a mask of y ids with positive mass.

    Entries for zero-mass y ids are set to 0.
    """
    h = _as_x_table(env, h)
    py = marginal_y(env)
    num = np.bincount(env.y_ids, weights=env.probs * h[env.x_ids], minlength=env.num_y)
    ok = py > 0
    out = np.zeros(env.num_y)
    out[ok] = num[ok] / py[ok]
    return out, ok


def cond_expect_x_given_y(env: DiscreteEnv, h, y_id: int) -> float:
    if not 0 <= y_id < env.num_y:
        raise DomainError(f"y_id {y_id} outside [0, {env.num_y})")
    table, ok = cond_expect_table(env, h)
    if not ok[y_id]:
        raise DomainError(f"y_id {y_id} has zero marginal mass")
    return float(table[y_id])
