"""Function families on x, y or (x, y) atom ids and their evaluations.

XY-domain tables are flattened with cell index ``x * num_y + y``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from . import distmodel as dm
from .errors import ConfigError, DomainError, InputError, ShapeError

BOUND_TOL = 1e-12


class Domain(str, Enum):
    X = "X"
    Y = "Y"
    XY = "XY"


@dataclass(frozen=True, eq=False)
class FiniteFamily:
    values: np.ndarray
    bound_B: float
    domain: Domain = Domain.X
    num_y: int = 0  # only used by XY families, to unflatten cells

    def __post_init__(self):
        v = np.atleast_2d(np.array(self.values, dtype=float))
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError("family values must be a nonempty m x k matrix")
        if not np.all(np.isfinite(v)):
            raise ConfigError("family values must be finite")
        B = float(self.bound_B)
        if not B >= 0:
            raise ConfigError("bound B must be >= 0")
        if np.abs(v).max() > B + BOUND_TOL:
            raise ConfigError(f"family entries exceed the bound B={B}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "bound_B", B)
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    @property
    def zero_included(self) -> bool:
        return bool(np.any(np.all(self.values == 0, axis=1)))

    def with_zero(self) -> "FiniteFamily":
        if self.zero_included:
            return self
        return FiniteFamily(np.vstack([np.zeros(self.k), self.values]), self.bound_B,
                            self.domain, self.num_y)

    def to_dict(self) -> dict:
        return {"domain": self.domain.value, "B": self.bound_B,
                "values": [[float(a) for a in row] for row in self.values]}

    @classmethod
    def from_dict(cls, d: dict, num_y: int = 0) -> "FiniteFamily":
        extra = set(d) - {"domain", "B", "values"}
        if extra:
            raise ConfigError(f"unknown family keys: {sorted(extra)}")
        try:
            dom = Domain(d["domain"])
            return cls(np.asarray(d["values"], float), float(d["B"]), dom, num_y)
        except KeyError as e:
            raise ConfigError(f"family is missing key {e}") from None
        except ValueError as e:
            raise ConfigError(str(e)) from None


@dataclass(frozen=True)
class LinearFamily:
    """Norm ball {<w, phi(.)> : ||w|| <= radius} over a feature map."""

    feature_dim: int
    radius: float
    feature_map_id: str = "raw"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if not self.radius > 0:
            raise ConfigError("radius must be > 0")

    def features(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.feature_map_id == "raw":
            if pts.shape[1] != self.feature_dim:
                raise ShapeError("raw features must have feature_dim columns")
            return pts
        if self.feature_map_id == "random-fourier":
            return random_fourier_features(pts, self.feature_dim, **self.params)
        raise ConfigError(f"unknown feature map {self.feature_map_id!r}")

    def sample_functions(self, pts, count: int, seed: int) -> np.ndarray:
        """Rows <w_i, phi(pts)> for weights drawn uniformly on the radius sphere."""
        from . import rng
        Phi = self.features(pts)
        W = rng.stream(seed, 17).standard_normal((count, Phi.shape[1]))
        W *= self.radius / np.linalg.norm(W, axis=1, keepdims=True)
        return W @ Phi.T


def random_fourier_features(pts, num: int, bandwidth: float = 1.0, seed: int = 0) -> np.ndarray:
    """sqrt(2/num) cos(pts @ W / bandwidth + b), Gaussian-kernel random features."""
    from . import rng
    pts = np.atleast_2d(np.asarray(pts, float))
    gen = rng.stream(seed, 29)
    W = gen.standard_normal((pts.shape[1], num)) / bandwidth
    b = gen.uniform(0.0, 2 * np.pi, num)
    return np.sqrt(2.0 / num) * np.cos(pts @ W + b)


@dataclass(frozen=True, eq=False)
class EvaluatedFamily:
    """m x n matrix; row i is function i evaluated on the n sample points."""

    matrix: np.ndarray
    labels: Optional[tuple] = None

    def __post_init__(self):
        M = np.atleast_2d(np.array(self.matrix, dtype=float))
        if M.ndim != 2 or M.shape[1] < 1:
            raise ShapeError("evaluated family must be m x n with n >= 1")
        if not np.all(np.isfinite(M)):
            raise InputError("evaluated family has non-finite entries")
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        if self.labels is not None:
            if len(self.labels) != M.shape[0]:
                raise ShapeError("one label per row")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def norms(self, q: float = 2.0) -> np.ndarray:
        return qnorm(self.matrix, q)

    def rad(self, q: float = 2.0) -> float:
        if self.m == 0:
            return 0.0
        return float(self.norms(q).max())

    def rows(self, idx) -> "EvaluatedFamily":
        return EvaluatedFamily(self.matrix[np.asarray(idx)])

    def with_zero(self) -> "EvaluatedFamily":
        if self.m and np.any(np.all(self.matrix == 0, axis=1)):
            return self
        return EvaluatedFamily(np.vstack([np.zeros(self.n), self.matrix.reshape(-1, self.n)]))


def _EmptyOK(M, labels=None) -> EvaluatedFamily:
    # localization may legitimately return no rows
    M = np.asarray(M, float)
    return EvaluatedFamily(M.reshape(-1, M.shape[-1]), labels if len(M) else None)


def qnorm(M: np.ndarray, q: float = 2.0) -> np.ndarray:
    """Normalized norms (1/n sum |v_i|^q)^(1/q) along the last axis; q = inf is max."""
    M = np.asarray(M, float)
    if q == np.inf:
        return np.abs(M).max(axis=-1) if M.shape[-1] else np.zeros(M.shape[:-1])
    if q < 1:
        raise InputError("q must lie in [1, inf]")
    if q == 2:
        return np.sqrt(np.mean(M * M, axis=-1))
    return np.mean(np.abs(M) ** q, axis=-1) ** (1.0 / q)


# evaluation and lifting

def _point_index(family: FiniteFamily, pts: dm.SampleSet | tuple) -> np.ndarray:
    if isinstance(pts, dm.SampleSet):
        xs, ys = pts.x_ids, pts.y_ids
    else:
        xs, ys = pts
    if family.domain == Domain.X:
        idx = np.asarray(xs, np.int64)
    elif family.domain == Domain.Y:
        idx = np.asarray(ys, np.int64)
    else:
        if not family.num_y:
            raise ConfigError("XY family needs num_y to locate cells")
        xs, ys = np.asarray(xs, np.int64), np.asarray(ys, np.int64)
        if ys.size and (ys.min() < 0 or ys.max() >= family.num_y):
            raise DomainError("y id out of range for XY family")
        idx = xs * family.num_y + ys
    if idx.size and (idx.min() < 0 or idx.max() >= family.k):
        bad = idx[(idx < 0) | (idx >= family.k)][0]
        raise DomainError(f"point id {int(bad)} outside the family domain of size {family.k}")
    return idx


def evaluate(family: FiniteFamily, points: dm.SampleSet | tuple) -> EvaluatedFamily:
    return EvaluatedFamily(family.values[:, _point_index(family, points)])


def on_atoms(env: dm.DiscreteEnv, table: np.ndarray, domain: Domain | str) -> np.ndarray:
    """Values of a single table (or rows of tables) at every atom of env."""
    table = np.asarray(table, float)
    domain = Domain(domain)
    if domain == Domain.X:
        idx = env.x_ids
    elif domain == Domain.Y:
        idx = env.y_ids
    else:
        idx = env.cell
    return table[..., idx]


# bias and centering

def bias_beta(env: dm.DiscreteEnv, f, f_star=None, y_ids: Sequence[int] | None = None) -> np.ndarray:
    """beta_f(y) = E_env[(f - f*)(x) | y] as a table over all y ids.

    y ids with zero marginal mass get the value 0.  Asking for such an id
    explicitly through ``y_ids`` raises DomainError.
    """
    f = np.asarray(f, float)
    fs = env.f_star if f_star is None else np.asarray(f_star, float)
    table, ok = dm.cond_expect_table(env, f - fs)
    if y_ids is not None:
        y_ids = np.asarray(y_ids, np.int64)
        if np.any((y_ids < 0) | (y_ids >= env.num_y)):
            raise DomainError("y id out of range")
        bad = y_ids[~ok[y_ids]]
        if bad.size:
            raise DomainError(f"y_id {int(bad[0])} has zero marginal mass")
        return table[y_ids]
    return table


def bias_rows(env: dm.DiscreteEnv, F: np.ndarray, f_star=None) -> np.ndarray:
    """beta_f for every row f of F, as an |F| x num_y array."""
    F = np.atleast_2d(np.asarray(F, float))
    fs = env.f_star if f_star is None else np.asarray(f_star, float)
    py = dm.marginal_y(env)
    D = (F - fs)[:, env.x_ids] * env.probs
    num = np.zeros((F.shape[0], env.num_y))
    np.add.at(num.T, env.y_ids, D.T)
    out = np.zeros_like(num)
    ok = py > 0
    out[:, ok] = num[:, ok] / py[ok]
    return out


@dataclass(frozen=True, eq=False)
class CenteredFamilies:
    F_cnt: FiniteFamily  # XY domain, rows f - f* - beta_f
    G_cnt: FiniteFamily  # Y domain, rows g - g* + beta_f, index f_i * |G| + g_j
    H_cnt: FiniteFamily  # XY domain, rows f + g - f* - g*, same index
    betas: np.ndarray

    def __iter__(self):
        return iter((self.F_cnt, self.G_cnt, self.H_cnt))


def center_families(env: dm.DiscreteEnv, F: FiniteFamily, G: FiniteFamily,
                    f_star=None, g_star=None) -> CenteredFamilies:
    fs = env.f_star if f_star is None else np.asarray(f_star, float)
    gs = env.g_star if g_star is None else np.asarray(g_star, float)
    Fv, Gv = np.atleast_2d(F.values), np.atleast_2d(G.values)
    if Fv.shape[1] != env.num_x or Gv.shape[1] != env.num_y:
        raise ShapeError("F must be tabulated over x ids and G over y ids")
    B = max(F.bound_B, G.bound_B, np.abs(fs).max(), np.abs(gs).max())
    betas = bias_rows(env, Fv, fs)
    nx, ny = env.num_x, env.num_y
    fc = (Fv - fs)[:, :, None] - betas[:, None, :]
    gc = (Gv - gs)[None, :, :] + betas[:, None, :]
    hc = (Fv - fs)[:, None, :, None] + (Gv - gs)[None, :, None, :]
    mf, mg = Fv.shape[0], Gv.shape[0]
    return CenteredFamilies(
        FiniteFamily(fc.reshape(mf, nx * ny), 4 * B, Domain.XY, ny),
        FiniteFamily(gc.reshape(mf * mg, ny), 4 * B, Domain.Y),
        FiniteFamily(hc.reshape(mf * mg, nx * ny), 4 * B, Domain.XY, ny),
        betas,
    )


# localization and products

def localize_empirical(V: EvaluatedFamily, r: float) -> EvaluatedFamily:
    """Rows with ||row||_{2,n} <= r (closed ball)."""
    if r < 0:
        raise InputError("r must be >= 0")
    if r == np.inf:
        return V
    return _EmptyOK(V.matrix[V.norms(2.0) <= r])


def population_norms(env: dm.DiscreteEnv, family: FiniteFamily) -> np.ndarray:
    """sqrt(E_env[h^2]) for every row h."""
    vals = on_atoms(env, family.values, family.domain)
    live = env.probs > 0
    return np.sqrt(np.maximum((vals[:, live] ** 2) @ env.probs[live], 0.0))


def localize_population(env: dm.DiscreteEnv, family: FiniteFamily, r: float):
    """Rows with E_env[h^2] <= r^2.  Returns (sub-family or None, row mask)."""
    if r < 0:
        raise InputError("r must be >= 0")
    mask = population_norms(env, family) ** 2 <= r * r if r != np.inf else np.ones(family.m, bool)
    if not mask.any():
        return None, mask
    return FiniteFamily(family.values[mask], family.bound_B, family.domain, family.num_y), mask


def hadamard(V: EvaluatedFamily, U: EvaluatedFamily) -> EvaluatedFamily:
    """All entrywise products; row i * m_U + j is V_i * U_j."""
    if V.n != U.n:
        raise ShapeError(f"hadamard needs equal n, got {V.n} and {U.n}")
    prod = V.matrix[:, None, :] * U.matrix[None, :, :]
    return _EmptyOK(prod.reshape(-1, V.n))


# conditional completeness

@dataclass
class CompletenessReport:
    holds: bool
    witnesses: list
    checked: int


def check_conditional_completeness(env: dm.DiscreteEnv, F: FiniteFamily, G: FiniteFamily,
                                   gamma: float, tol: float = 1e-9,
                                   f_star=None, g_star=None) -> CompletenessReport:
    """Is g - beta_f within ``tol`` (sup over positive-mass y) of some member of G
    for every pair with R_env(f, g) <= gamma^2?"""
    if not gamma > 0:
        raise InputError("gamma must be > 0")
    fs = env.f_star if f_star is None else np.asarray(f_star, float)
    gs = env.g_star if g_star is None else np.asarray(g_star, float)
    betas = bias_rows(env, F.values, fs)
    live_y = dm.marginal_y(env) > 0
    a = on_atoms(env, F.values - fs, Domain.X)
    b = on_atoms(env, G.values - gs, Domain.Y)
    p = env.probs
    risk = ((a * a) @ p)[:, None] + ((b * b) @ p)[None, :] + 2 * (a * p) @ b.T
    witnesses, checked = [], 0
    Gl = G.values[:, live_y]
    for i, j in zip(*np.nonzero(risk <= gamma ** 2)):
        checked += 1
        target = (G.values[j] - betas[i])[live_y]
        if np.abs(Gl - target).max(axis=1).min() > tol:
            witnesses.append((int(i), int(j)))
    return CompletenessReport(not witnesses, witnesses, checked)
