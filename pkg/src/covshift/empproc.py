"""Empirical-process numerics on evaluated families V (m x n matrices).

Complexities are normalized by 1/n:
    R_n(V) = (1/n) E_eps sup_v <eps, v>,   G_n(V) = (1/n) E_xi sup_v <xi, v>.
Norms are the normalized ||v||_{q,n} = (mean |v_i|^q)^(1/q).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import rng
from .errors import CapabilityError, InputError, ShapeError
from .funclass import EvaluatedFamily, hadamard, qnorm

EXACT_MAX_N = 20
EXACT_COVER_MAX_M = 20
_ENUM_CHUNK = 1 << 14


def _mat(V) -> np.ndarray:
    M = V.matrix if isinstance(V, EvaluatedFamily) else np.asarray(V, float)
    if M.ndim != 2:
        raise ShapeError("expected an m x n matrix")
    return M


@dataclass
class ComplexityEstimate:
    value: float
    std_error: float
    draws: int
    method: str  # "exact_enumeration" or "monte_carlo"

    def upper(self, k: float = 3.0) -> float:
        return self.value + k * self.std_error


# sign patterns

def _sign_block(start: int, count: int, n: int) -> np.ndarray:
    codes = np.arange(start, start + count, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(n, dtype=np.int64)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _all_sign_sups(M: np.ndarray, reducer=None) -> np.ndarray:
    """For every sign pattern (in binary order) the value reducer(eps @ M.T)."""
    n = M.shape[1]
    if n > EXACT_MAX_N:
        raise CapabilityError(f"exact enumeration supports n <= {EXACT_MAX_N}, got {n}")
    total = 1 << n
    out = []
    for s in range(0, total, _ENUM_CHUNK):
        E = _sign_block(s, min(_ENUM_CHUNK, total - s), n)
        S = E @ M.T
        out.append(S.max(axis=1) if reducer is None else reducer(S))
    return np.concatenate(out, axis=0)


def rademacher(V, draws: Optional[int] = None, seed: int = 0, exact: Optional[bool] = None,
               threads: int = 1) -> ComplexityEstimate:
    """R_n(V).  Exact enumeration when ``exact`` is set (or when draws is None
    and n <= 20); otherwise Monte Carlo with antithetic pairs (eps, -eps)."""
    M = _mat(V)
    n = M.shape[1]
    if M.shape[0] == 0:
        return ComplexityEstimate(0.0, 0.0, 1 << min(n, EXACT_MAX_N), "exact_enumeration")
    if exact is None:
        exact = draws is None
    if exact:
        sups = _all_sign_sups(M)
        return ComplexityEstimate(float(np.mean(sups)) / n, 0.0, len(sups), "exact_enumeration")
    if draws is None or draws < 1:
        raise InputError("Monte Carlo needs draws >= 1")
    pairs = max(1, (int(draws) + 1) // 2)

    def run(gen, size):
        E = gen.integers(0, 2, size=(size, n), dtype=np.int8).astype(float) * 2.0 - 1.0
        S = E @ M.T
        return 0.5 * (S.max(axis=1) + (-S).max(axis=1))

    vals = np.concatenate(rng.map_chunks(run, pairs, seed, 1, threads=threads)) / n
    se = float(vals.std(ddof=1) / math.sqrt(pairs)) if pairs > 1 else float("inf")
    return ComplexityEstimate(float(vals.mean()), se, 2 * pairs, "monte_carlo")


def gaussian(V, draws: int, seed: int = 0, threads: int = 1) -> ComplexityEstimate:
    """G_n(V) by plain Monte Carlo."""
    M = _mat(V)
    n = M.shape[1]
    if M.shape[0] == 0:
        return ComplexityEstimate(0.0, 0.0, max(int(draws), 1), "monte_carlo")
    if draws is None or draws < 1:
        raise InputError("Monte Carlo needs draws >= 1")

    def run(gen, size):
        return (gen.standard_normal((size, n)) @ M.T).max(axis=1)

    vals = np.concatenate(rng.map_chunks(run, int(draws), seed, 2, threads=threads)) / n
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("inf")
    return ComplexityEstimate(float(vals.mean()), se, int(draws), "monte_carlo")


def massart_bound(V) -> float:
    """rad_2(V) min{1, sqrt(2 log |V| / n)} for finite V."""
    M = _mat(V)
    if M.shape[0] == 0:
        return 0.0
    n = M.shape[1]
    return float(qnorm(M, 2).max() * min(1.0, math.sqrt(2 * math.log(M.shape[0]) / n)))


# covering numbers

def _dedup(M: np.ndarray) -> np.ndarray:
    _, first = np.unique(M, axis=0, return_index=True)
    return M[np.sort(first)]


def _dist_to(M: np.ndarray, v: np.ndarray, q: float) -> np.ndarray:
    return qnorm(M - v, q)


def greedy_radii(V, q: float = 2.0) -> np.ndarray:
    """Farthest-first traversal over the distinct rows, starting at row 0.

    Entry k-1 is the covering radius of the first k chosen centers, so the
    greedy (internal) cover at scale eps has min{k : r_k <= eps} balls.  The
    sequence is non-increasing and ends at 0.
    """
    M = _dedup(_mat(V))
    m = M.shape[0]
    if m == 0:
        return np.zeros(0)
    d = _dist_to(M, M[0], q)
    radii = np.empty(m)
    for k in range(m):
        j = int(np.argmax(d))
        radii[k] = d[j]
        if radii[k] == 0:
            return radii[:k + 1]
        d = np.minimum(d, _dist_to(M, M[j], q))
    return radii


def _greedy_count(radii: np.ndarray, eps: float) -> int:
    # radii non-increasing; count = 1 + number of radii strictly above eps
    return int(np.count_nonzero(radii > eps)) + 1 if len(radii) else 0


def _exact_cover(M: np.ndarray, q: float, eps: float) -> int:
    m = M.shape[0]
    if m > EXACT_COVER_MAX_M:
        raise CapabilityError(f"exact covering supports m <= {EXACT_COVER_MAX_M}, got {m}")
    if m == 0:
        return 0
    D = qnorm(M[:, None, :] - M[None, :, :], q)
    balls = [sum(1 << j for j in np.flatnonzero(D[i] <= eps)) for i in range(m)]
    full = (1 << m) - 1
    for k in range(1, m + 1):
        for combo in itertools.combinations(balls, k):
            acc = 0
            for b in combo:
                acc |= b
            if acc == full:
                return k
    return m


def covering_number(V, q: float, epsilon: float, mode: str = "greedy") -> int:
    """Size of an epsilon-cover of the rows by balls centered at rows.

    greedy: farthest-first net (an upper bound on the minimal cover, and an
    epsilon-packing, hence at most the minimal cover at epsilon/2).
    exact: minimal cover by exhaustive search, m <= 20.
    packing: same as greedy, named for its role as a packing lower bound.
    """
    if not epsilon > 0:
        raise InputError("epsilon must be > 0")
    M = _dedup(_mat(V))
    if mode == "exact":
        return _exact_cover(M, q, epsilon)
    if mode in ("greedy", "packing"):
        return _greedy_count(greedy_radii(M, q), epsilon)
    raise InputError(f"unknown covering mode {mode!r}")


@dataclass
class EntropyCurve:
    q: float
    points: list  # (epsilon, entropy) pairs, epsilon increasing
    rad_q: float
    n: int = 0

    @property
    def eps(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def entropy(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def to_dict(self) -> dict:
        return {"q": _jsonq(self.q), "rad_q": self.rad_q, "n": self.n,
                "points": [[float(e), float(h)] for e, h in self.points]}

    def to_csv(self) -> str:
        return "epsilon,entropy\n" + "".join(f"{e!r},{h!r}\n" for e, h in self.points)


def _jsonq(q):
    return "inf" if q == np.inf else q


def entropy_curve(V, q: float = 2.0, levels: int = 20, eps=None, mode: str = "greedy") -> EntropyCurve:
    """Metric entropy log N(eps) on the dyadic grid rad * 2^-j, j = levels..0."""
    M = _mat(V)
    rad = float(qnorm(M, q).max()) if M.shape[0] else 0.0
    if eps is None:
        eps = rad * 2.0 ** -np.arange(levels, -1, -1) if rad > 0 else np.array([1.0])
    eps = np.asarray(eps, float)
    if mode == "greedy":
        radii = greedy_radii(M, q)
        counts = [_greedy_count(radii, e) for e in eps]
    else:
        counts = [covering_number(M, q, e, mode) for e in eps]
    return EntropyCurve(q, [(float(e), math.log(max(c, 1))) for e, c in zip(eps, counts)],
                        rad, M.shape[1])


# Dudley functional

@dataclass
class DudleyResult:
    value: float
    chosen_delta: float
    rad: float

    def __iter__(self):
        return iter((self.value, self.chosen_delta))

    def __float__(self):
        return self.value


def dudley(V, q: float = 2.0, delta_grid=None, divisor: float = 2.0, entropy: str = "greedy") -> DudleyResult:
    """inf over delta <= rad_q of 2 delta + (4/sqrt n) int_delta^rad sqrt(M_q(V, eps/divisor)) deps.

    The entropy eps -> log N(eps/divisor) is a step function with jumps at
    divisor * r_k (greedy radii), so the integral is computed exactly.  The
    objective is convex and piecewise linear in delta, so the infimum is
    attained at 0, rad or one of the jumps.  ``delta_grid`` restricts delta to
    the given values instead.  ``entropy="exact"`` uses minimal covers (m <= 20).
    """
    M = _dedup(_mat(V))
    if M.shape[0] == 0:
        return DudleyResult(0.0, 0.0, 0.0)
    n = M.shape[1]
    rad = float(qnorm(M, q).max())
    if entropy == "greedy":
        radii = greedy_radii(M, q)
    elif entropy == "exact":
        # minimal cover sizes define a step function with jumps at pairwise distances
        dists = np.unique(qnorm(M[:, None, :] - M[None, :, :], q))
        counts = [_exact_cover(M, q, d) for d in dists]
        # radii[k-1] = smallest eps with cover size <= k, expressed as a non-increasing list
        radii = np.array([min(d for d, c in zip(dists, counts) if c <= k) for k in range(1, M.shape[0] + 1)])
    else:
        raise InputError(f"unknown entropy mode {entropy!r}")
    # pieces: on eps in [divisor*r_k, divisor*r_{k-1}) the cover size is k (r_0 = inf)
    lo = divisor * radii  # lo[k-1] is the start of the piece with count k
    hi = np.concatenate([[np.inf], lo[:-1]])
    heights = np.sqrt(np.log(np.arange(1, len(radii) + 1)))

    def integral(delta):
        a = np.clip(lo, delta, rad)
        b = np.clip(hi, delta, rad)
        return float(np.sum(heights * (b - a)))

    def objective(delta):
        return 2.0 * delta + 4.0 / math.sqrt(n) * integral(delta)

    if delta_grid is None:
        cands = np.concatenate([[0.0, rad], lo[(lo > 0) & (lo < rad)]])
    else:
        cands = np.asarray(delta_grid, float)
        cands = cands[(cands >= 0) & (cands <= rad)]
        if cands.size == 0:
            cands = np.array([rad])
    vals = [objective(d) for d in cands]
    i = int(np.argmin(vals))
    return DudleyResult(float(vals[i]), float(cands[i]), rad)


def dyadic_deltas(rad: float, levels: int = 20) -> np.ndarray:
    return np.concatenate([[0.0], rad * 2.0 ** -np.arange(levels, -1, -1)])


# critical radii

@dataclass
class RadiusResult:
    radius: float
    saturated: bool = False
    evaluations: int = 0
    details: dict = field(default_factory=dict)

    def __float__(self):
        return self.radius


def critical_radius(evaluator: Callable[[float], float], c: float, r_max: float,
                    octaves: int = 20, per_octave: int = 16) -> RadiusResult:
    """Smallest r on the grid r_max * 2^(-i/per_octave), i <= octaves*per_octave,
    with evaluator(r) <= r^2 / (2c), found by bisection.

    The evaluator is assumed non-decreasing and the feasible set an up-set (as
    for star-shaped classes).  If r_max itself is infeasible, r_max is returned
    with saturated=True.
    """
    if not c > 0:
        raise InputError("c must be > 0")
    if r_max <= 0:
        return RadiusResult(0.0, False, 0)
    grid = r_max * 2.0 ** (-np.arange(octaves * per_octave, -1, -1) / per_octave)
    calls = 0

    def ok(i):
        nonlocal calls
        calls += 1
        r = grid[i]
        return evaluator(r) <= r * r / (2 * c)

    if not ok(len(grid) - 1):
        return RadiusResult(float(r_max), True, calls)
    if ok(0):
        return RadiusResult(float(grid[0]), False, calls)
    lo, hi = 0, len(grid) - 1  # ok(lo) false, ok(hi) true
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return RadiusResult(float(grid[hi]), False, calls)


def _prefix_complexities(M: np.ndarray, order: np.ndarray, method: str, draws, seed,
                         threads: int = 1, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Complexity of the first k rows (in ``order``) for every k = 1..m.

    Uses common random numbers across prefixes, so the output is monotone.
    """
    Ms = M[order]
    n = M.shape[1]
    if method == "dudley":
        return np.array([dudley(Ms[:k + 1]).value for k in range(len(Ms))])
    if method == "rademacher" and draws is None:
        sums = None
        total = 1 << n
        if n > EXACT_MAX_N:
            raise CapabilityError(f"exact enumeration supports n <= {EXACT_MAX_N}")
        for s in range(0, total, _ENUM_CHUNK):
            E = _sign_block(s, min(_ENUM_CHUNK, total - s), n)
            part = np.maximum.accumulate(E @ Ms.T, axis=1).sum(axis=0)
            sums = part if sums is None else sums + part
        return sums / total / n
    if method not in ("rademacher", "gaussian"):
        raise InputError(f"unknown complexity method {method!r}")

    def run(gen, size):
        if method == "rademacher":
            E = gen.integers(0, 2, size=(size, n), dtype=np.int8).astype(float) * 2.0 - 1.0
        else:
            E = gen.standard_normal((size, n))
        return np.maximum.accumulate(E @ Ms.T, axis=1).sum(axis=0)

    parts = rng.map_chunks(run, int(draws), seed, 3, threads=threads)
    return np.sum(parts, axis=0) / int(draws) / n


def _last_infeasible(breaks: np.ndarray, values: np.ndarray, threshold_c: float) -> float:
    """sup{r : E(r) > r^2/(2c)} for a right-continuous step function E that
    equals values[k] on [breaks[k], breaks[k+1])."""
    best = 0.0
    nxt = np.concatenate([breaks[1:], [np.inf]])
    for b, e, b2 in zip(breaks, values, nxt):
        r_ok = math.sqrt(2 * threshold_c * max(e, 0.0))
        if r_ok > b:
            best = max(best, min(r_ok, b2))
    return best


def _step_max(stress_norms: list, stress_vals: list):
    """Pointwise max of several step functions given as (sorted norms, prefix values)."""
    breaks = np.unique(np.concatenate([np.asarray(s) for s in stress_norms] + [[0.0]]))
    vals = np.zeros(len(breaks))
    for norms, pv in zip(stress_norms, stress_vals):
        k = np.searchsorted(norms, breaks, side="right")  # rows with norm <= break
        v = np.where(k > 0, pv[np.maximum(k - 1, 0)], 0.0)
        vals = np.maximum(vals, v)
    return breaks, vals


def critical_radius_finite(stress: Sequence, c: float, method: str = "rademacher",
                           draws: Optional[int] = None, seed: int = 0, threads: int = 1) -> RadiusResult:
    """Worst-case critical radius of a finite class over a stress set of evaluations.

    Each entry of ``stress`` is the class evaluated on one point configuration
    (a zero row is added when missing).  The localized complexity r ->
    max_s C(V_s[r]) is a step function in r, and the result is the exact
    sup{r : C > r^2/(2c)}: beyond it every radius satisfies the fixed-point
    inequality.  For star-shaped classes this equals the infimum in the usual
    definition.
    """
    if not c > 0:
        raise InputError("c must be > 0")
    all_norms, all_vals = [], []
    for s_idx, V in enumerate(stress):
        M = _mat(V)
        if not np.any(np.all(M == 0, axis=1)):
            M = np.vstack([np.zeros(M.shape[1]), M])
        norms = qnorm(M, 2)
        order = np.argsort(norms, kind="stable")
        pv = _prefix_complexities(M, order, method, draws, seed + 7919 * s_idx, threads)
        all_norms.append(norms[order])
        all_vals.append(pv)
    breaks, vals = _step_max(all_norms, all_vals)
    r = _last_infeasible(breaks, vals, c)
    return RadiusResult(r, False, len(breaks), {"breaks": breaks, "values": vals})


def cross_critical_radius(F_cnt: Sequence, H: Sequence, draws: Optional[int] = None, seed: int = 0,
                          threads: int = 1) -> RadiusResult:
    """Critical radius (c = 1) of r -> R_n(F_cnt[r] (.) H), localizing only F_cnt.

    ``F_cnt`` and ``H`` are parallel lists: the two classes evaluated on each
    stress configuration.  Exact enumeration when draws is None (n <= 20).
    """
    if len(F_cnt) != len(H):
        raise ShapeError("F_cnt and H stress lists must have equal length")
    all_norms, all_vals = [], []
    for s_idx, (Fv, Hv) in enumerate(zip(F_cnt, H)):
        Fm, Hm = _mat(Fv), _mat(Hv)
        if Fm.shape[1] != Hm.shape[1]:
            raise ShapeError("families must share the evaluation points")
        if not np.any(np.all(Fm == 0, axis=1)):
            Fm = np.vstack([np.zeros(Fm.shape[1]), Fm])
        n = Fm.shape[1]
        norms = qnorm(Fm, 2)
        order = np.argsort(norms, kind="stable")
        Fs = Fm[order]

        def per_f_sup(E):
            # sup over h of <E * f, h> for each f, then running max over sorted f
            S = np.einsum("dn,fn,hn->dfh", E, Fs, Hm, optimize=True).max(axis=2)
            return np.maximum.accumulate(S, axis=1)

        if draws is None:
            if n > EXACT_MAX_N:
                raise CapabilityError(f"exact enumeration supports n <= {EXACT_MAX_N}")
            total, acc = 1 << n, 0.0
            for s in range(0, total, _ENUM_CHUNK // 4):
                E = _sign_block(s, min(_ENUM_CHUNK // 4, total - s), n)
                acc = acc + per_f_sup(E).sum(axis=0)
            pv = acc / total / n
        else:
            def run(gen, size):
                E = gen.integers(0, 2, size=(size, n), dtype=np.int8).astype(float) * 2.0 - 1.0
                return per_f_sup(E).sum(axis=0)
            parts = rng.map_chunks(run, int(draws), seed + 7919 * s_idx, 4, chunk=1024,
                                   threads=threads)
            pv = np.sum(parts, axis=0) / int(draws) / n
        all_norms.append(norms[order])
        all_vals.append(pv)
    breaks, vals = _step_max(all_norms, all_vals)
    r = _last_infeasible(breaks, vals, 1.0)
    return RadiusResult(r, False, len(breaks), {"breaks": breaks, "values": vals})


# Hoelder product bound

@dataclass
class HolderResult:
    rhs: float
    rad_q_U: float
    dudley_p_V: float
    rad_p_V: float
    dudley_q_U: float

    def __float__(self):
        return self.rhs


def _inv(p):
    return 0.0 if p == np.inf else 1.0 / p


def holder_product_bound(V, U, p: float, q: float, divisor: float = 2.0) -> HolderResult:
    """rad_q(U) D_{n,p}(V) + rad_p(V) D_{n,q}(U), with zero rows added to V and U."""
    if p < 2 or q < 2 or _inv(p) + _inv(q) > 0.5 + 1e-15:
        raise InputError("need p, q in [2, inf] with 1/p + 1/q <= 1/2")
    Vm, Um = _mat(V), _mat(U)
    if Vm.shape[1] != Um.shape[1]:
        raise ShapeError("V and U must share n")
    Vz = EvaluatedFamily(Vm).with_zero().matrix
    Uz = EvaluatedFamily(Um).with_zero().matrix
    dV = dudley(Vz, p, divisor=divisor).value
    dU = dudley(Uz, q, divisor=divisor).value
    rU = float(qnorm(Uz, q).max())
    rV = float(qnorm(Vz, p).max())
    return HolderResult(rU * dV + rV * dU, rU, dV, rV, dU)


# offset contraction

@dataclass
class OffsetCheck:
    lhs: float
    rhs: float
    holds: bool


def offset_contraction_check(V, L: float, phi: Callable, phi_tilde: Callable,
                             slack: float = 1e-12) -> OffsetCheck:
    """Exact E_eps sup_v sum eps_i phi(v_i) - phi_tilde(v_i) against the same
    with L eps_i v_i in place of eps_i phi(v_i).  n <= 20."""
    M = _mat(V)
    n = M.shape[1]
    if n > EXACT_MAX_N:
        raise CapabilityError(f"offset check enumerates 2^n patterns; n <= {EXACT_MAX_N}")
    off = np.asarray(phi_tilde(M), float).sum(axis=1)
    PM = np.asarray(phi(M), float)
    lhs = float(np.mean(_all_sign_sups(PM, lambda S: (S - off).max(axis=1))))
    rhs = float(np.mean(_all_sign_sups(L * M, lambda S: (S - off).max(axis=1))))
    return OffsetCheck(lhs, rhs, lhs <= rhs + slack)
