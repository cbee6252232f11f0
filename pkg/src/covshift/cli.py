"""covshift command line: sweep | bounds | complexity <config.json>."""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import distmodel as dm
from . import empproc as ep
from . import erm, rates, rng, shift
from .errors import ConfigError, CovShiftError, NumericError
from .funclass import EvaluatedFamily, FiniteFamily, hadamard, random_fourier_features

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
CONFIG_DIR = Path(__file__).with_name("configs")


# json helpers

def _num(v):
    if isinstance(v, str) and v in ("inf", "-inf"):
        return float(v)
    return v


def jsonable(obj):
    """Replace non-finite floats by strings and numpy types by builtins."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")


# configs

@dataclass
class SweepConfig:
    mode: str = "simple-x"
    grid_points: int = 64
    lo: float = -4.0
    hi: float = 7.0
    means: tuple = (0.0, 3.0)
    scale: float = 1.0
    train_p: tuple = (0.01, 0.01)
    sweep_values: tuple = (0.1, 0.2, 0.5, 0.9, 0.99)
    n: int = 2000
    noise: float = 0.5
    simple_features: int = 2
    complex_features: int = 32
    simple_bandwidth: float = 0.3
    complex_bandwidth: float = 1.5
    ridge: float = 1e-6
    seed: int = 0
    num_seeds: int = 4

    KIND = "sweep"

    def validate(self):
        if self.mode not in ("simple-x", "simple-y"):
            raise ConfigError("mode must be 'simple-x' or 'simple-y'")
        if self.grid_points < 2 or self.n < 1 or self.num_seeds < 1:
            raise ConfigError("grid_points >= 2, n >= 1 and num_seeds >= 1 required")
        if not self.lo < self.hi or self.scale <= 0 or self.noise < 0:
            raise ConfigError("need lo < hi, scale > 0, noise >= 0")
        if len(self.means) != 2 or len(self.train_p) != 2:
            raise ConfigError("means and train_p need two entries")
        for p in list(self.train_p) + list(self.sweep_values):
            if not 0 <= p <= 1:
                raise ConfigError("mixing probabilities must lie in [0, 1]")
        if not 1 <= self.simple_features < self.complex_features:
            raise ConfigError("need 1 <= simple_features < complex_features")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")


@dataclass
class BoundsConfig:
    train: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    f: list = field(default_factory=list)
    g: list = field(default_factory=list)
    B: float | None = None
    F: dict | None = None
    G: dict | None = None
    t: list | None = None
    alpha: float = 1.0
    nu: list = field(default_factory=lambda: [1.0, 1.0])

    KIND = "bounds"

    def validate(self):
        self.envs()
        if self.t is not None and len(self.t) != 2:
            raise ConfigError("t must be [t1, t2]")
        if len(self.nu) != 2:
            raise ConfigError("nu must be [nu1, nu2]")

    def envs(self):
        return dm.DiscreteEnv.from_dict(self.train), dm.DiscreteEnv.from_dict(self.test)


@dataclass
class ComplexityConfig:
    family: dict = field(default_factory=dict)
    partner: dict | None = None
    levels: int = 20
    draws: int = 4000
    c: float = 1.0
    holder_pairs: list = field(default_factory=lambda: [[2, "inf"], [4, 4], ["inf", 2]])
    p_candidates: list = field(default_factory=lambda: list(rates.DEFAULT_P))
    seed: int = 0

    KIND = "complexity"

    def validate(self):
        _family_matrix(self.family, "family")
        if self.partner is not None:
            _family_matrix(self.partner, "partner")
        if self.levels < 1 or self.draws < 2 or self.c <= 0:
            raise ConfigError("levels >= 1, draws >= 2 and c > 0 required")
        for pq in self.holder_pairs:
            if len(pq) != 2:
                raise ConfigError("holder_pairs entries are [p, q]")


KINDS = {c.KIND: c for c in (SweepConfig, BoundsConfig, ComplexityConfig)}
_TUPLES = {"means", "train_p", "sweep_values"}


def parse_config(d: dict):
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    if d.get("schema") != SCHEMA:
        raise ConfigError(f"config needs \"schema\": {SCHEMA}")
    kind = d.get("command")
    if kind not in KINDS:
        raise ConfigError(f"config needs \"command\" in {sorted(KINDS)}")
    cls = KINDS[kind]
    body = {k: v for k, v in d.items() if k not in ("schema", "command")}
    _check_keys(body, set(cls.__dataclass_fields__), f"{kind} config")
    body = {k: (tuple(v) if k in _TUPLES else v) for k, v in copy.deepcopy(body).items()}
    try:
        cfg = cls(**body)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    cfg.validate()
    return cfg


def config_to_dict(cfg) -> dict:
    out = {"schema": SCHEMA, "command": cfg.KIND}
    for k in cfg.__dataclass_fields__:
        v = getattr(cfg, k)
        out[k] = list(v) if isinstance(v, tuple) else copy.deepcopy(v)
    return out


def load_config(path) -> object:
    p = Path(path)
    if not p.exists() and (CONFIG_DIR / p.name).exists():
        p = CONFIG_DIR / p.name
    try:
        d = json.loads(p.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    return parse_config(d)


# sweep

def mixture_masses(grid: np.ndarray, means, scale: float, p: float) -> np.ndarray:
    """Two-component Gaussian mixture discretized onto grid cells (midpoint bins)."""
    edges = np.concatenate([[-np.inf], (grid[1:] + grid[:-1]) / 2, [np.inf]])
    cdf = lambda mu: norm.cdf((edges - mu) / scale)
    w = (1 - p) * np.diff(cdf(means[0])) + p * np.diff(cdf(means[1]))
    return w / w.sum()


def mixture_env(cfg: SweepConfig, px: float, py: float, f_star, g_star) -> dm.DiscreteEnv:
    grid = np.linspace(cfg.lo, cfg.hi, cfg.grid_points)
    P = np.outer(mixture_masses(grid, cfg.means, cfg.scale, px),
                 mixture_masses(grid, cfg.means, cfg.scale, py))
    P /= P.sum()
    return dm.DiscreteEnv.from_joint(P, cfg.noise, f_star, g_star)


def _sweep_seed(cfg: SweepConfig, seed: int):
    grid = np.linspace(cfg.lo, cfg.hi, cfg.grid_points)[:, None]
    kx, ky = ((cfg.simple_features, cfg.complex_features) if cfg.mode == "simple-x"
              else (cfg.complex_features, cfg.simple_features))
    bx, by = ((cfg.simple_bandwidth, cfg.complex_bandwidth) if cfg.mode == "simple-x"
              else (cfg.complex_bandwidth, cfg.simple_bandwidth))
    Phi_x = random_fourier_features(grid, kx, bx, seed=seed * 2 + 1)
    Phi_y = random_fourier_features(grid, ky, by, seed=seed * 2 + 2)
    gen = rng.stream(seed, 70)
    f_star = Phi_x @ gen.standard_normal(kx) * math.sqrt(2.0)
    g_star = Phi_y @ gen.standard_normal(ky) * math.sqrt(2.0)
    train = mixture_env(cfg, cfg.train_p[0], cfg.train_p[1], f_star, g_star)
    s = dm.sample(train, cfg.n, seed)
    sol = erm.erm_linear(Phi_x[s.x_ids], Phi_y[s.y_ids], s.z, cfg.ridge)
    if not np.all(np.isfinite(sol.f_weights)) or not np.all(np.isfinite(sol.g_weights)):
        raise NumericError("least squares produced non-finite weights")
    f_hat, g_hat = Phi_x @ sol.f_weights, Phi_y @ sol.g_weights

    def mse(env):
        return erm.risk_pair(env, f_hat, g_hat, f_star, g_star) + cfg.noise ** 2

    rows = [("none", cfg.train_p[0], mse(train), seed)]
    for var in ("p_x", "p_y"):
        for p in cfg.sweep_values:
            px, py = (p, cfg.train_p[1]) if var == "p_x" else (cfg.train_p[0], p)
            rows.append((var, p, mse(mixture_env(cfg, px, py, f_star, g_star)), seed))
    return rows


def run_sweep(cfg: SweepConfig, seed: int | None = None, threads: int = 1) -> list:
    base = cfg.seed if seed is None else seed
    seeds = [base + i for i in range(cfg.num_seeds)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda s: _sweep_seed(cfg, s), seeds))
    else:
        parts = [_sweep_seed(cfg, s) for s in seeds]
    rows = [r for part in parts for r in part]
    for r in rows:
        if not math.isfinite(r[2]):
            raise NumericError(f"non-finite mse at {r}")
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["swept_var", "p", "mse", "seed"])
    for var, p, m, s in rows:
        w.writerow([var, repr(float(p)), repr(float(m)), int(s)])
    return buf.getvalue()


def degradation(rows) -> dict:
    """Mean over seeds of mse(p) - mse(train) per swept variable and p."""
    base = {s: m for v, _, m, s in rows if v == "none"}
    out: dict = {}
    for v, p, m, s in rows:
        if v != "none":
            out.setdefault(v, {}).setdefault(p, []).append(m - base[s])
    return {v: {p: float(np.mean(d)) for p, d in sorted(ps.items())} for v, ps in out.items()}


# bounds

def run_bounds(cfg: BoundsConfig) -> dict:
    train, test = cfg.envs()
    f = np.asarray(cfg.f, float)
    g = np.asarray(cfg.g, float)
    if f.shape != (train.num_x,) or g.shape != (train.num_y,):
        raise ConfigError("f / g tables must have num_x / num_y entries")
    F = FiniteFamily.from_dict(cfg.F, train.num_y).values if cfg.F else None
    G = FiniteFamily.from_dict(cfg.G, train.num_y).values if cfg.G else None
    rep = shift.shift_report(train, test, f, g, cfg.B, F, G, nu=tuple(cfg.nu), alpha=cfg.alpha)
    out = rep.to_dict()
    if cfg.t is not None:
        fixed = shift.transfer_bounds(train, test, f, g, "tail", cfg.B, F, G, t=tuple(cfg.t))
        out["bounds"]["tail_fixed_t"] = fixed.to_dict()
    for name, b in out["bounds"].items():
        b["sound"] = b["bound"] >= b["r_test"] - 1e-10
    out["config"] = config_to_dict(cfg)
    return out


# complexity

def _family_matrix(spec: dict, where: str) -> np.ndarray:
    _check_keys(spec, {"kind", "m", "n", "B", "seed", "values"}, where)
    kind = spec.get("kind")
    if kind == "matrix":
        M = np.asarray(spec.get("values"), float)
        if M.ndim != 2 or M.size == 0 or not np.all(np.isfinite(M)):
            raise ConfigError(f"{where}.values must be a finite nonempty m x n matrix")
        return M
    if kind == "random":
        try:
            m, n, B = int(spec["m"]), int(spec["n"]), float(spec.get("B", 1.0))
        except KeyError as e:
            raise ConfigError(f"{where} needs {e}") from None
        if m < 1 or n < 1 or B <= 0:
            raise ConfigError(f"{where}: need m, n >= 1 and B > 0")
        gen = rng.stream(int(spec.get("seed", 0)), 80)
        return B * gen.uniform(-1, 1, (m, n))
    raise ConfigError(f"{where}.kind must be 'matrix' or 'random'")


def run_complexity(cfg: ComplexityConfig, seed: int | None = None, threads: int = 1):
    seed = cfg.seed if seed is None else seed
    V = _family_matrix(cfg.family, "family")
    m, n = V.shape
    curves = {q: ep.entropy_curve(V, q, cfg.levels) for q in (2.0, np.inf)}
    dud = ep.dudley(V, 2.0)
    rad = ep.rademacher(V, draws=cfg.draws, seed=seed, threads=threads)
    gau = ep.gaussian(V, draws=cfg.draws, seed=seed, threads=threads)
    radius = ep.critical_radius_finite([V], cfg.c, "rademacher", cfg.draws, seed, threads)
    chaining = {
        "m": m, "n": n,
        "dudley_value": dud.value, "chosen_delta": dud.chosen_delta, "rad_2": dud.rad,
        "critical_radius": radius.radius, "c": cfg.c, "cross_radius": None,
        "rademacher": vars(rad), "gaussian": vars(gau), "massart": ep.massart_bound(V),
        "entropy_curves": {("inf" if q == np.inf else "2"): c.to_dict() for q, c in curves.items()},
        "holder_ledger": [],
    }
    if cfg.partner is not None:
        U = _family_matrix(cfg.partner, "partner")
        if U.shape[1] != n:
            raise ConfigError("partner must share n with family")
        prod = hadamard(EvaluatedFamily(V).with_zero(), EvaluatedFamily(U).with_zero())
        mc = ep.rademacher(prod, draws=cfg.draws, seed=seed + 1, threads=threads)
        for p, q in cfg.holder_pairs:
            p, q = float(_num(p)), float(_num(q))
            h = ep.holder_product_bound(V, U, p, q)
            chaining["holder_ledger"].append({
                "p": p, "q": q, "lhs_estimate": mc.value, "lhs_std_error": mc.std_error,
                "rhs_bound": h.rhs, "rad_q_U": h.rad_q_U, "dudley_p_V": h.dudley_p_V,
                "rad_p_V": h.rad_p_V, "dudley_q_U": h.dudley_q_U,
                "sound": mc.value <= h.rhs + 3 * mc.std_error})
        cross = ep.cross_critical_radius([V], [U], draws=None if n <= 14 else cfg.draws,
                                         seed=seed + 2, threads=threads)
        chaining["cross_radius"] = cross.radius
    fit = rates.fit_entropy_family(curves[2.0], cfg.p_candidates, n, cfg.c)
    d1 = max(1.0, math.log(max(m, 1)))
    spec = rates.RateSpec(fit, n, cfg.c,
                          rates.rate_q(curves[2.0], cfg.c, n, cfg.p_candidates),
                          rates.rate_star(curves[np.inf], n, cfg.p_candidates))
    spec.regime_table = {r: rates.phi_n(d1, d1, n, r) for r in ("four_four", "subgaussian")}
    return chaining, spec.to_dict(), curves


# entry point

def _write(out: Path, name: str, text: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="covshift", description=__doc__)
    ap.add_argument("command", choices=sorted(KINDS))
    ap.add_argument("config")
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=1)
    a = ap.parse_args(argv)
    out = Path(a.out)
    try:
        cfg = load_config(a.config)
        if cfg.KIND != a.command:
            raise ConfigError(f"config is for '{cfg.KIND}', not '{a.command}'")
        if a.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if a.command == "sweep":
            rows = run_sweep(cfg, a.seed, a.threads)
            _write(out, "sweep.csv", sweep_csv(rows))
            print(dumps({"degradation": degradation(rows)}), end="")
        elif a.command == "bounds":
            rep = run_bounds(cfg)
            _write(out, "bounds.json", dumps(rep))
            print(dumps({k: {"bound": v["bound"], "sound": v["sound"]}
                         for k, v in rep["bounds"].items()}), end="")
        else:
            chaining, rspec, curves = run_complexity(cfg, a.seed, a.threads)
            _write(out, "chaining.json", dumps(chaining))
            _write(out, "rates.json", dumps(rspec))
            for q, c in curves.items():
                _write(out, f"entropy_q{'inf' if q == np.inf else '2'}.csv", c.to_csv())
            print(dumps({"p": rspec["p"], "tau": rspec["tau"], "rate_q": rspec["rate_q"]}), end="")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except CovShiftError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
