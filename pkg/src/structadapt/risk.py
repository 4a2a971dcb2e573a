"""Monte Carlo risk, rate formulas, slope fits and threshold calibration."""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, DomainError
from .estimator import bandwidth_grid, estimate_many, matrix_single
from .model import TargetFunction, cell_normals, simulate_batch
from .selector import (SelectionConfig, SelectionStats, _h_hat_index, apply_rule,
                       select_batch, selection_statistics, thresholds)

__all__ = [
    "RiskReport",
    "RateQuery",
    "CalibrationResult",
    "config_digest",
    "run_selector",
    "pointwise_risk",
    "global_risk",
    "rate_psi",
    "rate_phi",
    "oracle_ratio",
    "slope_regression",
    "null_statistics",
    "calibrate_threshold",
]

Z95 = 1.959963984540054
DEFAULT_C_GRID = tuple(0.25 * k for k in range(1, 17))


def config_digest(obj):
    """SHA-256 of a canonical JSON rendering."""
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(raw.encode()).hexdigest()


def _cfg_summary(cfg):
    return {"threshold_const": cfg.threshold_const, "r": cfg.r, "n_theta": cfg.sphere.n_theta,
            "levels": list(cfg.bandwidths.levels), "normalize": cfg.normalize}


def _target_id(target):
    return {"link": target.link.name, "params": list(target.link.params), "angle": target.index.angle}


@dataclass
class RiskReport:
    risk_value: float
    half_width: float
    n_replications: int
    per_replication_errors: np.ndarray | None = field(default=None, repr=False)
    metadata: dict = field(default_factory=dict)
    h_hat: np.ndarray | None = field(default=None, repr=False)
    theta_index: np.ndarray | None = field(default=None, repr=False)


def _moment_report(abs_err, r):
    m = abs_err**r
    mean = float(m.mean())
    se = float(m.std(ddof=1) / math.sqrt(m.size)) if m.size > 1 else 0.0
    risk = mean ** (1.0 / r)
    hw = Z95 * se * (mean ** (1.0 / r - 1.0) / r) if mean > 0 else 0.0
    return risk, hw


@dataclass
class SelectorRun:
    estimates: np.ndarray
    h_hat: np.ndarray
    theta_index: np.ndarray
    fell_back: np.ndarray


def run_selector(target, kernel, cfg, x, epsilon, n, seeds, batch=32, mode="select", theta=None):
    """Estimates at x for fields simulated with the given seeds.

    ``mode`` is ``"select"`` (full rule), ``"h_only"`` (bandwidth step with a
    supplied index ``theta``) or ``"fixed"`` (``theta`` and the largest level).
    """
    est, hh, ti, fb = [], [], [], []
    for lo in range(0, len(seeds), batch):
        Y = simulate_batch(target, epsilon, n, list(seeds[lo:lo + batch]))
        if mode == "select":
            for tr in select_batch(Y, kernel, x, cfg, epsilon=epsilon):
                est.append(tr.estimate)
                hh.append(tr.h_hat)
                ti.append(tr.theta_hat_index)
                fb.append(tr.fell_back)
        elif mode in ("h_only", "fixed"):
            levels = cfg.bandwidths.levels
            if mode == "fixed":
                levels = levels[:1]
            th = thresholds(levels, epsilon, cfg.threshold_const)
            S = estimate_many(Y, kernel, [matrix_single(theta, h) for h in levels], x, cfg.normalize)
            for b in range(S.shape[1]):
                l = _h_hat_index(S[:, b], th)
                est.append(S[l, b])
                hh.append(levels[l])
                ti.append(-1)
                fb.append(False)
        else:
            raise ConfigurationError(f"unknown mode {mode!r}")
    return SelectorRun(np.array(est), np.array(hh), np.array(ti), np.array(fb))


def pointwise_risk(target, kernel, cfg, x, r, epsilon, n, n_reps, base_seed, batch=32,
                   mode="select", theta=None, min_reps=100):
    if n_reps < min_reps:
        raise ConfigurationError(f"n_reps must be >= {min_reps}")
    if r >= 4 and n_reps < 400:
        n_reps = 400
    seeds = [base_seed + i for i in range(n_reps)]
    run = run_selector(target, kernel, cfg, x, epsilon, n, seeds, batch, mode, theta)
    truth = float(target(np.asarray(x, dtype=float)))
    err = run.estimates - truth
    risk, hw = _moment_report(np.abs(err), r)
    meta = {"target": _target_id(target), "epsilon": epsilon, "n": n, "x": list(map(float, x)), "r": r,
            "cfg_digest": config_digest(_cfg_summary(cfg)), "base_seed": base_seed, "mode": mode}
    return RiskReport(risk, hw, n_reps, err, meta, run.h_hat, run.theta_index)


def x_grid(size):
    g = -0.5 + (np.arange(size) + 0.5) / size
    return [(a, b) for a in g for b in g]


def global_risk(target, kernel, cfg, r, epsilon, n, x_grid_size, n_reps, base_seed, batch=32,
                min_grid=16, min_reps=2):
    """E ||F_hat - F||_r over [-1/2, 1/2]^2 by midpoint quadrature on a square grid."""
    if x_grid_size < min_grid:
        raise ConfigurationError(f"x_grid_size must be >= {min_grid}")
    if n_reps < min_reps:
        raise ConfigurationError(f"n_reps must be >= {min_reps}")
    pts = x_grid(x_grid_size)
    seeds = [base_seed + i for i in range(n_reps)]
    errs = np.empty((n_reps, len(pts)))
    hmap = np.empty((n_reps, len(pts)))
    for k, x in enumerate(pts):
        run = run_selector(target, kernel, cfg, x, epsilon, n, seeds, batch)
        errs[:, k] = run.estimates - float(target(np.asarray(x)))
        hmap[:, k] = run.h_hat
    norms = np.mean(np.abs(errs) ** r, axis=1) ** (1.0 / r)
    hw = Z95 * norms.std(ddof=1) / math.sqrt(n_reps) if n_reps > 1 else 0.0
    meta = {"target": _target_id(target), "epsilon": epsilon, "n": n, "r": r, "x_grid_size": x_grid_size,
            "cfg_digest": config_digest(_cfg_summary(cfg)), "base_seed": base_seed}
    return RiskReport(float(norms.mean()), float(hw), n_reps, errs, meta, hmap)


# -- rates --------------------------------------------------------------------

@dataclass(frozen=True)
class RateQuery:
    beta: float
    L: float
    p: float = math.inf
    r: float = 2.0
    epsilon: float = 0.01

    def __post_init__(self):
        if not self.beta > 0 or not self.L > 0:
            raise DomainError("beta and L must be positive")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")


def _noise(eps):
    return eps * math.sqrt(math.log(1.0 / eps))


def rate_psi(q):
    b = q.beta
    return q.L ** (1.0 / (2 * b + 1)) * _noise(q.epsilon) ** (2 * b / (2 * b + 1))


def _exact(v):
    return v if isinstance(v, Fraction) else Fraction(v)


def phi_regime(q):
    """+1, 0 or -1 as (2 beta + 1) p is above, equal to or below r."""
    if math.isinf(q.p):
        return 1
    lhs = (2 * _exact(q.beta) + 1) * _exact(q.p)
    rhs = _exact(q.r)
    return (lhs > rhs) - (lhs < rhs)


def rate_phi(q):
    if not q.p > 1:
        raise DomainError("p must exceed 1")
    inv_p = 0.0 if math.isinf(q.p) else 1.0 / float(q.p)
    b = float(q.beta)
    if b <= inv_p:
        raise DomainError("rate requires beta > 1/p")
    reg = phi_regime(q)
    if reg > 0:
        return rate_psi(q)
    if reg == 0:
        return rate_psi(q) * math.log(1.0 / q.epsilon) ** (1.0 / float(q.r))
    r = float(q.r)
    den = b - inv_p + 0.5
    return q.L ** ((0.5 - 1.0 / r) / den) * _noise(q.epsilon) ** ((b - inv_p + 1.0 / r) / den)


def slope_regression(epsilons, risks):
    """Least squares of ln(risk) on ln(eps sqrt(ln(1/eps))); returns (slope, intercept, rms residual)."""
    eps = np.asarray(epsilons, dtype=float)
    rk = np.asarray(risks, dtype=float)
    if eps.size < 4 or eps.size != rk.size:
        raise DomainError("need at least 4 matching (epsilon, risk) points")
    if np.any(rk <= 0):
        raise DomainError("risks must be positive")
    xs = np.log(eps * np.sqrt(np.log(1.0 / eps)))
    A = np.stack([xs, np.ones_like(xs)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.log(rk), rcond=None)
    resid = np.log(rk) - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid**2)))


def oracle_ratio(target, kernel, cfg, x, r, epsilon, n, n_reps, base_seed=0, report=None, **kw):
    """Empirical risk over the unit-constant oracle bound."""
    from .oracle import oracle_bandwidth
    y = float(np.dot(np.asarray(x, dtype=float), target.index.components))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h_star = oracle_bandwidth(kernel, target.link, y, epsilon)
    if report is None:
        report = pointwise_risk(target, kernel, cfg, x, r, epsilon, n, n_reps, base_seed, **kw)
    k2 = kernel.norm_sup**2
    den = k2 * _noise(epsilon) / math.sqrt(h_star) + k2 * _noise(epsilon)
    return report.risk_value / den


# -- calibration --------------------------------------------------------------

_NULL_CACHE = {}


def null_statistics(kernel, n, sphere, levels, x, n_reps, base_seed=10_000_000, batch=32):
    """Selection statistics under F = 0 at unit noise level.

    Every statistic is linear in the data, so the statistics at noise level
    eps are these times eps.
    """
    key = (kernel.coeffs, n, sphere.n_theta, tuple(levels), tuple(x), n_reps, base_seed)
    if key in _NULL_CACHE:
        return _NULL_CACHE[key]
    delta = 2.0 / n
    singles, D = [], []
    for lo in range(0, n_reps, batch):
        seeds = range(base_seed + lo, base_seed + min(n_reps, lo + batch))
        Y = np.stack([delta * cell_normals(s, n) for s in seeds], axis=-1)
        st = selection_statistics(Y, kernel, x, sphere, levels, None)
        singles.append(st.singles)
        D.append(st.D)
    out = SelectionStats(tuple(levels), sphere.n_theta, np.concatenate(singles, axis=2), np.concatenate(D, axis=2))
    _NULL_CACHE[key] = out
    return out


@dataclass
class CalibrationResult:
    constant: float
    grid: tuple
    acceptance_rate: tuple
    epsilon: float
    n: int
    n_reps: int

    def __float__(self):
        return float(self.constant)


def calibrate_threshold(kernel, epsilon, n, c_grid=DEFAULT_C_GRID, n_reps=500, n_theta=512,
                        x=(0.0, 0.0), c_grid_floor=8.0, target_rate=0.99, base_seed=10_000_000, batch=32):
    """Smallest C on the grid with P(h_hat = 1) >= target_rate under F = 0."""
    from .estimator import sphere_grid
    c_grid = tuple(float(c) for c in c_grid)
    if not c_grid or any(b <= a for a, b in zip(c_grid, c_grid[1:])):
        raise ConfigurationError("calibration grid must be nonempty and ascending")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bw = bandwidth_grid(epsilon, 2.0 / n, c_grid_floor)
    sphere = sphere_grid(n_theta)
    stats = null_statistics(kernel, n, sphere, bw.levels, tuple(x), n_reps, base_seed, batch).scaled(epsilon)
    rates = []
    for c in c_grid:
        th = thresholds(bw.levels, epsilon, c)
        rule = apply_rule(stats, th, sphere)
        rates.append(float(np.mean(rule.h_hat_idx == 0)))
    passing = [c for c, a in zip(c_grid, rates) if a >= target_rate]
    if passing:
        const = passing[0]
    else:
        warnings.warn("no threshold constant on the grid reaches the target acceptance rate", stacklevel=2)
        const = c_grid[-1]
    return CalibrationResult(const, c_grid, tuple(rates), epsilon, n, n_reps)
