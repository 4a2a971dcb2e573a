"""Data-driven choice of index and bandwidth.

The rule works in two stages.  For every grid index theta and bandwidth
level h it forms

    R(theta, h) = max_{eta <= h} [ max_nu |F(theta, nu, eta) - F(nu, eta)| - TH(eta) ],

accepts the pairs with R <= 0, keeps the largest accepted h and among its
indices the one with the smallest first coordinate.  The bandwidth is then
re-chosen for that index by a Lepski-type scan over single-index estimates.

Computation is split into *statistics* (the single-index estimates and the
per-level maxima D(theta, eta) = max_nu |...|) and the cheap *rule* applied
to them, so that many threshold constants can be tried on one set of
statistics.  Statistics are evaluated for a batch of fields at once.

Levels are processed from the smallest bandwidth upwards.  R(theta, h) only
grows with h, so once every index has R > 0 no larger level can be accepted
and the remaining levels are skipped (``exhaustive=False``).  R values past
that point are reported as lower bounds; all decisions are unaffected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from . import _engine
from .errors import ConfigurationError
from .estimator import (BandwidthGrid, SphereGrid, _field_array, _kernel_arrays,
                        _single_entries)
from .model import IndexVector, ObservationField

__all__ = [
    "SelectionConfig",
    "SelectionTrace",
    "SelectionStats",
    "threshold",
    "thresholds",
    "selection_statistics",
    "apply_rule",
    "r_value",
    "r_value_direct",
    "select",
    "select_batch",
    "select_h_only",
]


@dataclass(frozen=True)
class SelectionConfig:
    threshold_const: float
    r: float
    sphere: SphereGrid
    bandwidths: BandwidthGrid
    normalize: bool = True
    exhaustive: bool = False

    def __post_init__(self):
        if not self.threshold_const >= 0 or math.isnan(self.threshold_const):
            raise ConfigurationError("threshold_const must be nonnegative")
        if self.r < 1:
            raise ConfigurationError("r must be >= 1")


def threshold(eta, epsilon, cfg):
    c = cfg.threshold_const if isinstance(cfg, SelectionConfig) else float(cfg)
    return c * epsilon * math.sqrt(math.log(1.0 / epsilon) / eta)


def thresholds(levels, epsilon, const):
    return np.array([threshold(h, epsilon, const) for h in levels])


# -- sphere bookkeeping -------------------------------------------------------

@dataclass(frozen=True)
class _PairLayout:
    s_table: np.ndarray
    dir_angle: np.ndarray
    ptr: np.ndarray
    ii: np.ndarray
    jj: np.ndarray
    dd: np.ndarray
    lex_order: np.ndarray


@lru_cache(maxsize=8)
def _layout(n_theta):
    sphere = SphereGrid(n_theta)
    half = n_theta // 2
    V = sphere.vectors
    i = np.repeat(np.arange(half), n_theta)
    j = np.tile(np.arange(n_theta), half)
    c = np.einsum("ij,ij->i", V[i], V[j])
    ip = np.where(c >= 0, i, (i + half) % n_theta)
    diff = (ip - j) % n_theta
    diff = np.where(diff > half, diff - n_theta, diff)
    if np.any(np.abs(diff) > n_theta // 4):
        raise AssertionError("pair layout: sign rule left an obtuse pair")
    q = (2 * j + diff) % n_theta
    order = np.lexsort((j, i, q))
    q, i, j, d = q[order], i[order], j[order] % half, np.abs(diff)[order]
    ptr = np.searchsorted(q, np.arange(n_theta + 1))
    step = sphere.step
    dmax = n_theta // 4
    s_table = np.array([1.0 / math.sqrt(2.0 * (1.0 + math.cos(k * step))) for k in range(dmax + 1)])
    dir_angle = np.arange(n_theta) * (math.pi / n_theta)
    lex = np.lexsort((V[:, 1], V[:, 0]))
    return _PairLayout(s_table, dir_angle, ptr.astype(np.int64), i.astype(np.int64),
                       j.astype(np.int64), d.astype(np.int64), lex)


# -- statistics ---------------------------------------------------------------

@dataclass
class SelectionStats:
    """Single-index estimates and pairwise maxima for a batch of fields.

    ``singles[l, j, b]`` is the estimate along grid vector j (j < n_theta/2,
    the antipodal half carries identical values) at level l;
    ``D[l, i, b]`` is max over the grid of |pair(i, nu) - single(nu)|, NaN
    for levels that were skipped.
    """

    levels: tuple
    n_theta: int
    singles: np.ndarray
    D: np.ndarray

    def scaled(self, factor):
        return SelectionStats(self.levels, self.n_theta, self.singles * factor, self.D * factor)

    def restrict(self, levels):
        idx = [self.levels.index(h) for h in levels]
        return SelectionStats(tuple(levels), self.n_theta, self.singles[idx], self.D[idx])


def single_estimates(Y, kernel, x, sphere, levels, normalize=True):
    half = sphere.n_theta // 2
    V = sphere.vectors[:half]
    mats = np.array([_single_entries(v[0], v[1], h) for h in levels for v in V])
    coeffs, radius = _kernel_arrays(kernel)
    delta = 2.0 / Y.shape[0]
    num, mass = _engine.direct_sums(Y, delta, mats, float(x[0]), float(x[1]), coeffs, radius, True)
    if normalize:
        est = num / (mass * delta * delta)[:, None]
    else:
        dets = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
        est = num * dets[:, None]
    return est.reshape(len(levels), half, Y.shape[2])


def selection_statistics(field, kernel, x, sphere, levels, th=None, normalize=True):
    """Compute singles and pairwise maxima.

    With ``th`` (thresholds per level) given, levels are skipped once no
    index of any field in the batch can still be accepted.
    """
    Y = _field_array(field)
    levels = tuple(levels)
    L = len(levels)
    half = sphere.n_theta // 2
    B = Y.shape[2]
    lay = _layout(sphere.n_theta)
    coeffs, radius = _kernel_arrays(kernel)
    delta = 2.0 / Y.shape[0]
    singles = single_estimates(Y, kernel, x, sphere, levels, normalize)
    D = np.full((L, half, B), np.nan)
    rmax = np.full((half, B), -np.inf)
    for l in range(L - 1, -1, -1):
        Dl = np.zeros((half, B))
        _engine.pair_level_stats(Y, delta, float(x[0]), float(x[1]), coeffs, radius, float(levels[l]),
                                 lay.s_table, lay.dir_angle, lay.ptr, lay.ii, lay.jj, lay.dd,
                                 np.ascontiguousarray(singles[l]), normalize, Dl)
        D[l] = Dl
        if th is not None:
            rmax = np.maximum(rmax, Dl - th[l])
            if not np.any(rmax <= 0):
                break
    return SelectionStats(levels, sphere.n_theta, singles, D)


# -- the rule -----------------------------------------------------------------

@dataclass
class RuleResult:
    R: np.ndarray            # (L, half, B), lower bounds where levels were skipped
    exact_from: int          # levels l >= exact_from carry exact R
    h_tilde_idx: np.ndarray  # (B,), -1 when nothing accepted
    theta_idx: np.ndarray    # (B,) full-grid index
    fell_back: np.ndarray
    h_hat_idx: np.ndarray
    estimate: np.ndarray


def _h_hat_index(S, th):
    """Largest level h with |S[h] - S[eta]| <= TH(eta) for all eta <= h; S has shape (L,)."""
    L = S.shape[0]
    for l in range(L):
        if np.all(np.abs(S[l] - S[l:]) <= th[l:]):
            return l
    return L - 1


def apply_rule(stats, th, sphere):
    L = len(stats.levels)
    half = stats.n_theta // 2
    B = stats.D.shape[2]
    lay = _layout(stats.n_theta)
    contrib = np.where(np.isnan(stats.D), -np.inf, stats.D - th[:, None, None])
    R = np.maximum.accumulate(contrib[::-1], axis=0)[::-1]
    computed = ~np.isnan(stats.D[:, 0, 0])
    exact_from = int(np.argmax(computed)) if computed.any() else L
    acc = R <= 0
    h_tilde = np.full(B, -1)
    theta = np.zeros(B, dtype=int)
    fell = np.ones(B, dtype=bool)
    h_hat = np.zeros(B, dtype=int)
    est = np.zeros(B)
    for b in range(B):
        rows = np.nonzero(acc[:, :, b].any(axis=1))[0]
        if rows.size:
            lt = int(rows[0])
            full = np.concatenate([acc[lt, :, b], acc[lt, :, b]])
            theta[b] = int(lay.lex_order[np.argmax(full[lay.lex_order])])
            h_tilde[b] = lt
            fell[b] = False
        j = theta[b] % half
        h_hat[b] = _h_hat_index(stats.singles[:, j, b], th)
        est[b] = stats.singles[h_hat[b], j, b]
    return RuleResult(R, exact_from, h_tilde, theta, fell, h_hat, est)


# -- traces -------------------------------------------------------------------

@dataclass
class SelectionTrace:
    levels: tuple
    n_theta: int
    r_array: np.ndarray = dc_field(repr=False)   # (n_theta, L)
    r_exact_from: int
    thresholds: np.ndarray = dc_field(repr=False)
    h_tilde: float | None
    theta_hat_index: int
    theta_hat: IndexVector
    fell_back: bool
    h_hat: float
    estimate: float

    @property
    def r_values(self):
        return {(i, h): float(self.r_array[i, l])
                for i in range(self.n_theta) for l, h in enumerate(self.levels)}

    @property
    def p_set(self):
        ii, ll = np.nonzero(self.r_array <= 0)
        return sorted(((int(i), self.levels[l]) for i, l in zip(ii, ll)), key=lambda t: (-t[1], t[0]))

    @property
    def theta_hat_set(self):
        if self.h_tilde is None:
            return []
        l = self.levels.index(self.h_tilde)
        return [int(i) for i in np.nonzero(self.r_array[:, l] <= 0)[0]]

    def to_dict(self, max_r_values=None):
        d = {
            "levels": list(self.levels),
            "n_theta": self.n_theta,
            "thresholds": [float(t) for t in self.thresholds],
            "r_exact_from_level": self.levels[self.r_exact_from] if self.r_exact_from < len(self.levels) else None,
            "p_set": [[i, h] for i, h in self.p_set],
            "h_tilde": self.h_tilde,
            "theta_hat_set": self.theta_hat_set,
            "theta_hat_index": self.theta_hat_index,
            "theta_hat_angle": self.theta_hat.angle,
            "theta_hat": [float(c) for c in self.theta_hat.components],
            "fell_back": self.fell_back,
            "h_hat": self.h_hat,
            "estimate": self.estimate,
        }
        size = self.r_array.size
        if max_r_values is None or size <= max_r_values:
            d["r_values"] = [[float(v) for v in row] for row in self.r_array]
        else:
            d["r_values"] = f"elided ({size} entries)"
        return d


def _traces(stats, rule, th, sphere):
    half = sphere.n_theta // 2
    out = []
    for b in range(stats.D.shape[2]):
        rb = rule.R[:, :, b].T
        r_full = np.concatenate([rb, rb])
        lt = rule.h_tilde_idx[b]
        ti = int(rule.theta_idx[b])
        out.append(SelectionTrace(
            levels=stats.levels, n_theta=sphere.n_theta, r_array=r_full, r_exact_from=rule.exact_from,
            thresholds=th, h_tilde=None if lt < 0 else stats.levels[lt], theta_hat_index=ti,
            theta_hat=sphere.index_vector(ti), fell_back=bool(rule.fell_back[b]),
            h_hat=stats.levels[rule.h_hat_idx[b]], estimate=float(rule.estimate[b])))
    return out


def _epsilon_of(field, epsilon):
    if epsilon is None:
        if not isinstance(field, ObservationField):
            raise ConfigurationError("epsilon is required for raw increment arrays")
        return field.epsilon
    return float(epsilon)


def select_batch(fields, kernel, x, cfg, epsilon=None):
    """Run the rule on a batch; ``fields`` is an (n, n, B) array or an ObservationField."""
    eps = _epsilon_of(fields, epsilon)
    levels = cfg.bandwidths.levels
    th = thresholds(levels, eps, cfg.threshold_const)
    stats = selection_statistics(fields, kernel, x, cfg.sphere, levels,
                                 None if cfg.exhaustive else th, cfg.normalize)
    rule = apply_rule(stats, th, cfg.sphere)
    return _traces(stats, rule, th, cfg.sphere)


def select(field, kernel, x, cfg, epsilon=None):
    return select_batch(field, kernel, x, cfg, epsilon)[0]


def r_value(field, kernel, theta_index, h, x, cfg, epsilon=None):
    """R(theta, h) for a grid index, evaluated exactly (all levels eta <= h)."""
    eps = _epsilon_of(field, epsilon)
    levels = tuple(e for e in cfg.bandwidths.levels if e <= h)
    th = thresholds(levels, eps, cfg.threshold_const)
    stats = selection_statistics(field, kernel, x, cfg.sphere, levels, None, cfg.normalize)
    i = theta_index % (cfg.sphere.n_theta // 2)
    return float(np.max(stats.D[:, i, 0] - th))


def r_value_direct(field, kernel, theta_index, h, x, cfg, epsilon=None):
    """Same quantity from individual pairwise matrices (slow; used for cross-checks)."""
    from .estimator import estimate_many, matrix_pair
    eps = _epsilon_of(field, epsilon)
    V = cfg.sphere.vectors
    best = -math.inf
    for eta in cfg.bandwidths.levels:
        if eta > h:
            continue
        pairs = [matrix_pair(V[theta_index], V[j], eta) for j in range(len(V))]
        singles = [cfg.sphere.matrix_single(j, eta) for j in range(len(V))]
        p = estimate_many(field, kernel, pairs, x, cfg.normalize)[:, 0]
        s = estimate_many(field, kernel, singles, x, cfg.normalize)[:, 0]
        best = max(best, float(np.max(np.abs(p - s))) - threshold(eta, eps, cfg))
    return best


def select_h_only(field, kernel, theta, x, cfg, epsilon=None):
    """Bandwidth step alone for a supplied index (IndexVector or unit 2-vector)."""
    from .estimator import estimate_many, matrix_single
    eps = _epsilon_of(field, epsilon)
    levels = cfg.bandwidths.levels
    th = thresholds(levels, eps, cfg.threshold_const)
    S = estimate_many(field, kernel, [matrix_single(theta, h) for h in levels], x, cfg.normalize)
    return np.array([levels[_h_hat_index(S[:, b], th)] for b in range(S.shape[1])]) \
        if S.shape[1] > 1 else levels[_h_hat_index(S[:, 0], th)]
