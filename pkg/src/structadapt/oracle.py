"""Approximation-error functionals and the oracle bandwidth.

For a link f and kernel K the bias of the one-dimensional smoother at scale
delta is

    g(delta, z) = | int_0^R K(s) (f(z + delta s) + f(z - delta s) - 2 f(z)) ds |,

(the symmetric form of delta^-1 int K((u - z) / delta) (f(u) - f(z)) du).
Delta(h, z) is its sup over scales delta <= h, Delta_bar averages Delta over
windows around y and Delta_star is the larger of the two.  The oracle
bandwidth is the largest h with sqrt(h) Delta_star(h, y) below the noise level.

Scales live on a global grid delta_k = 2^(-k/64) anchored at 1.  The sup over
(h 2^-depth, h] uses the grid points in that window plus delta = h itself.
Quadrature splits [0, R] at every s where z +- delta s hits a breakpoint of
f; panels ending at a point where f' is unbounded use a geometrically graded
rule, the rest a 16-point Gauss-Legendre rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .errors import AdmissibilityWarning, DomainError
from .kernels import Kernel1D
from .model import LinkFunction, admissible_epsilon_bound

__all__ = [
    "OracleProfile",
    "ErrorTable",
    "delta",
    "delta_bar",
    "delta_star",
    "oracle_bandwidth",
    "oracle_profile",
    "c_r",
    "oracle_risk_bound",
]

PER_OCTAVE = 64
DEPTH = 10
A_MIN_LOG2 = -10
A_MAX_LOG2 = 1
A_PER_OCTAVE = 16
Z_RATIO = 64
H_SCAN = 512
BISECT_RTOL = 1e-3

_GL16 = np.polynomial.legendre.leggauss(16)


def _template_plain():
    x, w = _GL16
    return 0.5 * (x + 1.0), 0.5 * w


def _template_left(sigma=0.15, levels=12):
    # geometric pieces accumulating at 0
    x, w = _GL16
    edges = [0.0] + [sigma**k for k in range(levels, -1, -1)]
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(a + (b - a) * 0.5 * (x + 1.0))
        weights.append((b - a) * 0.5 * w)
    return np.concatenate(nodes), np.concatenate(weights)


def _templates():
    lx, lw = _template_left()
    px, pw = _template_plain()
    return {
        0: (px, pw),
        1: (lx, lw),
        2: (1.0 - lx[::-1], lw[::-1]),
        3: (np.concatenate([0.5 * lx, 1.0 - 0.5 * lx[::-1]]), np.concatenate([0.5 * lw, 0.5 * lw[::-1]])),
    }


_TEMPLATES = _templates()


def _kpoly(coeffs, s):
    acc = np.zeros_like(s)
    for c in reversed(coeffs):
        acc = acc * s + c
    return acc


def bias_values(kernel, f, deltas, zs, chunk=400_000):
    """g(delta, z) for paired arrays ``deltas`` and ``zs`` (same shape)."""
    deltas = np.asarray(deltas, dtype=float).ravel()
    zs = np.asarray(zs, dtype=float).ravel()
    P = deltas.size
    R = kernel.support_radius
    coeffs = kernel.coeffs
    bps = np.asarray(sorted(set(f.breakpoints) | set(f.singular_points)), dtype=float)
    sing = np.asarray(f.singular_points, dtype=float)
    out = np.zeros(P)
    if P == 0:
        return out
    fz = f(zs)
    nb = bps.size
    # cut points in s for every pair
    if nb:
        S = np.abs(bps[None, :] - zs[:, None]) / deltas[:, None]
        S = np.where(S < R, S, R)
        cuts = np.concatenate([np.zeros((P, 1)), np.sort(S, axis=1), np.full((P, 1), R)], axis=1)
    else:
        cuts = np.tile([0.0, R], (P, 1))
    flag = np.zeros(cuts.shape, dtype=bool)
    if sing.size:
        Ssg = np.abs(sing[None, :] - zs[:, None]) / deltas[:, None]
        for k in range(sing.size):
            hit = np.isclose(cuts, Ssg[:, k:k + 1], rtol=0.0, atol=1e-14 * R)
            hit[:, -1] |= (Ssg[:, k] >= R) & (Ssg[:, k] < 2 * R)
            flag |= hit
    a = cuts[:, :-1]
    b = cuts[:, 1:]
    kind = flag[:, :-1].astype(int) + 2 * flag[:, 1:].astype(int)
    pair = np.broadcast_to(np.arange(P)[:, None], a.shape)
    valid = b > a
    a, b, kind, pair = a[valid], b[valid], kind[valid], pair[valid]
    for kd, (tx, tw) in _TEMPLATES.items():
        sel = np.nonzero(kind == kd)[0]
        step = max(1, chunk // tx.size)
        for lo in range(0, sel.size, step):
            idx = sel[lo:lo + step]
            aa, bb, pp = a[idx, None], b[idx, None], pair[idx]
            s = aa + (bb - aa) * tx[None, :]
            d = deltas[pp, None]
            z = zs[pp, None]
            val = _kpoly(coeffs, s) * (f(z + d * s) + f(z - d * s) - 2.0 * fz[pp, None])
            np.add.at(out, pp, ((bb - aa) * tw[None, :] * val).sum(axis=1))
    return np.abs(out)


def _grid_delta(k):
    return 2.0 ** (-np.asarray(k) / PER_OCTAVE)


def _z_grid(y):
    """Points y + r with r graded so every window [y-a, y+a] has step <= a/64."""
    a_vals = 2.0 ** (A_MIN_LOG2 + np.arange((A_MAX_LOG2 - A_MIN_LOG2) * A_PER_OCTAVE + 1) / A_PER_OCTAVE)
    r0 = a_vals[0]
    inner = np.linspace(0.0, r0, Z_RATIO + 1)
    outer = [r0]
    while outer[-1] < a_vals[-1]:
        outer.append(outer[-1] * (1.0 + 1.0 / Z_RATIO))
    r = np.unique(np.concatenate([inner, outer[:-1], a_vals]))
    r = r[r <= a_vals[-1]]
    z = np.concatenate([y - r[:0:-1], [y], y + r[1:]])
    return z, a_vals


class ErrorTable:
    """Bias values on the global scale grid for a fixed set of z points.

    Rows are added lazily, one octave at a time, as smaller scales are needed.
    """

    def __init__(self, kernel, f, zs, depth=DEPTH):
        self.kernel = kernel
        self.f = f
        self.zs = np.asarray(zs, dtype=float)
        self.depth = depth
        self.rows = np.zeros((0, self.zs.size))

    def _ensure(self, kmax):
        have = self.rows.shape[0]
        if kmax < have:
            return
        top = (kmax // PER_OCTAVE + 1) * PER_OCTAVE
        ks = np.arange(have, top + 1)
        dd = np.repeat(_grid_delta(ks), self.zs.size)
        zz = np.tile(self.zs, ks.size)
        new = bias_values(self.kernel, self.f, dd, zz).reshape(ks.size, self.zs.size)
        self.rows = np.vstack([self.rows, new])

    def delta_row(self, h):
        """Delta(h, z) for every z of the table."""
        # grid points delta_k with h 2^-depth <= delta_k <= h
        k_lo = math.ceil(-PER_OCTAVE * math.log2(h) - 1e-9)
        k_hi = math.floor(-PER_OCTAVE * (math.log2(h) - self.depth) + 1e-9)
        self._ensure(k_hi)
        at_h = bias_values(self.kernel, self.f, np.full(self.zs.size, h), self.zs)
        if k_hi >= k_lo:
            return np.maximum(at_h, self.rows[k_lo:k_hi + 1].max(axis=0))
        return at_h


def _check_h(h):
    if not 0.0 < h <= 1.0:
        raise DomainError(f"h must lie in (0, 1], got {h}")


def delta(kernel, f, h, z, depth=DEPTH):
    _check_h(h)
    return float(ErrorTable(kernel, f, [z], depth).delta_row(h)[0])


def _window_averages(z, vals, y, a_vals):
    out = np.empty(a_vals.size)
    for m, a in enumerate(a_vals):
        sel = (z >= y - a * (1 + 1e-12)) & (z <= y + a * (1 + 1e-12))
        out[m] = integrate.trapezoid(vals[sel], z[sel]) / (2.0 * a)
    return out


@dataclass
class _Profile:
    """Cached table and z grid for one (kernel, f, y)."""

    kernel: Kernel1D
    f: LinkFunction
    y: float
    depth: int = DEPTH
    table: ErrorTable = field(init=False)
    z: np.ndarray = field(init=False)
    a_vals: np.ndarray = field(init=False)
    i_y: int = field(init=False)

    def __post_init__(self):
        self.z, self.a_vals = _z_grid(self.y)
        self.i_y = int(np.argmin(np.abs(self.z - self.y)))
        self.table = ErrorTable(self.kernel, self.f, self.z, self.depth)

    def parts(self, h):
        _check_h(h)
        row = self.table.delta_row(h)
        d = float(row[self.i_y])
        db = float(_window_averages(self.z, row, self.y, self.a_vals).max())
        return d, db, max(d, db)


def delta_bar(kernel, f, h, y, depth=DEPTH):
    return _Profile(kernel, f, y, depth).parts(h)[1]


def delta_star(kernel, f, h, y, depth=DEPTH):
    return _Profile(kernel, f, y, depth).parts(h)[2]


@dataclass
class OracleProfile:
    y: float
    epsilon: float
    h_star: float
    delta_star_at_h: dict
    risk_bound: float
    level: float
    rows: list = field(default_factory=list, repr=False)


def _noise_level(kernel, epsilon):
    return kernel.norm_sup * epsilon * math.sqrt(math.log(1.0 / epsilon))


def oracle_profile(kernel, f, y, epsilon, r=2.0, n_scan=H_SCAN, rtol=BISECT_RTOL, depth=DEPTH):
    """Oracle bandwidth at y with the tabulated Delta functionals.

    The scan runs over ``n_scan`` log-spaced h in [epsilon^2, 1] from the top
    down; the first passing h is refined by bisection against the failing
    neighbour above it.
    """
    if epsilon > admissible_epsilon_bound(f.bound_M, kernel):
        warnings.warn(f"epsilon={epsilon:g} exceeds the admissible bound for M={f.bound_M:g}",
                      AdmissibilityWarning, stacklevel=2)
    prof = _Profile(kernel, f, float(y), depth)
    level = _noise_level(kernel, epsilon)
    hs = np.exp(np.linspace(math.log(epsilon**2), 0.0, n_scan))
    hs[-1] = 1.0
    rows = []

    def ok(h):
        d, db, ds = prof.parts(float(h))
        rows.append((float(h), d, db, ds))
        return math.sqrt(h) * ds <= level

    h_star = None
    for m in range(n_scan - 1, -1, -1):
        if ok(hs[m]):
            if m == n_scan - 1:
                h_star = 1.0
            else:
                lo, hi = hs[m], hs[m + 1]
                while hi / lo - 1.0 > rtol:
                    mid = math.sqrt(lo * hi)
                    if ok(mid):
                        lo = mid
                    else:
                        hi = mid
                h_star = float(lo)
            break
    if h_star is None:
        warnings.warn("no scanned bandwidth satisfies the oracle inequality; returning epsilon^2",
                      AdmissibilityWarning, stacklevel=2)
        h_star = epsilon**2
    rows.sort()
    table = {h: ds for h, _, _, ds in rows}
    return OracleProfile(float(y), float(epsilon), h_star, table,
                         oracle_risk_bound(r, kernel, epsilon, h_star), level, rows)


def oracle_bandwidth(kernel, f, y, epsilon, **kw):
    return oracle_profile(kernel, f, y, epsilon, **kw).h_star


def c_r(r):
    """[E (1 + |Z|)^r]^(1/r) for standard normal Z."""
    if r < 1:
        raise DomainError("r must be >= 1")
    val, _ = integrate.quad(lambda x: (1.0 + x) ** r * stats.norm.pdf(x), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return (2.0 * val) ** (1.0 / r)


def oracle_risk_bound(r, kernel, epsilon, h_star):
    if not 0.0 < h_star <= 1.0:
        raise DomainError("h_star must lie in (0, 1]")
    return c_r(r) * kernel.norm_sup**2 * epsilon * math.sqrt(math.log(1.0 / epsilon) / h_star)
