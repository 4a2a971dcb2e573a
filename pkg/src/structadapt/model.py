"""Link functions, single-index targets and the discretised white-noise observation.

The observation domain is [-1, 1]^2 split into n x n square cells of width
``delta = 2 / n``.  Cell (i, j) has centre ``(-1 + (i + 1/2) delta, -1 + (j + 1/2) delta)``,
so the first array axis runs along the first coordinate.  The increment of the
observation over a cell is

    Y_ij = F(t_ij) delta^2 + epsilon * delta * xi_ij,

with xi_ij independent standard Gaussians.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError, DomainError

__all__ = [
    "SmoothnessClass",
    "LinkFunction",
    "IndexVector",
    "TargetFunction",
    "ObservationField",
    "simulate",
    "simulate_batch",
    "cell_centers",
    "cell_normals",
    "admissible_epsilon_bound",
    "function_library",
    "holder_seminorm_check",
]

MIN_GRID = 64
_HEADER = struct.Struct("<qdQ")


class SmoothnessClass(str, Enum):
    HOELDER = "Hoelder"
    NIKOLSKII = "Nikolskii"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class LinkFunction:
    """A univariate link with a bound ``sup|f| <= bound_M`` and class metadata.

    ``breakpoints`` lists points where the function or one of its first two
    derivatives is not smooth; ``singular_points`` is the subset where the
    first derivative is unbounded.  Quadrature routines split there.
    """

    name: str
    func: Callable = field(repr=False, compare=False)
    bound_M: float
    class_kind: SmoothnessClass = SmoothnessClass.UNCLASSIFIED
    beta: float | None = None
    L: float | None = None
    p: float | None = None
    params: tuple = ()
    breakpoints: tuple = ()
    singular_points: tuple = ()

    def evaluate(self, u):
        return self.func(np.asarray(u, dtype=float))

    __call__ = evaluate


@dataclass(frozen=True)
class IndexVector:
    """Unit vector given by its angle.

    Vectors built from components keep those components exactly, so grid
    vectors and flips round-trip without rounding.
    """

    angle: float
    exact: tuple | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "angle", float(self.angle) % (2 * math.pi))

    @classmethod
    def from_degrees(cls, deg):
        return cls(math.radians(deg))

    @classmethod
    def from_components(cls, theta1, theta2):
        t1, t2 = float(theta1), float(theta2)
        nrm = math.hypot(t1, t2)
        if nrm == 0:
            raise DomainError("zero vector has no direction")
        if nrm != 1.0:
            t1, t2 = t1 / nrm, t2 / nrm
        return cls(math.atan2(t2, t1), (t1, t2))

    @property
    def components(self):
        if self.exact is not None:
            return np.array(self.exact)
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    def flipped(self):
        c = self.components
        return IndexVector(self.angle + math.pi, (-float(c[0]), -float(c[1])))


@dataclass(frozen=True)
class TargetFunction:
    link: LinkFunction
    index: IndexVector

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        th = self.index.components
        return self.link(x[..., 0] * th[0] + x[..., 1] * th[1])

    __call__ = evaluate


@dataclass(frozen=True)
class ObservationField:
    n: int
    epsilon: float
    seed: int
    increments: np.ndarray = field(repr=False, compare=False)

    @property
    def delta(self):
        return 2.0 / self.n

    def centers(self):
        return cell_centers(self.n)

    def __eq__(self, other):
        if not isinstance(other, ObservationField):
            return NotImplemented
        return (self.n, self.epsilon, self.seed) == (other.n, other.epsilon, other.seed) and \
            np.array_equal(self.increments, other.increments)

    __hash__ = None

    def to_bytes(self):
        body = np.ascontiguousarray(self.increments, dtype="<f8").tobytes()
        return _HEADER.pack(self.n, self.epsilon, self.seed) + body

    @classmethod
    def from_bytes(cls, raw):
        n, eps, seed = _HEADER.unpack_from(raw, 0)
        expect = _HEADER.size + 8 * n * n
        if len(raw) != expect:
            raise ValueError(f"expected {expect} bytes for n={n}, got {len(raw)}")
        inc = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(n, n).astype(float)
        inc.flags.writeable = False
        return cls(n, eps, seed, inc)

    def write_binary(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read_binary(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def write_csv(self, path_or_stream):
        if hasattr(path_or_stream, "write"):
            self._csv_rows(path_or_stream)
            return
        with open(path_or_stream, "w", newline="") as fh:
            self._csv_rows(fh)

    def _csv_rows(self, fh):
        t = self.centers()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "t1", "t2", "increment"])
        for i in range(self.n):
            for j in range(self.n):
                w.writerow([i, j, repr(t[i]), repr(t[j]), repr(float(self.increments[i, j]))])


def cell_centers(n):
    delta = 2.0 / n
    return -1.0 + (np.arange(n) + 0.5) * delta


def cell_normals(seed, n):
    """Standard normals for every cell, drawn from Philox keyed by ``seed``.

    Cell (i, j) consumes the two 64-bit words at counter position
    2 * (i * n + j) and is turned into one variate by Box-Muller, so each value
    depends only on (seed, n, i, j) and not on generation order.
    """
    if seed < 0 or seed >= 2**64:
        raise ConfigurationError("seed must be a 64-bit unsigned integer")
    raw = np.random.Philox(key=int(seed)).random_raw(2 * n * n)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53
    u2 = (raw[1::2] >> np.uint64(11)).astype(float) * 2.0**-53
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.reshape(n, n)


def _check_sim_args(epsilon, n):
    if n < MIN_GRID:
        raise ConfigurationError(f"n={n} too small; need n >= {MIN_GRID} to resolve the minimal bandwidth")
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")


def _signal(target, n):
    t = cell_centers(n)
    grid = np.stack(np.meshgrid(t, t, indexing="ij"), axis=-1)
    return target(grid) * (2.0 / n) ** 2


def simulate(target, epsilon, n, seed):
    _check_sim_args(epsilon, n)
    delta = 2.0 / n
    inc = _signal(target, n) + epsilon * delta * cell_normals(seed, n)
    inc.flags.writeable = False
    return ObservationField(int(n), float(epsilon), int(seed), inc)


def simulate_batch(target, epsilon, n, seeds):
    """Stack the increments of several fields along a trailing axis, shape (n, n, B).

    Slice ``b`` equals ``simulate(target, epsilon, n, seeds[b]).increments``.
    """
    _check_sim_args(epsilon, n)
    delta = 2.0 / n
    sig = _signal(target, n)
    out = np.empty((n, n, len(seeds)))
    for b, s in enumerate(seeds):
        out[:, :, b] = sig + epsilon * delta * cell_normals(s, n)
    return out


def admissible_epsilon_bound(M, k):
    return math.exp(-max(1.0, (2.0 * M * k.norm_l1 / k.norm_sup) ** 2))


# -- function library ---------------------------------------------------------

def _constant(c):
    c = float(c)
    return LinkFunction("constant", lambda u: np.full(np.shape(u), c), abs(c),
                        SmoothnessClass.HOELDER, math.inf, abs(c), math.inf, (c,))


def _cosine(omega, amp):
    omega, amp = float(omega), float(amp)
    lip = abs(amp) * max(1.0, abs(omega), omega * omega)
    return LinkFunction("cosine", lambda u: amp * np.cos(omega * u), abs(amp),
                        SmoothnessClass.HOELDER, 2.0, lip, math.inf, (omega, amp))


def _cusp(beta, L):
    beta, L = float(beta), float(L)
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"cusp needs beta in (0, 1], got {beta}")
    if L <= 0:
        raise DomainError("cusp needs L > 0")
    # min(|u|, 1)^beta is beta-Hoelder with constant 1 and bounded by 1.
    return LinkFunction("cusp", lambda u: L * np.minimum(np.abs(u), 1.0) ** beta, L,
                        SmoothnessClass.HOELDER, beta, L, math.inf, (beta, L),
                        breakpoints=(-1.0, 0.0, 1.0),
                        singular_points=(0.0,) if beta < 1.0 else ())


def _bump(center, width, height):
    center, width, height = float(center), float(width), float(height)
    if width <= 0:
        raise DomainError("bump needs width > 0")

    def f(u):
        z = (u - center) / width
        return np.where(np.abs(z) < 1.0, height * (1.0 - z * z) ** 3, 0.0)

    # ||f'||_1 = 2|height|; ||f''||_1 = |height| / width * int |d^2/dz^2 (1-z^2)^3| dz
    z = np.linspace(-1.0, 1.0, 200_001)
    d2 = np.abs(6.0 * (1.0 - z * z) * (5.0 * z * z - 1.0))
    l1_d2 = abs(height) / width * float(trapezoid(d2, z))
    return LinkFunction("bump", f, abs(height), SmoothnessClass.NIKOLSKII, 2.0,
                        max(2.0 * abs(height), l1_d2), 1.0, (center, width, height),
                        breakpoints=(center - width, center + width))


def _smooth_relu(u, s):
    return np.where(u <= -s, 0.0, np.where(u >= s, u, (u + s) ** 2 / (4.0 * s)))


def _ramp(s):
    s = float(s)
    if not 0.0 < s < 0.5:
        raise DomainError("ramp smoothing half-width must lie in (0, 1/2)")
    return LinkFunction("ramp", lambda u: _smooth_relu(u + 0.5, s) - _smooth_relu(u - 0.5, s) - 0.5,
                        0.5, SmoothnessClass.HOELDER, 2.0, max(1.0, 1.0 / (2.0 * s)), math.inf, (s,),
                        breakpoints=(-0.5 - s, -0.5 + s, 0.5 - s, 0.5 + s))


_LIBRARY = {
    "constant": (_constant, 1),
    "cosine": (_cosine, 2),
    "cusp": (_cusp, 2),
    "bump": (_bump, 3),
    "ramp": (_ramp, 1),
}


def function_library(name, params=()):
    """Build a named link function.

    ``constant(c)``, ``cosine(omega, A)``, ``cusp(beta, L)``,
    ``bump(center, width, height)`` and ``ramp(s)``.
    """
    try:
        ctor, arity = _LIBRARY[name]
    except KeyError:
        raise ConfigurationError(f"unknown link function {name!r}; choose from {sorted(_LIBRARY)}") from None
    params = tuple(float(p) for p in params)
    if len(params) != arity:
        raise ConfigurationError(f"{name} takes {arity} parameter(s), got {len(params)}")
    return ctor(*params)


def holder_seminorm_check(f, beta, grid_step, lo=-2.0, hi=2.0):
    """Largest Hoelder ratio of ``f`` over a grid of base points and increments.

    For beta <= 1 this is max |f(t+h) - f(t)| / h^beta; for 1 < beta <= 2 the
    same ratio is taken for a central-difference derivative with exponent
    beta - 1.  Meant as a test utility, not a certificate.
    """
    if beta > 2:
        raise DomainError("finite-difference check is only certified for beta <= 2")
    t = np.arange(lo, hi + 0.5 * grid_step, grid_step)
    if beta <= 1:
        g, expo = f(t), beta
    else:
        e = grid_step * 1e-3
        g, expo = (f(t + e) - f(t - e)) / (2 * e), beta - 1.0
    worst = 0.0
    for k in range(1, len(t)):
        diff = np.abs(g[k:] - g[:-k])
        worst = max(worst, float(diff.max()) / (k * grid_step) ** expo)
    return worst
