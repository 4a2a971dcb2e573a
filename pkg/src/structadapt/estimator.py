"""Anisotropic estimator matrices and kernel estimates on an observation field.

A single-index matrix stretches by 1/h along theta and leaves the orthogonal
direction at unit scale.  A pairwise matrix for (theta, nu) is a scaled
single-index matrix along their bisector:

    E(theta, nu, h) = s * E(w, h),   s = 1 / sqrt(2 (1 + |<theta, nu>|)),

which is how the batched engine evaluates all pairs at once.

Estimates are normalised by the discrete kernel mass that falls inside the
observation square, ``sum K Y / (delta^2 sum K)``.  Far from the boundary this
equals ``det(E) sum K Y`` up to the Riemann error of the kernel mass; near the
boundary (wide pairwise footprints reach up to sqrt(2) from x) it removes the
truncation bias.  ``normalize=False`` gives the raw ``det(E) sum K Y``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _engine
from .errors import ConfigurationError, ResolutionWarning
from .kernels import Kernel1D, ProductKernel2D
from .model import IndexVector, ObservationField

__all__ = [
    "MatrixKind",
    "EstimatorMatrix",
    "BandwidthGrid",
    "SphereGrid",
    "matrix_single",
    "matrix_pair",
    "estimate",
    "estimate_many",
    "variance_formula",
    "bandwidth_grid",
    "sphere_grid",
]


class MatrixKind(str, Enum):
    SINGLE = "Single"
    PAIR = "Pair"


@dataclass(frozen=True)
class EstimatorMatrix:
    entries: np.ndarray
    kind: MatrixKind
    theta: IndexVector
    h: float
    nu: IndexVector | None = None

    @property
    def det(self):
        e = self.entries
        return float(e[0, 0] * e[1, 1] - e[0, 1] * e[1, 0])


def _check_h(h):
    if not 0.0 < h <= 1.0:
        raise ConfigurationError(f"bandwidth must lie in (0, 1], got {h}")


def _single_entries(t1, t2, h):
    return np.array([[t1 / h, t2 / h], [-t2, t1]])


def _components(v):
    if isinstance(v, IndexVector):
        return v.components
    c = np.asarray(v, dtype=float)
    return c


def _as_index(v):
    return v if isinstance(v, IndexVector) else IndexVector.from_components(*v)


def matrix_single(theta, h):
    """Single-index matrix; ``theta`` is an IndexVector or a unit 2-vector."""
    _check_h(h)
    t1, t2 = _components(theta)
    return EstimatorMatrix(_single_entries(t1, t2, h), MatrixKind.SINGLE, _as_index(theta), float(h))


def matrix_pair(theta, nu, h):
    _check_h(h)
    th = _components(theta)
    nv = _components(nu)
    c = float(th @ nv)
    if c < 0:
        th = -th
    a = th + nv
    den = 2.0 * (1.0 + abs(c))
    ent = np.array([[a[0] / (h * den), a[1] / (h * den)], [-a[1] / den, a[0] / den]])
    return EstimatorMatrix(ent, MatrixKind.PAIR, _as_index(theta), float(h), _as_index(nu))


def _as_kernel1d(kernel):
    return kernel.factor if isinstance(kernel, ProductKernel2D) else kernel


def _kernel_arrays(kernel):
    k = _as_kernel1d(kernel)
    return np.asarray(k.coeffs, dtype=float), float(k.support_radius)


def _field_array(field):
    inc = field.increments if isinstance(field, ObservationField) else np.asarray(field, dtype=float)
    if inc.ndim == 2:
        inc = inc[:, :, None]
    return np.ascontiguousarray(inc, dtype=float)


def _finish(num, mass, dets, delta, normalize):
    if normalize:
        with np.errstate(invalid="ignore", divide="ignore"):
            return num / (mass * delta * delta)[:, None]
    return num * dets[:, None]


def estimate_many(field, kernel, matrices, x, normalize=True, prune=True):
    """Estimates for a stack of matrices; returns shape (len(matrices), B).

    ``field`` may be an ObservationField or a raw array of shape (n, n) or
    (n, n, B) holding increments of B fields on the same grid.
    """
    Y = _field_array(field)
    n = Y.shape[0]
    mats = np.ascontiguousarray(np.stack([m.entries if isinstance(m, EstimatorMatrix) else m
                                          for m in matrices]), dtype=float)
    coeffs, radius = _kernel_arrays(kernel)
    num, mass = _engine.direct_sums(Y, 2.0 / n, mats, float(x[0]), float(x[1]), coeffs, radius, prune)
    dets = mats[:, 0, 0] * mats[:, 1, 1] - mats[:, 0, 1] * mats[:, 1, 0]
    return _finish(num, mass, dets, 2.0 / n, normalize)


def estimate(field, kernel, matrix, x, normalize=True, prune=True):
    """Kernel estimate at x for one matrix.

    With ``prune=True`` only cells whose image can reach the support are
    visited; the visiting order is the same as the full sum, so the result
    is bit-identical to ``prune=False``.
    """
    out = estimate_many(field, kernel, [matrix], x, normalize, prune)
    return float(out[0, 0]) if out.shape[1] == 1 else out[0]


def variance_formula(kernel, epsilon, h):
    k = _as_kernel1d(kernel)
    if h <= 0:
        raise ConfigurationError("h must be positive")
    return k.norm_l2**4 * epsilon**2 / h


@dataclass(frozen=True)
class BandwidthGrid:
    levels: tuple
    h_floor: float

    def __post_init__(self):
        if not self.levels:
            raise ConfigurationError("empty bandwidth grid")
        if any(b >= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigurationError("bandwidth levels must be strictly decreasing")

    def __len__(self):
        return len(self.levels)

    @property
    def smallest(self):
        return self.levels[-1]


def bandwidth_grid(epsilon, delta, c_grid=8.0):
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    floor = max(epsilon**2, c_grid * delta)
    if c_grid * delta > epsilon**2:
        warnings.warn(f"grid floor {c_grid * delta:g} exceeds epsilon^2 = {epsilon**2:g}; "
                      "smaller bandwidths are dropped", ResolutionWarning, stacklevel=2)
    levels = []
    k = 0
    while 2.0**-k >= floor:
        levels.append(2.0**-k)
        k += 1
    if not levels:
        raise ConfigurationError(f"no dyadic bandwidth in [{floor:g}, 1]")
    return BandwidthGrid(tuple(levels), floor)


@dataclass(frozen=True)
class SphereGrid:
    """Uniform grid of n_theta unit vectors on the full circle.

    n_theta must be even.  Vector j + n_theta/2 is the exact negation of
    vector j, so antipodal pairs carry identical estimates.
    """

    n_theta: int

    def __post_init__(self):
        if self.n_theta < 2 or self.n_theta % 2:
            raise ConfigurationError(f"n_theta must be an even integer >= 2, got {self.n_theta}")

    @property
    def step(self):
        return 2.0 * math.pi / self.n_theta

    @property
    def angles(self):
        return np.arange(self.n_theta) * self.step

    @property
    def vectors(self):
        half = self.n_theta // 2
        v = np.array([[math.cos(j * self.step), math.sin(j * self.step)] for j in range(half)])
        return np.concatenate([v, -v])

    def index_vector(self, j):
        v = self.vectors[j]
        return IndexVector(float(self.angles[j]), (float(v[0]), float(v[1])))

    def matrix_single(self, j, h):
        return matrix_single(self.vectors[j], h)

    def __len__(self):
        return self.n_theta


def sphere_grid(n_theta=512):
    return SphereGrid(int(n_theta))
