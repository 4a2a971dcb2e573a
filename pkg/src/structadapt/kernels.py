"""Admissible univariate kernels and their product extension to the plane.

Every kernel is an even piecewise polynomial supported on [-1/2, 1/2]:

    K(u) = (1 - 2|u|) * (a_0 + a_1 u^2 + ... + a_J u^{2J}),   |u| <= 1/2,

i.e. the triangular kernel times an even polynomial correction chosen so that
the moments u^2, ..., u^{2J} vanish.  Odd moments vanish by symmetry, so a
kernel with ``moment_order = m`` needs J = floor(m / 2).  The factor
(1 - 2|u|) makes every member continuous at the support edge and hence
Lipschitz.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError

__all__ = ["Kernel1D", "ProductKernel2D", "make_kernel", "kernel_norms"]

SUPPORT_RADIUS = 0.5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _even_moment(k):
    # int_{-1/2}^{1/2} (1 - 2|u|) u^{2k} du
    return Fraction(1, 4**k * (2 * k + 1) * (2 * k + 2))


def _correction_coeffs(moment_order):
    n_even = moment_order // 2
    size = n_even + 1
    mat = [[_even_moment(j + k) for j in range(size)] for k in range(size)]
    rhs = [Fraction(1)] + [Fraction(0)] * n_even
    # Gauss-Jordan in exact rationals; the system is tiny.
    for col in range(size):
        piv = next(r for r in range(col, size) if mat[r][col] != 0)
        mat[col], mat[piv] = mat[piv], mat[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        for r in range(size):
            if r != col and mat[r][col] != 0:
                fac = mat[r][col] / mat[col][col]
                mat[r] = [a - fac * b for a, b in zip(mat[r], mat[col])]
                rhs[r] -= fac * rhs[col]
    return [rhs[k] / mat[k][k] for k in range(size)]


def _abs_poly_coeffs(moment_order):
    """Coefficients c_k of K(u) = sum_k c_k |u|^k on the support."""
    a = _correction_coeffs(moment_order)
    deg = 2 * len(a) - 1
    out = [Fraction(0)] * (deg + 1)
    for j, aj in enumerate(a):
        out[2 * j] += aj
        out[2 * j + 1] -= 2 * aj
    return tuple(float(c) for c in out)


def _poly_eval(coeffs, t):
    acc = np.zeros_like(t)
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def _real_roots_in(coeffs, lo, hi):
    p = np.polynomial.Polynomial(coeffs)
    if p.degree() < 1:
        return []
    r = p.roots()
    r = r[np.abs(r.imag) < 1e-12].real
    return sorted(float(x) for x in r if lo < x < hi)


def _panel_integral(coeffs, power, radius):
    """int_{-R}^{R} |K(u)|^power du, exact up to rounding for polynomial pieces."""
    cuts = [0.0] + _real_roots_in(coeffs, 0.0, radius) + [radius]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        t = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
        total += 0.5 * (hi - lo) * np.sum(_GL_W * np.abs(_poly_eval(coeffs, t)) ** power)
    return 2.0 * total


@dataclass(frozen=True)
class Kernel1D:
    """Even, compactly supported, Lipschitz kernel with vanishing moments.

    ``coeffs`` holds the polynomial in |u| valid on the support; everything else
    is derived from it by :func:`make_kernel`.
    """

    coeffs: tuple
    moment_order: int
    support_radius: float
    lipschitz_const: float
    norm_sup: float
    norm_l1: float
    norm_l2: float
    name: str = field(default="triangular")

    def evaluate(self, u):
        u = np.asarray(u, dtype=float)
        t = np.abs(u)
        val = _poly_eval(self.coeffs, t)
        return np.where(t < self.support_radius, val, 0.0)

    __call__ = evaluate

    def moment(self, j, n_panels=64):
        """Numerical moment int u^j K(u) du (composite Gauss-Legendre)."""
        edges = np.linspace(-self.support_radius, self.support_radius, n_panels + 1)
        lo, hi = edges[:-1, None], edges[1:, None]
        t = 0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * _GL_W
        return float(np.sum(w * t**j * self.evaluate(t)))


@dataclass(frozen=True)
class ProductKernel2D:
    factor: Kernel1D

    def evaluate(self, u, v):
        return self.factor.evaluate(u) * self.factor.evaluate(v)

    __call__ = evaluate


def kernel_norms(k, n_grid=20001):
    """Return (sup, L1, L2) norms of ``k``.

    The sup norm is a grid scan over the support (``n_grid`` points, which
    always include the origin); the integral norms split the support at the
    sign changes of the polynomial and use Gauss-Legendre on each piece.
    """
    if n_grid < 10_000:
        raise ConfigurationError("sup-norm scan needs at least 1e4 grid points")
    u = np.linspace(-k.support_radius, k.support_radius, n_grid)
    sup = float(np.max(np.abs(k.evaluate(u))))
    l1 = _panel_integral(k.coeffs, 1, k.support_radius)
    l2 = np.sqrt(_panel_integral(k.coeffs, 2, k.support_radius))
    return sup, float(l1), float(l2)


def _lipschitz(coeffs, radius):
    d = np.polynomial.Polynomial(coeffs).deriv()
    cands = [0.0, radius] + _real_roots_in(d.deriv().coef, 0.0, radius)
    return float(max(abs(d(t)) for t in cands))


def make_kernel(moment_order=1):
    """Build the kernel with vanishing moments up to ``moment_order`` (1 to 4).

    ``make_kernel(1)`` is the triangular kernel 2(1 - 2|u|).
    """
    if moment_order not in (1, 2, 3, 4):
        raise ConfigurationError(f"unsupported moment_order {moment_order!r}; expected 1..4")
    coeffs = _abs_poly_coeffs(moment_order)
    proto = Kernel1D(coeffs, moment_order, SUPPORT_RADIUS, 0.0, 0.0, 0.0, 0.0)
    sup, l1, l2 = kernel_norms(proto)
    name = "triangular" if moment_order == 1 else f"poly{moment_order}"
    return Kernel1D(
        coeffs=coeffs,
        moment_order=moment_order,
        support_radius=SUPPORT_RADIUS,
        lipschitz_const=_lipschitz(coeffs, SUPPORT_RADIUS),
        norm_sup=sup,
        norm_l1=l1,
        norm_l2=l2,
        name=name,
    )
