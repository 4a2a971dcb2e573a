"""Compiled inner loops.

Two kinds of sums live here.

``direct_sums`` evaluates sum_ij K(A (t_ij - x)) Y_ij for arbitrary 2x2
matrices by visiting only the cells whose image can fall inside the kernel
support.  It is the single code path behind ``estimator.estimate`` and the
selector's cache of single-index estimates, so both agree bit for bit.

``pair_level_stats`` evaluates, for one bandwidth level, every pairwise
estimate of a sphere grid at once.  A pairwise matrix equals
s * E(w, eta) with w the bisector of the two index vectors and
s = 1 / sqrt(2 (1 + |<theta, nu>|)).  For the product of two polynomials in
|u| the weight is a combination of the monomials |u|^k |v|^l, and a cell
enters the support of scale s iff s * max(|v|, |u| / eta) < R.  So per
bisector direction a histogram over the sorted scales, followed by a suffix
sum, gives every rectangle sum of every monomial channel in one pass over
the cells.  All replications of a batch share the pass.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _kpoly(coeffs, t):
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * t + coeffs[k]
    return acc


@njit(cache=True)
def _row_span(m11, m12, m21, m22, d1, r1, r2):
    """Interval of d2 with |m11 d1 + m12 d2| < r1 and |m21 d1 + m22 d2| < r2."""
    lo = -1e300
    hi = 1e300
    if m12 != 0.0:
        a = (-r1 - m11 * d1) / m12
        b = (r1 - m11 * d1) / m12
        lo = max(lo, min(a, b))
        hi = min(hi, max(a, b))
    elif abs(m11 * d1) >= r1:
        return 1.0, -1.0
    if m22 != 0.0:
        a = (-r2 - m21 * d1) / m22
        b = (r2 - m21 * d1) / m22
        lo = max(lo, min(a, b))
        hi = min(hi, max(a, b))
    elif abs(m21 * d1) >= r2:
        return 1.0, -1.0
    return lo, hi


@njit(cache=True)
def _index_range(lo, hi, delta, n):
    # cell k has centre -1 + (k + 1/2) delta; one cell of slack on each side
    if hi < lo:
        return 1, 0
    klo = int(math.floor((lo + 1.0) / delta - 0.5)) - 1
    khi = int(math.ceil((hi + 1.0) / delta - 0.5)) + 1
    if klo < 0:
        klo = 0
    if khi > n - 1:
        khi = n - 1
    return klo, khi


@njit(cache=True)
def direct_sums(Y, delta, mats, x0, x1, coeffs, radius, prune):
    """Kernel sums for a stack of matrices.

    Y has shape (n, n, B); mats has shape (M, 2, 2).  Returns (num, mass) with
    num[m, b] = sum K(A_m (t - x)) Y[..., b] and mass[m] = sum K(A_m (t - x)).
    """
    n = Y.shape[0]
    B = Y.shape[2]
    M = mats.shape[0]
    num = np.zeros((M, B))
    mass = np.zeros(M)
    for m in range(M):
        a11 = mats[m, 0, 0]
        a12 = mats[m, 0, 1]
        a21 = mats[m, 1, 0]
        a22 = mats[m, 1, 1]
        det = a11 * a22 - a12 * a21
        if prune:
            ext1 = radius * (abs(a22) + abs(a12)) / abs(det)
            ilo, ihi = _index_range(x0 - ext1, x0 + ext1, delta, n)
        else:
            ilo, ihi = 0, n - 1
        acc = np.zeros(B)
        macc = 0.0
        for i in range(ilo, ihi + 1):
            d1 = -1.0 + (i + 0.5) * delta - x0
            if prune:
                lo, hi = _row_span(a11, a12, a21, a22, d1, radius, radius)
                jlo, jhi = _index_range(x1 + lo, x1 + hi, delta, n)
            else:
                jlo, jhi = 0, n - 1
            for j in range(jlo, jhi + 1):
                d2 = -1.0 + (j + 0.5) * delta - x1
                u = abs(a11 * d1 + a12 * d2)
                v = abs(a21 * d1 + a22 * d2)
                if u < radius and v < radius:
                    w = _kpoly(coeffs, u) * _kpoly(coeffs, v)
                    macc += w
                    for b in range(B):
                        acc[b] += w * Y[i, j, b]
        for b in range(B):
            num[m, b] = acc[b]
        mass[m] = macc
    return num, mass


@njit(cache=True)
def pair_level_stats(Y, delta, x0, x1, coeffs, radius, eta, s_table,
                     dir_angle, entry_ptr, entry_i, entry_j, entry_d,
                     singles, normalize, D):
    """Fold every pairwise estimate of one level into D.

    For direction q the entries entry_ptr[q]:entry_ptr[q+1] list pairs
    (i, j, d): row i of D compares the pairwise estimate of scale s_table[d]
    along angle dir_angle[q] with singles[j].  D[i, b] becomes
    max(D[i, b], |pair - single|).
    """
    n = Y.shape[0]
    B = Y.shape[2]
    p1 = coeffs.shape[0]
    nch = p1 * p1
    ns = s_table.shape[0]
    smin = s_table[0]
    reach = radius / smin
    hist = np.zeros((ns, nch, B))
    hmass = np.zeros((ns, nch))
    chv = np.zeros(nch)
    # per-scale channel coefficients c_k c_l (s/eta)^k s^l
    coef = np.zeros((ns, nch))
    for d in range(ns):
        s = s_table[d]
        for k in range(p1):
            for l in range(p1):
                coef[d, k * p1 + l] = coeffs[k] * coeffs[l] * (s / eta) ** k * s ** l
    est = np.zeros(B)
    for q in range(dir_angle.shape[0]):
        if entry_ptr[q] == entry_ptr[q + 1]:
            continue
        c = math.cos(dir_angle[q])
        sn = math.sin(dir_angle[q])
        hist[:, :, :] = 0.0
        hmass[:, :] = 0.0
        # support of every scale lies in |u| < eta * reach, |v| < reach
        ext1 = eta * reach * abs(c) + reach * abs(sn)
        ilo, ihi = _index_range(x0 - ext1, x0 + ext1, delta, n)
        for i in range(ilo, ihi + 1):
            d1 = -1.0 + (i + 0.5) * delta - x0
            lo, hi = _row_span(c, sn, -sn, c, d1, eta * reach, reach)
            jlo, jhi = _index_range(x1 + lo, x1 + hi, delta, n)
            for j in range(jlo, jhi + 1):
                d2 = -1.0 + (j + 0.5) * delta - x1
                u = abs(c * d1 + sn * d2)
                v = abs(-sn * d1 + c * d2)
                m = max(v, u / eta)
                if m >= reach:
                    continue
                if m == 0.0:
                    cnt = ns
                else:
                    lim = radius / m
                    # number of scales with s < lim
                    a = 0
                    bnd = ns
                    while a < bnd:
                        mid = (a + bnd) // 2
                        if s_table[mid] < lim:
                            a = mid + 1
                        else:
                            bnd = mid
                    cnt = a
                if cnt == 0:
                    continue
                upow = 1.0
                for k in range(p1):
                    vpow = 1.0
                    for l in range(p1):
                        chv[k * p1 + l] = upow * vpow
                        vpow *= v
                    upow *= u
                row = cnt - 1
                for ch in range(nch):
                    hmass[row, ch] += chv[ch]
                    val = chv[ch]
                    for b in range(B):
                        hist[row, ch, b] += val * Y[i, j, b]
        for d in range(ns - 2, -1, -1):
            for ch in range(nch):
                hmass[d, ch] += hmass[d + 1, ch]
                for b in range(B):
                    hist[d, ch, b] += hist[d + 1, ch, b]
        for e in range(entry_ptr[q], entry_ptr[q + 1]):
            d = entry_d[e]
            jj = entry_j[e]
            ii = entry_i[e]
            mtot = 0.0
            for b in range(B):
                est[b] = 0.0
            for ch in range(nch):
                cf = coef[d, ch]
                mtot += cf * hmass[d, ch]
                for b in range(B):
                    est[b] += cf * hist[d, ch, b]
            if normalize:
                scale = 1.0 / (mtot * delta * delta)
            else:
                s = s_table[d]
                scale = s * s / eta
            for b in range(B):
                diff = abs(est[b] * scale - singles[jj, b])
                if diff > D[ii, b]:
                    D[ii, b] = diff
