"""Compiled per-sample KKT solver.

Tags: 0 is region Z (user 2 decoded first, user 1 interference free),
1 is its complement.  Rates are handled in nats; ``c_j = theta_j n / ln 2``
turns them into the exponent of exp(-theta_j n r_j[bits]).  ``k_j`` is
lambda_j / psi_j.
"""

import math

import numpy as np
from numba import njit

from .surface import rate_terms

LN2 = math.log(2.0)
ST_OK, ST_INNER_CAP, ST_BRACKET = 0, 1, 2


@njit(cache=True)
def terms_at(m, pbar, z1, z2, phi, a1, a2):
    return rate_terms(m[0], m[1], m[2], m[3], m[4], m[5], m[6],
                      a1 * pbar * z1, a2 * pbar * z2, phi)


@njit(cache=True)
def rates_from_terms(tag, t):
    i12, _, _, i1, _, i2, _ = t
    if tag == 0:
        return i1, max(i12 - i1, 0.0)
    return max(i12 - i2, 0.0), i2


@njit(cache=True)
def residuals(m, tag, pbar, z1, z2, phi, a1, a2, k1, k2, c1, c2, eps):
    """(res1, res2): weighted marginal utility minus eps for each alpha."""
    t = terms_at(m, pbar, z1, z2, phi, a1, a2)
    i12, g1, g2, i1, m1, i2, m2 = t
    r1, r2 = rates_from_terms(tag, t)
    e1 = k1 * math.exp(-c1 * r1)
    e2 = k2 * math.exp(-c2 * r2)
    if tag == 0:
        res1 = (e1 * pbar * z1 * m1 + e2 * pbar * z1 * (g1 - m1)) / LN2 - eps
        res2 = e2 * pbar * z2 * g2 / LN2 - eps
    else:
        res1 = e1 * pbar * z1 * g1 / LN2 - eps
        res2 = (e2 * pbar * z2 * m2 + e1 * pbar * z2 * (g2 - m2)) / LN2 - eps
    return res1, res2


@njit(cache=True)
def _res(which, m, tag, pbar, z1, z2, phi, a1, a2, k1, k2, c1, c2, eps):
    r = residuals(m, tag, pbar, z1, z2, phi, a1, a2, k1, k2, c1, c2, eps)
    return r[0] if which == 1 else r[1]


@njit(cache=True)
def _f(which, other, x, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps):
    if which == 1:
        return _res(1, m, tag, pbar, z1, z2, phi, x, other, k1, k2, c1, c2, eps)
    return _res(2, m, tag, pbar, z1, z2, phi, other, x, k1, k2, c1, c2, eps)


@njit(cache=True)
def _illinois(which, other, lo, flo, hi, fhi, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol):
    """Illinois regula falsi for a sign change flo > 0 >= fhi on [lo, hi]."""
    if -fhi <= ftol:
        return hi
    side = 0
    x = hi
    for _ in range(300):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not (lo < x < hi):
            x = 0.5 * (lo + hi)
        fx = _f(which, other, x, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps)
        if abs(fx) <= ftol or hi - lo <= 1e-15 * (1.0 + hi):
            return x
        if fx > 0.0:
            lo, flo = x, fx
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi, fhi = x, fx
            if side == -1:
                flo *= 0.5
            side = -1
    return x


@njit(cache=True)
def _local_root(which, other, x0, f0, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax):
    x = x0 if x0 > 1e-12 else 1e-3
    if x > amax:
        x = amax
    fx = _f(which, other, x, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps)
    if fx > 0.0:
        lo, flo = x, fx
        while True:
            if x >= amax:
                return amax, ST_BRACKET
            x = min(2.0 * x, amax)
            fx = _f(which, other, x, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps)
            if fx <= 0.0:
                hi, fhi = x, fx
                break
            lo, flo = x, fx
    else:
        hi, fhi = x, fx
        while True:
            x = 0.5 * x
            if x < 1e-15:
                lo, flo = 0.0, f0
                break
            fx = _f(which, other, x, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps)
            if fx > 0.0:
                lo, flo = x, fx
                break
            hi, fhi = x, fx
    return _illinois(which, other, lo, flo, hi, fhi, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2,
                     eps, ftol), ST_OK


@njit(cache=True)
def _root(which, other, x0, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax):
    """Root of one residual in its own alpha, clamped at 0.

    The bracket grows from the warm start, so with a residual that is not
    monotone the root nearest the previous iterate is returned.
    """
    f0 = _f(which, other, 0.0, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps)
    if f0 <= 0.0:
        return 0.0, ST_OK
    return _local_root(which, other, x0, f0, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps,
                       ftol, amax)


@njit(cache=True)
def solve_pair(m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, a1, a2, tol, cap, ftol_rel, s_max):
    """Alternating root finds; returns (alpha1, alpha2, iterations, status).

    In region Z the one-term equation for alpha2 is solved first, then the
    two-term equation for alpha1, and convergence is tested on alpha1; the
    complement region mirrors this.
    """
    ftol = ftol_rel * eps
    amax1 = s_max / (pbar * z1) if z1 > 0.0 else 0.0
    amax2 = s_max / (pbar * z2) if z2 > 0.0 else 0.0
    if amax1 > 1e12:
        amax1 = 1e12
    if amax2 > 1e12:
        amax2 = 1e12
    if z1 <= 0.0:
        a1 = 0.0
    if z2 <= 0.0:
        a2 = 0.0
    status = ST_INNER_CAP
    it = 0
    for it in range(1, cap + 1):
        if tag == 0:
            if z2 > 0.0:
                a2, st = _root(2, a1, a2, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax2)
            if z1 > 0.0:
                new, st = _root(1, a2, a1, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax1)
            else:
                new = 0.0
            done = abs(new - a1) <= tol * (1.0 + new)
            a1 = new
        else:
            if z1 > 0.0:
                a1, st = _root(1, a2, a1, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax1)
            if z2 > 0.0:
                new, st = _root(2, a1, a2, m, tag, pbar, z1, z2, phi, k1, k2, c1, c2, eps, ftol, amax2)
            else:
                new = 0.0
            done = abs(new - a2) <= tol * (1.0 + new)
            a2 = new
        if done:
            status = ST_OK
            break
    return a1, a2, it, status


@njit(cache=True)
def solve_all(m, pbar, z1, z2, phi, tags, k1, k2, c1, c2, eps, a1, a2, tol, cap, ftol_rel, s_max,
              iters, status):
    """Solve every sample in place; returns the number of failed samples."""
    bad = 0
    for n in range(z1.size):
        x1, x2, it, st = solve_pair(m, tags[n], pbar, z1[n], z2[n], phi[n], k1, k2, c1, c2, eps,
                                    a1[n], a2[n], tol, cap, ftol_rel, s_max)
        a1[n] = x1
        a2[n] = x2
        iters[n] = it
        status[n] = st
        if st != ST_OK:
            bad += 1
    return bad


@njit(cache=True)
def solve_all_free(m, pbar, z1, z2, phi, tags, k1, k2, c1, c2, eps, a1, a2, tol, cap, ftol_rel,
                   s_max, rtol, iters, status):
    """Like solve_all, but each sample also picks the better decoding order.

    Both orders are solved from the current allocation and the one with
    the larger per-sample Lagrangian wins; a gain within rtol of the
    values keeps the current tag.
    """
    bad = 0
    for n in range(z1.size):
        t0 = tags[n]
        x1, x2, it, st = solve_pair(m, t0, pbar, z1[n], z2[n], phi[n], k1, k2, c1, c2, eps,
                                    a1[n], a2[n], tol, cap, ftol_rel, s_max)
        y1, y2, it2, st2 = solve_pair(m, 1 - t0, pbar, z1[n], z2[n], phi[n], k1, k2, c1, c2, eps,
                                      a1[n], a2[n], tol, cap, ftol_rel, s_max)
        v0 = sample_value(m, t0, pbar, z1[n], z2[n], phi[n], x1, x2, k1, k2, c1, c2, eps)
        v1 = sample_value(m, 1 - t0, pbar, z1[n], z2[n], phi[n], y1, y2, k1, k2, c1, c2, eps)
        if st2 == ST_OK and v1 - v0 > rtol * (abs(v0) + abs(v1)) + 1e-300:
            tags[n] = 1 - t0
            x1, x2, it, st = y1, y2, it2, st2
        a1[n] = x1
        a2[n] = x2
        iters[n] = it
        status[n] = st
        if st != ST_OK:
            bad += 1
    return bad


@njit(cache=True)
def rates_all(m, pbar, z1, z2, phi, tags, a1, a2, r1, r2):
    for n in range(z1.size):
        t = terms_at(m, pbar, z1[n], z2[n], phi[n], a1[n], a2[n])
        x, y = rates_from_terms(tags[n], t)
        r1[n] = x
        r2[n] = y


@njit(cache=True)
def sample_value(m, tag, pbar, z1, z2, phi, a1, a2, k1, k2, c1, c2, eps):
    """Per-sample Lagrangian: linearized utilities minus eps (a1 + a2).

    The utility of user j is k_j (1 - exp(-c_j r_j)) / c_j in nats-scaled
    units, which tends to k_j r_j as c_j -> 0.
    """
    t = terms_at(m, pbar, z1, z2, phi, a1, a2)
    r1, r2 = rates_from_terms(tag, t)
    u1 = k1 * (-math.expm1(-c1 * r1) / c1 if c1 > 0.0 else r1)
    u2 = k2 * (-math.expm1(-c2 * r2) / c2 if c2 > 0.0 else r2)
    return (u1 + u2) / LN2 - eps * (a1 + a2)


@njit(cache=True)
def max_marginal(m, pbar, z1, z2, phi, tags, k1, k2, c1, c2):
    """Largest weighted marginal utility at alpha = 0 over all samples.

    Both decoding orders are scanned so the bound also holds when the
    inner solve picks the order.
    """
    best = 0.0
    for n in range(z1.size):
        for tag in (0, 1):
            r = residuals(m, tag, pbar, z1[n], z2[n], phi[n], 0.0, 0.0, k1, k2, c1, c2, 0.0)
            if r[0] > best:
                best = r[0]
            if r[1] > best:
                best = r[1]
    return best


def new_int(n):
    return np.zeros(n, dtype=np.int64)

