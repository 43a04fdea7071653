"""Compiled inner loops for Gaussian-mixture integrals.

The channel output given the transmitted symbol pair k is CN(mu_k, 1), so
every expectation over y is a sum over components of an integral against a
unit complex Gaussian, which a fixed node set handles after recentering on
mu_k.  Log-densities are accumulated with max-subtraction.
"""

from math import exp, log

import numpy as np
from numba import njit


@njit(cache=True)
def mixture_moments(mu, logp, sym1, sym2, reps, rep_w, nr, ni, nw):
    """Return (info, e11, e22, e12) for the mixture sum_k p_k CN(mu_k, 1).

    info = -E[log sum_k' p_k' f(y|k')/f(y|k)] is the mutual information in
    nats between the component label and y.  e11 = E|xhat1|^2,
    e22 = E|xhat2|^2 and e12 = E[xhat1 conj(xhat2)] where xhat are the
    posterior means of the symbol labels sym1, sym2.  Only the component
    representatives ``reps`` are integrated; ``rep_w`` holds the total prior
    mass of each representative's symmetry orbit.
    """
    K = mu.size
    ex = np.empty(K)
    info = 0.0
    e11 = 0.0
    e22 = 0.0
    e12r = 0.0
    e12i = 0.0
    for r in range(reps.size):
        k = reps[r]
        pk = rep_w[r]
        if pk == 0.0:
            continue
        for a in range(nw.size):
            wr = nr[a]
            wi = ni[a]
            mx = -1e300
            for kp in range(K):
                dr = mu[k].real - mu[kp].real
                di = mu[k].imag - mu[kp].imag
                e = logp[kp] - dr * dr - di * di - 2.0 * (dr * wr + di * wi)
                ex[kp] = e
                if e > mx:
                    mx = e
            tot = 0.0
            m1r = 0.0
            m1i = 0.0
            m2r = 0.0
            m2i = 0.0
            for kp in range(K):
                q = exp(ex[kp] - mx)
                tot += q
                m1r += q * sym1[kp].real
                m1i += q * sym1[kp].imag
                m2r += q * sym2[kp].real
                m2i += q * sym2[kp].imag
            m1r /= tot
            m1i /= tot
            m2r /= tot
            m2i /= tot
            c = pk * nw[a]
            info -= c * (mx + log(tot))
            e11 += c * (m1r * m1r + m1i * m1i)
            e22 += c * (m2r * m2r + m2i * m2i)
            e12r += c * (m1r * m2r + m1i * m2i)
            e12i += c * (m1i * m2r - m1r * m2i)
    return info, e11, e22, complex(e12r, e12i)


@njit(cache=True)
def integrand_values(mu, logp, k, nr, ni):
    """Per-node value of log f(y|k) - log f(y) for component k."""
    K = mu.size
    out = np.empty(nr.size)
    ex = np.empty(K)
    for a in range(nr.size):
        mx = -1e300
        for kp in range(K):
            dr = mu[k].real - mu[kp].real
            di = mu[k].imag - mu[kp].imag
            e = logp[kp] - dr * dr - di * di - 2.0 * (dr * nr[a] + di * ni[a])
            ex[kp] = e
            if e > mx:
                mx = e
        tot = 0.0
        for kp in range(K):
            tot += exp(ex[kp] - mx)
        out[a] = -(mx + log(tot))
    return out
