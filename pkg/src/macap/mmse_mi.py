"""Mutual information, MMSE and their power derivatives for the two-user MAC.

The received signal is ``y = g1*x1 + g2*x2 + w`` with ``w ~ CN(0, 1)`` and
unit-energy inputs.  All internal quantities are in nats; ``MiResult``
exposes bits at the boundary.

For finite alphabets every expectation over ``y`` is a sum over symbol
pairs of an integral against a unit complex Gaussian.  The default rule is
a Gaussian-weighted trapezoid (sinc) rule on a disk, which converges
geometrically in the step for these analytic integrands; Gauss-Hermite is
available as an alternative.  Gaussian inputs use closed forms, and a
Gaussian user paired with a finite one is handled through the successive
decoding decomposition, in which the Gaussian user acts as extra noise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ._kernels import integrand_values, mixture_moments
from .constellation import Constellation, InputModel, is_gaussian, require_valid
from .errors import InvalidArgument, NumericError

LN2 = math.log(2.0)
ALPHA_FLOOR = 1e-8


@dataclass(frozen=True)
class IntegrationSpec:
    """Node set used for integrals against a unit complex Gaussian.

    rule:   "trapezoid" (step ``step`` on the disk of radius ``radius``) or
            "gauss-hermite" (``nodes`` x ``nodes`` tensor grid).
    tol:    accepted error estimate, taken as the change when the rule is
            coarsened (step x1.25, or 3/4 of the Hermite nodes).
    check:  compute the error estimate (costs a second evaluation).
    """

    rule: str = "trapezoid"
    step: float = 0.125
    radius: float = 6.5
    nodes: int = 48
    tol: float = 1e-7
    check: bool = False

    def __post_init__(self):
        if self.rule not in ("trapezoid", "gauss-hermite"):
            raise InvalidArgument(f"unknown integration rule {self.rule!r}")
        if self.step <= 0 or self.radius <= 0 or self.nodes < 2 or self.tol <= 0:
            raise InvalidArgument("integration step, radius, nodes and tol must be positive")

    def coarse(self) -> "IntegrationSpec":
        if self.rule == "trapezoid":
            return IntegrationSpec(self.rule, self.step * 1.25, self.radius, self.nodes, self.tol, False)
        return IntegrationSpec(self.rule, self.step, self.radius, max(2, (3 * self.nodes) // 4), self.tol, False)

    def grid(self):
        return _node_grid(self.rule, self.step, self.radius, self.nodes)


DEFAULT_QUAD = IntegrationSpec()
CHECKED_QUAD = IntegrationSpec(check=True)


@lru_cache(maxsize=32)
def _node_grid(rule, step, radius, nodes):
    if rule == "trapezoid":
        m = int(math.floor(radius / step))
        x = step * np.arange(-m, m + 1)
        w = step * np.exp(-x * x) / math.sqrt(math.pi)
    else:
        x, w = np.polynomial.hermite.hermgauss(nodes)
        w = w / math.sqrt(math.pi)
    xr, xi = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    keep = ww > 0.0
    if rule == "trapezoid":
        keep &= xr * xr + xi * xi <= radius * radius + 1e-12
    nr, ni, nw = xr[keep], xi[keep], ww[keep]
    for a in (nr, ni, nw):
        a.flags.writeable = False
    return np.ascontiguousarray(nr), np.ascontiguousarray(ni), np.ascontiguousarray(nw)


@dataclass(frozen=True)
class MiResult:
    nats: float
    stderr_nats: Optional[float] = None

    @property
    def bits(self) -> float:
        return self.nats / LN2

    @property
    def stderr_bits(self) -> Optional[float]:
        return None if self.stderr_nats is None else self.stderr_nats / LN2


@dataclass(frozen=True)
class ScaledInput:
    """An input model multiplied by the complex gain sqrt(alpha*pbar)*h.

    ``alpha`` and ``h`` are optional bookkeeping used by the power
    derivatives; ``gain`` alone determines every information quantity.
    """

    input: InputModel
    gain: complex
    alpha: Optional[float] = None
    h: Optional[complex] = None

    def __post_init__(self):
        g = complex(self.gain)
        if not (math.isfinite(g.real) and math.isfinite(g.imag)):
            raise InvalidArgument(f"gain must be finite, got {g}")
        object.__setattr__(self, "gain", g)

    @classmethod
    def from_policy(cls, model: InputModel, alpha: float, pbar: float, h: complex) -> "ScaledInput":
        if alpha < 0 or pbar < 0:
            raise InvalidArgument("alpha and pbar must be nonnegative")
        return cls(model, math.sqrt(alpha * pbar) * complex(h), float(alpha), complex(h))

    @property
    def snr(self) -> float:
        return abs(self.gain) ** 2

    @property
    def gaussian(self) -> bool:
        return is_gaussian(self.input)


@dataclass(frozen=True)
class DerivativeReport:
    """Power derivatives of transmitter j, all in nats per unit alpha.

    d_own        dI(x_j; y)/dalpha_j, i.e. of I(x1, x2; y) - I(x_m; y_m)
    d_own_clean  dI(x_j; y_j)/dalpha_j (interference removed)
    d_cross      d_own - d_own_clean, the slope of the other user's
                 interference-limited rate
    right_limit  alpha_j was below the floor and the cross term was
                 evaluated at the floor
    """

    d_own: float
    d_own_clean: float
    mmse_joint: float
    mmse_clean: float
    cross_term: float
    right_limit: bool = False

    @property
    def d_cross(self) -> float:
        return self.d_own - self.d_own_clean


# ---------------------------------------------------------------- mixtures

def _rotation_perm(c: Constellation, w: complex):
    vals, pri = c.values, c.priors
    perm = np.empty(c.size, dtype=np.int64)
    for i in range(c.size):
        hit = np.flatnonzero((np.abs(vals - w * vals[i]) < 1e-9) & (np.abs(pri - pri[i]) < 1e-12))
        if hit.size == 0:
            return None
        perm[i] = hit[0]
    return perm


@lru_cache(maxsize=64)
def _orbits(c1: Constellation, c2: Optional[Constellation]):
    """Orbit representatives of symbol pairs under common rotations.

    Rotating both symbols by the same unit w maps the output mixture onto
    its rotation, which leaves every quantity integrated here unchanged.
    """
    m2 = 1 if c2 is None else c2.size
    group = []
    for w in (-1.0, 1j, -1j):
        p1 = _rotation_perm(c1, w)
        p2 = np.zeros(1, dtype=np.int64) if c2 is None else _rotation_perm(c2, w)
        if p1 is not None and p2 is not None:
            group.append((p1, p2))
    n = c1.size * m2
    seen = np.zeros(n, dtype=bool)
    reps, mult = [], []
    for k in range(n):
        if seen[k]:
            continue
        i1, i2 = divmod(k, m2)
        orbit = {k}
        for p1, p2 in group:
            orbit.add(int(p1[i1]) * m2 + int(p2[i2]))
        for o in orbit:
            seen[o] = True
        reps.append(k)
        mult.append(len(orbit))
    return np.array(reps, dtype=np.int64), np.array(mult, dtype=float)


def _mixture(c1: Constellation, g1: complex, c2: Optional[Constellation], g2: complex):
    if c2 is None:
        mu = g1 * c1.values
        logp = np.log(np.maximum(c1.priors, 1e-300))
        sym1 = np.ascontiguousarray(c1.values)
        sym2 = np.zeros(c1.size, dtype=complex)
        prior = c1.priors
    else:
        x1, x2 = np.meshgrid(c1.values, c2.values, indexing="ij")
        p = np.outer(c1.priors, c2.priors).ravel()
        mu = (g1 * x1 + g2 * x2).ravel()
        logp = np.log(np.maximum(p, 1e-300))
        sym1 = np.ascontiguousarray(x1.ravel())
        sym2 = np.ascontiguousarray(x2.ravel())
        prior = p
    reps, mult = _orbits(c1, c2)
    rep_w = prior[reps] * mult
    return np.ascontiguousarray(mu), logp, sym1, sym2, reps, rep_w


def _moments(c1, g1, c2, g2, quad: IntegrationSpec):
    mu, logp, sym1, sym2, reps, rep_w = _mixture(c1, g1, c2, g2)
    nr, ni, nw = quad.grid()
    out = mixture_moments(mu, logp, sym1, sym2, reps, rep_w, nr, ni, nw)
    if quad.check:
        nr, ni, nw = quad.coarse().grid()
        ref = mixture_moments(mu, logp, sym1, sym2, reps, rep_w, nr, ni, nw)
        err = max(abs(out[0] - ref[0]), abs(out[1] - ref[1]), abs(out[2] - ref[2]))
        if not err <= quad.tol:
            raise NumericError(f"integration error estimate {err:.3g} exceeds tolerance {quad.tol:.3g}")
    return out


def single_moments(c: Constellation, gain: complex, quad: IntegrationSpec = DEFAULT_QUAD):
    """(I nats, mmse) of a finite input through y = gain*x + w."""
    if gain == 0:
        return 0.0, 1.0 - abs(c.mean) ** 2
    info, e11, _, _ = _moments(c, complex(gain), None, 0j, quad)
    return max(info, 0.0), 1.0 - e11


def joint_moments(c1: Constellation, g1: complex, c2: Constellation, g2: complex,
                  quad: IntegrationSpec = DEFAULT_QUAD):
    """(I12 nats, mmse1, mmse2, cross) for two finite inputs.

    ``cross`` = Re(g1 conj(g2) (E x1 conj(E x2) - E[xhat1 conj(xhat2)])).
    """
    info, e11, e22, e12 = _moments(c1, complex(g1), c2, complex(g2), quad)
    c = c1.mean * np.conj(c2.mean) - e12
    cross = float((complex(g1) * np.conj(complex(g2)) * c).real)
    return max(info, 0.0), 1.0 - e11, 1.0 - e22, cross


def joint_gradient(c1: InputModel, g1: complex, c2: InputModel, g2: complex,
                   quad: IntegrationSpec = DEFAULT_QUAD):
    """I12 (nats) and its partial derivatives G_j = dI12/d|g_j|^2.

    The relative phase of g1 conj(g2) is held fixed.  G_j stays finite as
    |g_j| -> 0, which is the regular form of the alpha_j -> 0 limit.
    """
    s1, s2 = abs(g1) ** 2, abs(g2) ** 2
    ga, gb = is_gaussian(c1), is_gaussian(c2)
    if ga and gb:
        tot = 1.0 + s1 + s2
        return math.log(tot), 1.0 / tot, 1.0 / tot
    if ga or gb:
        f, sf, sg = (c2, s2, s1) if ga else (c1, s1, s2)
        sigma = sf / (1.0 + sg)
        i_f, m_f = single_moments(f, math.sqrt(sigma), quad)
        i12 = math.log1p(sg) + i_f
        g_f = m_f / (1.0 + sg)
        g_g = 1.0 / (1.0 + sg) - m_f * sf / (1.0 + sg) ** 2
        return (i12, g_g, g_f) if ga else (i12, g_f, g_g)
    i12, m1, m2, cross = joint_moments(c1, g1, c2, g2, quad)
    g1_ = m1 + (cross / s1 if s1 > 0 else _cross_limit(c1, c2, g2, quad))
    g2_ = m2 + (cross / s2 if s2 > 0 else _cross_limit(c2, c1, g1, quad))
    return i12, g1_, g2_


def _cross_limit(cj, cm, gm, quad):
    # at g_j = 0 the phase of g_j is lost; the finite limit of the cross
    # term over s_j is taken along the real axis
    a = 1e-4
    _, _, _, cross = joint_moments(cj, a, cm, gm, quad)
    return cross / (a * a)


# ---------------------------------------------------------------- public API

def _check_inputs(*inputs):
    for s in inputs:
        if s is not None:
            require_valid(s.input)


def mi_single(s: ScaledInput, quad: IntegrationSpec = DEFAULT_QUAD) -> MiResult:
    _check_inputs(s)
    if s.gaussian:
        return MiResult(math.log1p(s.snr))
    info, _ = single_moments(s.input, s.gain, quad)
    return MiResult(info)


def mi_joint(s1: ScaledInput, s2: ScaledInput, quad: IntegrationSpec = DEFAULT_QUAD) -> MiResult:
    _check_inputs(s1, s2)
    if s2.gain == 0 and not s1.gaussian:
        return mi_single(s1, quad)
    if s1.gain == 0 and not s2.gaussian:
        return mi_single(s2, quad)
    i12, _, _ = joint_gradient(s1.input, s1.gain, s2.input, s2.gain, quad)
    return MiResult(i12)


def _pair(j: int, s1: ScaledInput, s2: ScaledInput):
    if j not in (1, 2):
        raise InvalidArgument(f"transmitter index must be 1 or 2, got {j}")
    return (s1, s2) if j == 1 else (s2, s1)


def mi_interference(j: int, s1: ScaledInput, s2: ScaledInput,
                    quad: IntegrationSpec = DEFAULT_QUAD) -> MiResult:
    """I(x_j; y) with the other input unknown, as I(x1,x2;y) - I(x_m;y_m)."""
    _, sm = _pair(j, s1, s2)
    val = mi_joint(s1, s2, quad).nats - mi_single(sm, quad).nats
    if val < 0:
        if val < -10 * quad.tol:
            raise NumericError(f"I(x_{j};y) = {val:.3g} nats is negative beyond tolerance")
        val = 0.0
    return MiResult(val)


def mmse(j: int, s1: ScaledInput, s2: Optional[ScaledInput] = None,
         quad: IntegrationSpec = DEFAULT_QUAD) -> float:
    """E|x_j - E[x_j|y]|^2 for y carrying both inputs (or only s1 if s2 is None)."""
    if s2 is None:
        if j != 1:
            raise InvalidArgument("single-user mmse is for transmitter 1")
        s2 = ScaledInput(s1.input, 0.0)
    sj, sm = _pair(j, s1, s2)
    _check_inputs(sj, sm)
    if sj.gaussian and sm.gaussian:
        val = 1.0 - sj.snr / (1.0 + sj.snr + sm.snr)
    elif sj.gaussian:
        sigma = sm.snr / (1.0 + sj.snr)
        _, m_f = single_moments(sm.input, math.sqrt(sigma), quad)
        val = 1.0 - sj.snr * (1.0 + sj.snr - sm.snr * m_f) / (1.0 + sj.snr) ** 2
    elif sm.gaussian:
        sigma = sj.snr / (1.0 + sm.snr)
        _, val = single_moments(sj.input, math.sqrt(sigma), quad)
    elif sm.gain == 0:
        _, val = single_moments(sj.input, sj.gain, quad)
    else:
        _, m1, m2, _ = joint_moments(s1.input, s1.gain, s2.input, s2.gain, quad)
        val = m1 if j == 1 else m2
    if not -quad.tol <= val <= 1.0 + quad.tol:
        raise NumericError(f"mmse {val:.6g} outside [0, 1]")
    return min(max(val, 0.0), 1.0)


def conditional_mean(j: int, s1: ScaledInput, s2: Optional[ScaledInput], y: complex) -> complex:
    """Posterior mean E[x_j | y] for finite alphabets."""
    if s2 is None:
        s2 = ScaledInput(s1.input, 0.0)
    if s1.gaussian or s2.gaussian:
        raise InvalidArgument("conditional_mean is defined for finite alphabets")
    _check_inputs(s1, s2)
    y = complex(y)
    if not (math.isfinite(y.real) and math.isfinite(y.imag)):
        raise NumericError(f"observation {y} is not finite")
    mu, logp, sym1, sym2, _, _ = _mixture(s1.input, s1.gain, s2.input, s2.gain)
    e = logp - np.abs(y - mu) ** 2
    e = e - e.max()
    q = np.exp(e)
    tot = q.sum()
    if not tot > 0:
        raise NumericError("posterior normalization underflowed")
    sym = sym1 if j == 1 else sym2
    return complex(np.sum(q * sym) / tot)


def derivative_report(j: int, s1: ScaledInput, s2: ScaledInput, params,
                      quad: IntegrationSpec = DEFAULT_QUAD) -> DerivativeReport:
    """Power derivatives of the rates seen by transmitter j.

    ``s1``/``s2`` should be built with :meth:`ScaledInput.from_policy` so
    that alpha and h are known; otherwise alpha = 1 and h = gain/sqrt(pbar).
    d_own = pbar z_j mmse_joint + pbar sqrt(alpha_m/alpha_j) cross_term.
    """
    pbar = float(params.pbar)
    sj, sm = _pair(j, s1, s2)
    _check_inputs(sj, sm)

    def unpack(s):
        if s.alpha is not None and s.h is not None:
            return s.alpha, s.h
        return 1.0, s.gain / math.sqrt(pbar)

    aj, hj = unpack(sj)
    am, hm = unpack(sm)
    right_limit = aj < ALPHA_FLOOR and am > 0
    aj_eval = max(aj, ALPHA_FLOOR) if right_limit else aj
    gj = math.sqrt(aj_eval * pbar) * hj
    gm = math.sqrt(am * pbar) * hm
    zj = abs(hj) ** 2

    a_j = ScaledInput(sj.input, gj, aj_eval, hj)
    a_m = ScaledInput(sm.input, gm, am, hm)
    m_joint = mmse(1, a_j, a_m, quad)
    if sj.gaussian:
        m_clean = 1.0 / (1.0 + abs(gj) ** 2)
    else:
        _, m_clean = single_moments(sj.input, gj, quad)

    # cross term from the gradient identity: dI12/ds_j = mmse_j + Re(g_j g_m* C)/s_j
    if am == 0 or gm == 0:
        cross = 0.0
        d_own = pbar * zj * m_joint
    else:
        c_in = (sj.input, gj, sm.input, gm)
        _, grad_j, _ = joint_gradient(*c_in, quad=quad)
        d_own = pbar * zj * grad_j
        sj_snr = abs(gj) ** 2
        # Re(h_j h_m* C) = (grad_j - mmse_j) s_j / (pbar sqrt(alpha_j alpha_m))
        cross = (grad_j - m_joint) * sj_snr / (pbar * math.sqrt(aj_eval * am)) if sj_snr > 0 else 0.0
    return DerivativeReport(d_own=d_own, d_own_clean=pbar * zj * m_clean, mmse_joint=m_joint,
                            mmse_clean=m_clean, cross_term=cross, right_limit=right_limit)


def mc_oracle_mi(s1: ScaledInput, s2: Optional[ScaledInput], n_samples: int, seed: int,
                 chunk: int = 100_000) -> MiResult:
    """Monte-Carlo estimate of I(x1, x2; y) with its standard error.

    Samples symbols and noise directly and averages log f(y|x)/f(y); shares
    no code with the quadrature path.
    """
    if s1.gaussian or (s2 is not None and s2.gaussian):
        raise InvalidArgument("mc_oracle_mi needs finite alphabets")
    if n_samples < 2:
        raise InvalidArgument("n_samples must be >= 2")
    rng = np.random.default_rng(seed)
    c1 = s1.input
    v1, p1 = c1.values, c1.priors
    if s2 is None:
        mu = s1.gain * v1
        pk = p1
    else:
        c2 = s2.input
        mu = (s1.gain * v1[:, None] + s2.gain * c2.values[None, :]).ravel()
        pk = np.outer(p1, c2.priors).ravel()
    logp = np.log(np.maximum(pk, 1e-300))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        k = rng.choice(mu.size, size=m, p=pk / pk.sum())
        w = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        y = mu[k] + w
        e = logp[None, :] - np.abs(y[:, None] - mu[None, :]) ** 2
        mx = e.max(axis=1)
        lse = mx + np.log(np.exp(e - mx[:, None]).sum(axis=1))
        val = -np.abs(w) ** 2 - lse
        total += val.sum()
        total_sq += (val * val).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean * mean, 0.0)
    return MiResult(mean, math.sqrt(var / (n_samples - 1)))


def dump_integrand(path, s1: ScaledInput, s2: Optional[ScaledInput],
                   quad: IntegrationSpec = DEFAULT_QUAD) -> int:
    """Write per-node integrand values log f(y|k) - log f(y) to CSV."""
    if s2 is None:
        mu, logp, _, _, _, _ = _mixture(s1.input, s1.gain, None, 0j)
        prior = s1.input.priors
    else:
        mu, logp, _, _, _, _ = _mixture(s1.input, s1.gain, s2.input, s2.gain)
        prior = np.exp(logp)
    nr, ni, nw = quad.grid()
    rows = 0
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["component", "prior", "node", "re_y", "im_y", "weight", "value"])
        for k in range(mu.size):
            vals = integrand_values(mu, logp, k, nr, ni)
            for a in range(nr.size):
                wr.writerow([k, repr(float(prior[k])), a, repr(float(mu[k].real + nr[a])),
                             repr(float(mu[k].imag + ni[a])), repr(float(nw[a])), repr(float(vals[a]))])
                rows += 1
    return rows
