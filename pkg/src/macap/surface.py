"""Tabulated rate surfaces for fast per-sample evaluation inside the solver.

For a pair of inputs the solver needs, at each fading sample and power
pair, the joint information I12 and its gradients G_j = dI12/ds_j
(s_j = |g_j|^2) together with the single-user pairs (I_j, mmse_j).  For
finite alphabets these are tabulated once by quadrature and interpolated
with cubic B-splines:

* single-user tables over u = asinh(a/a0), a = sqrt(s);
* joint tables over (u1, u2, phi), phi = arg(g1 conj(g2)), periodic with
  period 2 pi / lcm of the two rotation orders.

Grids are offset by half a step so u = 0 is never a node; the negative-u
side is filled exactly from the symmetry f(-a1, a2, phi) = f(a1, a2, phi+pi).
Past s_max the inputs are treated as saturated (values frozen, gradients
zero).  Gaussian inputs use closed forms and need no table.  Tables are
cached on disk, keyed by a hash of the alphabets and grid settings.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.ndimage import spline_filter1d

from .constellation import (Constellation, InputModel, is_conjugate_symmetric, is_gaussian,
                            require_valid, rotation_order)
from .mmse_mi import IntegrationSpec, joint_moments, single_moments

KIND_FF, KIND_FG, KIND_GF, KIND_GG = 0, 1, 2, 3
CACHE_VERSION = 3


@dataclass(frozen=True)
class SurfaceGrid:
    a0: float = 0.2
    du: float = 0.1
    du_single: float = 0.05
    s_max: float = 100.0
    phi_step: float = math.pi / 32
    pad: int = 6
    quad_step: float = 0.3
    quad_radius: float = 5.0

    def nphi(self, period: float) -> int:
        n = int(math.ceil(period / self.phi_step))
        return max(8, n + (n % 2))

    @property
    def quad(self) -> IntegrationSpec:
        return IntegrationSpec(step=self.quad_step, radius=self.quad_radius)

    @property
    def quad_single(self) -> IntegrationSpec:
        # single-user tables are cheap, so they get the full-accuracy rule
        return IntegrationSpec()

    def u_nodes(self, du: float) -> np.ndarray:
        """Padded u nodes; index i sits at (i - pad + 0.5) du."""
        u_max = math.asinh(math.sqrt(self.s_max) / self.a0)
        n_in = int(math.ceil(u_max / du - 0.5)) + 1
        return (np.arange(n_in + 2 * self.pad) - self.pad + 0.5) * du, n_in


def cache_dir() -> Path:
    return Path(os.environ.get("MACAP_CACHE_DIR", Path.home() / ".cache" / "macap"))


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:24]


def _cached(name: str, key: str, build):
    path = cache_dir() / f"{name}_{key}.npz"
    try:
        with np.load(path) as data:
            return data["coef"]
    except (OSError, KeyError, ValueError):
        pass
    coef = build()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp.npz")
        np.savez(tmp, coef=coef)
        os.replace(tmp, path)
    except OSError:
        pass
    return coef


# ---------------------------------------------------------------- building

def _single_table(c: Constellation, grid: SurfaceGrid) -> np.ndarray:
    u, n_in = grid.u_nodes(grid.du_single)
    vals = np.empty((2, u.size))
    for i, ui in enumerate(u):
        a = grid.a0 * math.sinh(abs(ui))
        vals[:, i] = single_moments(c, a, grid.quad_single)
    return spline_filter1d(vals, order=3, axis=1, mode="mirror")


def _period(c1: Constellation, c2: Constellation) -> float:
    return 2.0 * math.pi / math.lcm(rotation_order(c1), rotation_order(c2))


def _joint_table(c1: Constellation, c2: Constellation, grid: SurfaceGrid) -> np.ndarray:
    u, n_in = grid.u_nodes(grid.du)
    pad = grid.pad
    period = _period(c1, c2)
    nphi = grid.nphi(period)
    dphi = period / nphi
    mirror = is_conjugate_symmetric(c1) and is_conjugate_symmetric(c2)
    top = u.size
    vals = np.empty((3, top, top, nphi))
    pos = range(pad, top)
    for i in pos:
        a1 = grid.a0 * math.sinh(u[i])
        for j in pos:
            a2 = grid.a0 * math.sinh(u[j])
            for k in range(nphi):
                if mirror and k > nphi // 2:
                    vals[:, i, j, k] = vals[:, i, j, nphi - k]
                    continue
                g2 = a2 * complex(math.cos(k * dphi), -math.sin(k * dphi))
                i12, m1, m2, cross = joint_moments(c1, a1, c2, g2, grid.quad)
                vals[:, i, j, k] = (i12, m1 + cross / (a1 * a1), m2 + cross / (a2 * a2))
    # negative amplitudes: f(-a1, a2, phi) = f(a1, a2, phi + pi), likewise for a2
    shift = int(round(math.pi / dphi))
    for i in range(pad):
        src = 2 * pad - 1 - i
        vals[:, i, pad:, :] = np.roll(vals[:, src, pad:, :], -shift, axis=-1)
    for j in range(pad):
        src = 2 * pad - 1 - j
        vals[:, :, j, :] = np.roll(vals[:, :, src, :], -shift, axis=-1)
    coef = spline_filter1d(vals, order=3, axis=1, mode="mirror")
    coef = spline_filter1d(coef, order=3, axis=2, mode="mirror")
    coef = spline_filter1d(coef, order=3, axis=3, mode="grid-wrap")
    # wrap-pad the periodic axis: padded index p holds node p - 1
    return np.concatenate([coef[..., -1:], coef, coef[..., :2]], axis=-1)


# ---------------------------------------------------------------- evaluation

@njit(cache=True, inline="always")
def _bweights(t):
    t2 = t * t
    t3 = t2 * t
    return ((1.0 - t) ** 3 / 6.0, (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0, t3 / 6.0)


@njit(cache=True)
def _coord(s, a0, du, pad, u_last):
    u = math.asinh(math.sqrt(max(s, 0.0)) / a0)
    sat = u > u_last
    if sat:
        u = u_last
    x = u / du - 0.5 + pad
    i = int(math.floor(x))
    return i, x - i, sat


@njit(cache=True)
def eval_single(coef, prm, s):
    """(I, mmse) from a single-user table; prm = (a0, du, pad, u_last)."""
    i, t, sat = _coord(s, prm[0], prm[1], prm[2], prm[3])
    w0, w1, w2, w3 = _bweights(t)
    val = w0 * coef[0, i - 1] + w1 * coef[0, i] + w2 * coef[0, i + 1] + w3 * coef[0, i + 2]
    # the spline can undershoot zero by ~1e-7 near s = 0
    val = max(val, 0.0)
    if sat:
        return val, 0.0
    m = w0 * coef[1, i - 1] + w1 * coef[1, i] + w2 * coef[1, i + 1] + w3 * coef[1, i + 2]
    return val, min(max(m, 0.0), 1.0)


@njit(cache=True)
def eval_joint(coef, prm, s1, s2, phi):
    """(I12, G1, G2); prm = (a0, du, pad, u_last, period, nphi)."""
    i1, t1, sat1 = _coord(s1, prm[0], prm[1], prm[2], prm[3])
    i2, t2, sat2 = _coord(s2, prm[0], prm[1], prm[2], prm[3])
    period = prm[4]
    nphi = int(prm[5])
    xp = (phi % period) / period * nphi
    ip = int(math.floor(xp))
    tp = xp - ip
    if ip >= nphi:
        ip = nphi - 1
        tp = 1.0
    wa = _bweights(t1)
    wb = _bweights(t2)
    wc = _bweights(tp)
    v0 = 0.0
    v1 = 0.0
    v2 = 0.0
    for a in range(4):
        for b in range(4):
            wab = wa[a] * wb[b]
            for c in range(4):
                w = wab * wc[c]
                ia = i1 - 1 + a
                ib = i2 - 1 + b
                ic = ip + c
                v0 += w * coef[0, ia, ib, ic]
                v1 += w * coef[1, ia, ib, ic]
                v2 += w * coef[2, ia, ib, ic]
    if sat1:
        v1 = 0.0
    if sat2:
        v2 = 0.0
    return v0, v1, v2


@njit(cache=True)
def rate_terms(kind, cj, c1, c2, pj, p1, p2, s1, s2, phi):
    """(I12, G1, G2, I1, m1, I2, m2) in nats for one sample."""
    if kind == 3:
        tot = 1.0 + s1 + s2
        return (math.log(tot), 1.0 / tot, 1.0 / tot,
                math.log1p(s1), 1.0 / (1.0 + s1), math.log1p(s2), 1.0 / (1.0 + s2))
    if kind == 1:
        sigma = s1 / (1.0 + s2)
        i_f, m_f = eval_single(c1, p1, sigma)
        i1, m1 = eval_single(c1, p1, s1)
        return (math.log1p(s2) + i_f, m_f / (1.0 + s2),
                1.0 / (1.0 + s2) - m_f * s1 / (1.0 + s2) ** 2,
                i1, m1, math.log1p(s2), 1.0 / (1.0 + s2))
    if kind == 2:
        sigma = s2 / (1.0 + s1)
        i_f, m_f = eval_single(c2, p2, sigma)
        i2, m2 = eval_single(c2, p2, s2)
        return (math.log1p(s1) + i_f, 1.0 / (1.0 + s1) - m_f * s2 / (1.0 + s1) ** 2,
                m_f / (1.0 + s1), math.log1p(s1), 1.0 / (1.0 + s1), i2, m2)
    i12, g1, g2 = eval_joint(cj, pj, s1, s2, phi)
    i1, m1 = eval_single(c1, p1, s1)
    i2, m2 = eval_single(c2, p2, s2)
    # a silent user adds nothing; keep the rates of the other exact
    if s1 <= 0.0:
        i12 = i2
    if s2 <= 0.0:
        i12 = i1
    # the joint information can never fall below either single-user term
    if i12 < i1:
        i12 = i1
    if i12 < i2:
        i12 = i2
    return i12, g1, g2, i1, m1, i2, m2


@njit(cache=True)
def rate_terms_batch(kind, cj, c1, c2, pj, p1, p2, s1, s2, phi, out):
    for n in range(s1.size):
        r = rate_terms(kind, cj, c1, c2, pj, p1, p2, s1[n], s2[n], phi[n])
        for q in range(7):
            out[q, n] = r[q]


class RateModel:
    """Per-sample rate terms for a pair of inputs.

    Attributes ``kind``, ``coef_*`` and ``prm_*`` are passed straight to
    the compiled solver.
    """

    def __init__(self, input1: InputModel, input2: InputModel, grid: SurfaceGrid | None = None):
        self.input1 = require_valid(input1)
        self.input2 = require_valid(input2)
        self.grid = grid or SurfaceGrid()
        g1, g2 = is_gaussian(input1), is_gaussian(input2)
        self.kind = (KIND_GG if g1 and g2 else KIND_GF if g1 else KIND_FG if g2 else KIND_FF)
        gd = self.grid
        u1, n1 = gd.u_nodes(gd.du_single)
        self.prm_single = np.array([gd.a0, gd.du_single, gd.pad, u1[gd.pad + n1 - 1]])
        uj, nj = gd.u_nodes(gd.du)
        dummy1 = np.zeros((2, 4))
        self.coef1 = self._single(input1) if not g1 else dummy1
        self.coef2 = self._single(input2) if not g2 else dummy1
        if self.kind == KIND_FF:
            self.coef_joint = self._joint(input1, input2)
            period = _period(input1, input2)
        else:
            self.coef_joint = np.zeros((3, 4, 4, 4))
            period = 2.0 * math.pi
        self.prm_joint = np.array([gd.a0, gd.du, gd.pad, uj[gd.pad + nj - 1], period, gd.nphi(period)])

    def _single(self, c: Constellation) -> np.ndarray:
        key = _key(CACHE_VERSION, "single", c.triples(), asdict(self.grid))
        return _cached("single", key, lambda: _single_table(c, self.grid))

    def _joint(self, c1: Constellation, c2: Constellation) -> np.ndarray:
        key = _key(CACHE_VERSION, "joint", c1.triples(), c2.triples(), asdict(self.grid))
        return _cached("joint", key, lambda: _joint_table(c1, c2, self.grid))

    @property
    def args(self):
        return (self.kind, self.coef_joint, self.coef1, self.coef2,
                self.prm_joint, self.prm_single, self.prm_single)

    @property
    def label(self) -> str:
        return f"{self.input1.label}/{self.input2.label}"

    def terms(self, s1, s2, phi) -> np.ndarray:
        """Array (7, n): I12, G1, G2, I1, m1, I2, m2 (nats)."""
        s1 = np.ascontiguousarray(np.atleast_1d(s1), dtype=float)
        s2 = np.ascontiguousarray(np.broadcast_to(s2, s1.shape), dtype=float)
        phi = np.ascontiguousarray(np.broadcast_to(phi, s1.shape), dtype=float)
        out = np.empty((7, s1.size))
        rate_terms_batch(*self.args, s1, s2, phi, out)
        return out
