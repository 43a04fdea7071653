"""Block-fading Rician channels and the weighted fading ensemble.

Each frame draws an independent pair (h1, h2).  A Rician link with factor
K and mean power Omega is

    h = sqrt(Omega K/(K+1)) e^{j phi0} + sqrt(Omega/(K+1)) CN(0, 1),

with the line-of-sight phase phi0 uniform and redrawn every frame, so the
relative phase of h1 h2* is uniform as well.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy.special import i0e

from .errors import InvalidArgument, NumericError


def db_to_linear(db: float) -> float:
    return 10.0 ** (float(db) / 10.0)


def linear_to_db(x: float) -> float:
    return -math.inf if x == 0 else 10.0 * math.log10(x)


@dataclass(frozen=True)
class SystemParams:
    """Average power budget (linear SNR), bandwidth and frame length."""

    pbar: float
    bandwidth_hz: float = 100.0
    frame_seconds: float = 1.0
    noise_variance: float = field(default=1.0, init=False)

    def __post_init__(self):
        for name in ("pbar", "bandwidth_hz", "frame_seconds"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgument(f"{name} must be positive and finite, got {v}")

    @classmethod
    def from_db(cls, pbar_db: float, bandwidth_hz: float = 100.0, frame_seconds: float = 1.0):
        return cls(db_to_linear(pbar_db), bandwidth_hz, frame_seconds)

    @property
    def tb(self) -> float:
        """Symbols per frame, the factor turning bits/s/Hz into bits."""
        return self.frame_seconds * self.bandwidth_hz


@dataclass(frozen=True)
class RicianSpec:
    """Rician link; ``k_factor_db = -inf`` is Rayleigh fading."""

    k_factor_db: float = -6.88
    mean_power: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.mean_power) and self.mean_power > 0):
            raise InvalidArgument(f"mean_power must be positive and finite, got {self.mean_power}")
        if math.isnan(self.k_factor_db) or self.k_factor_db == math.inf:
            raise InvalidArgument(f"k_factor_db must be a number or -inf, got {self.k_factor_db}")

    @property
    def k_linear(self) -> float:
        return 0.0 if self.k_factor_db == -math.inf else db_to_linear(self.k_factor_db)

    def split(self) -> tuple[float, float]:
        """(line-of-sight amplitude, scattered power)."""
        k = self.k_linear
        return math.sqrt(self.mean_power * k / (k + 1.0)), self.mean_power / (k + 1.0)


@dataclass(frozen=True)
class ChannelSample:
    h1: complex
    h2: complex
    weight: float

    @property
    def z1(self) -> float:
        return abs(self.h1) ** 2

    @property
    def z2(self) -> float:
        return abs(self.h2) ** 2

    @property
    def phase(self) -> float:
        """Relative phase arg(h1 conj(h2))."""
        return float(np.angle(self.h1 * np.conj(self.h2)))


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class FadingEnsemble:
    """Immutable weighted set of fading pairs; arrays are read-only."""

    h1: np.ndarray
    h2: np.ndarray
    weights: np.ndarray
    seed: int
    spec1: RicianSpec
    spec2: RicianSpec

    def __post_init__(self):
        h1 = _frozen(np.asarray(self.h1, dtype=complex))
        h2 = _frozen(np.asarray(self.h2, dtype=complex))
        w = _frozen(np.asarray(self.weights, dtype=float))
        if not (h1.shape == h2.shape == w.shape and h1.ndim == 1):
            raise InvalidArgument("h1, h2 and weights must be 1-D arrays of equal length")
        if h1.size == 0:
            raise InvalidArgument("empty ensemble")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument("weights must be positive and sum to 1")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "z1", _frozen(np.abs(h1) ** 2))
        object.__setattr__(self, "z2", _frozen(np.abs(h2) ** 2))
        object.__setattr__(self, "phase", _frozen(np.angle(h1 * np.conj(h2))))

    def __len__(self):
        return self.h1.size

    def __getitem__(self, i) -> ChannelSample:
        return ChannelSample(complex(self.h1[i]), complex(self.h2[i]), float(self.weights[i]))

    def __iter__(self) -> Iterator[ChannelSample]:
        return (self[i] for i in range(len(self)))

    @property
    def samples(self) -> list[ChannelSample]:
        return list(self)

    def subset(self, idx) -> "FadingEnsemble":
        idx = np.asarray(idx)
        w = self.weights[idx]
        return FadingEnsemble(self.h1[idx], self.h2[idx], w / w.sum(), self.seed, self.spec1, self.spec2)

    def identical_to(self, other: "FadingEnsemble") -> bool:
        return (np.array_equal(self.h1, other.h1) and np.array_equal(self.h2, other.h2)
                and np.array_equal(self.weights, other.weights))


def draw_rician(spec: RicianSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    los, scatter = spec.split()
    phi0 = rng.uniform(0.0, 2.0 * np.pi, n)
    diffuse = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * math.sqrt(scatter / 2.0)
    return los * np.exp(1j * phi0) + diffuse


def sample_ensemble(spec1: RicianSpec, spec2: RicianSpec, n: int, seed: int) -> FadingEnsemble:
    """n independent fading pairs with equal weights, reproducible from seed."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"ensemble size must be a positive integer, got {n}")
    n = int(n)
    rng = np.random.Generator(np.random.PCG64(seed))
    h1 = draw_rician(spec1, n, rng)
    h2 = draw_rician(spec2, n, rng)
    return FadingEnsemble(h1, h2, np.full(n, 1.0 / n), int(seed), spec1, spec2)


def rician_pdf(z, spec: RicianSpec):
    """Density of z = |h|^2 (scaled noncentral chi-square with 2 dof)."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise InvalidArgument("rician_pdf needs z >= 0")
    k, om = spec.k_linear, spec.mean_power
    x = 2.0 * np.sqrt(k * (k + 1.0) * z / om)
    # i0e(x) = exp(-x) I0(x) keeps the exponent bounded
    out = (k + 1.0) / om * np.exp(-k - (k + 1.0) * z / om + x) * i0e(x)
    return out if out.ndim else float(out)


def expect(ensemble: FadingEnsemble, f: Callable[[ChannelSample], float] | np.ndarray) -> float:
    """Weighted mean of a per-sample function (or of precomputed values)."""
    if callable(f):
        vals = np.array([f(s) for s in ensemble], dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != ensemble.weights.shape:
            raise InvalidArgument("value array does not match the ensemble")
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise NumericError(f"non-finite value at sample {int(bad[0])}")
    return float(np.dot(ensemble.weights, vals))


def export_csv(ensemble: FadingEnsemble, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["index", "re_h1", "im_h1", "re_h2", "im_h2", "weight"])
        for i in range(len(ensemble)):
            wr.writerow([i, repr(float(ensemble.h1[i].real)), repr(float(ensemble.h1[i].imag)),
                         repr(float(ensemble.h2[i].real)), repr(float(ensemble.h2[i].imag)),
                         repr(float(ensemble.weights[i]))])
