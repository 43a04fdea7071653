"""Input signal models: finite constellations and the analytic Gaussian input.

All constellations are normalized to unit average energy, so the transmit
power of user j is carried entirely by ``alpha_j * pbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import InvalidArgument

NORM_TOL = 1e-12


@dataclass(frozen=True)
class ConstellationPoint:
    value: complex
    prior: float

    def __post_init__(self):
        if not self.prior >= 0.0:
            raise InvalidArgument(f"prior must be >= 0, got {self.prior}")


@dataclass(frozen=True)
class Violation:
    invariant: str
    residual: float

    def __str__(self):
        return f"{self.invariant} (residual {self.residual:.3g})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)


@dataclass(frozen=True)
class Constellation:
    """Ordered finite alphabet with priors.

    Construction only checks that priors are nonnegative; the normalization
    invariants are checked by :func:`validate` so that malformed alphabets
    can still be reported on.
    """

    points: tuple[ConstellationPoint, ...]
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @classmethod
    def from_arrays(cls, values, priors=None, label="custom") -> "Constellation":
        values = np.asarray(values, dtype=complex).ravel()
        if priors is None:
            priors = np.full(values.size, 1.0 / max(values.size, 1))
        priors = np.asarray(priors, dtype=float).ravel()
        if priors.size != values.size:
            raise InvalidArgument("values and priors differ in length")
        return cls(tuple(ConstellationPoint(complex(v), float(p))
                         for v, p in zip(values, priors)), label)

    @cached_property
    def values(self) -> np.ndarray:
        v = np.array([p.value for p in self.points], dtype=complex)
        v.flags.writeable = False
        return v

    @cached_property
    def priors(self) -> np.ndarray:
        p = np.array([p.prior for p in self.points], dtype=float)
        p.flags.writeable = False
        return p

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def energy(self) -> float:
        return float(np.sum(self.priors * np.abs(self.values) ** 2))

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.priors * self.values))

    def triples(self) -> list[tuple[float, float, float]]:
        """(re, im, prior) rows, the scenario-file serialization."""
        return [(p.value.real, p.value.imag, p.prior) for p in self.points]

    def __repr__(self):
        return f"Constellation({self.label!r}, M={self.size})"


@dataclass(frozen=True)
class GaussianInput:
    """Unit-variance circularly symmetric complex Gaussian input."""

    label: str = field(default="gaussian")


GAUSSIAN = GaussianInput()

InputModel = Union[Constellation, GaussianInput]


def is_gaussian(model: InputModel) -> bool:
    return isinstance(model, GaussianInput)


def validate(c: Constellation) -> ValidationReport:
    violations = []
    if c.size < 2:
        violations.append(Violation("at least 2 points", float(2 - c.size)))
    if c.size:
        total = float(np.sum(c.priors))
        if abs(total - 1.0) > NORM_TOL:
            violations.append(Violation(f"priors sum to 1 (sum is {total:.6g})", total - 1.0))
        energy = c.energy
        if abs(energy - 1.0) > NORM_TOL:
            violations.append(Violation(f"unit average energy (energy is {energy:.6g})", energy - 1.0))
    return ValidationReport(tuple(violations))


def require_valid(c: InputModel) -> InputModel:
    if isinstance(c, Constellation):
        report = validate(c)
        if not report.ok:
            raise InvalidArgument(f"constellation {c.label!r} violates: {report}")
    return c


def normalized(values, priors=None, label="custom") -> Constellation:
    """Rescale an arbitrary alphabet to unit average energy."""
    values = np.asarray(values, dtype=complex).ravel()
    if priors is None:
        priors = np.full(values.size, 1.0 / values.size)
    priors = np.asarray(priors, dtype=float)
    priors = priors / priors.sum()
    scale = math.sqrt(float(np.sum(priors * np.abs(values) ** 2)))
    if scale == 0.0:
        raise InvalidArgument("all-zero constellation cannot be normalized")
    return Constellation.from_arrays(values / scale, priors, label)


def make_psk(order: int) -> Constellation:
    if int(order) != order or order < 2:
        raise InvalidArgument(f"PSK order must be an integer >= 2, got {order}")
    order = int(order)
    k = np.arange(order)
    values = np.exp(2j * np.pi * k / order)
    # snap the axis points so BPSK is exactly {+1, -1}
    values = np.round(values.real, 15) + 1j * np.round(values.imag, 15)
    label = "bpsk" if order == 2 else f"{order}psk"
    return normalized(values, label=label)


def make_qam(order: int) -> Constellation:
    side = math.isqrt(int(order)) if order >= 0 else 0
    if int(order) != order or order < 4 or side * side != order:
        raise InvalidArgument(f"QAM order must be a perfect square >= 4, got {order}")
    levels = np.arange(-(side - 1), side, 2, dtype=float)
    re, im = np.meshgrid(levels, levels, indexing="ij")
    return normalized((re + 1j * im).ravel(), label=f"{int(order)}qam")


PRESETS = {
    "bpsk": lambda: make_psk(2),
    "qpsk": lambda: make_psk(4),
    "8psk": lambda: make_psk(8),
    "4qam": lambda: make_qam(4),
    "16qam": lambda: make_qam(16),
    "64qam": lambda: make_qam(64),
    "gaussian": lambda: GAUSSIAN,
}


def preset(name: str) -> InputModel:
    key = name.strip().lower().replace("-", "")
    if key not in PRESETS:
        raise InvalidArgument(f"unknown input preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[key]()


# symmetry helpers used to shrink the phase domain of joint tables

def _same_multiset(a_vals, a_pri, b_vals, b_pri, tol=1e-9) -> bool:
    used = np.zeros(b_vals.size, dtype=bool)
    for v, p in zip(a_vals, a_pri):
        hit = np.flatnonzero(~used & (np.abs(b_vals - v) < tol) & (np.abs(b_pri - p) < tol))
        if hit.size == 0:
            return False
        used[hit[0]] = True
    return True


def rotation_order(c: Constellation) -> int:
    """Largest k such that rotating by 2*pi/k maps the alphabet onto itself."""
    best = 1
    for k in range(2, c.size + 1):
        rotated = c.values * np.exp(2j * np.pi / k)
        if _same_multiset(rotated, c.priors, c.values, c.priors):
            best = k
    return best


def is_conjugate_symmetric(c: Constellation) -> bool:
    return _same_multiset(np.conj(c.values), c.priors, c.values, c.priors)
