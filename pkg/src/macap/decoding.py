"""Successive decoding order: boundary curve, ergodic rule and the
alternation between decoding partition and power policy.

Tag 0 (region Z) decodes user 2 first, so user 1 is interference free;
tag 1 decodes user 1 first.

With the power shares held fixed, the two orders give the per-sample
weighted utilities

    V(Z) - V(Zc) = (e - a b) (k1 / b - k2 / a) / c,

where a = exp(-c I1), b = exp(-c I2), e = exp(-c I12) and c is the
common exponent.  Since I12 <= I1 + I2 the first factor is >= 0, and it
vanishes exactly on the equality I12 = I1 + I2 traced by
:func:`solve_boundary`.  The partition itself is chosen inside the power
optimization by comparing the per-sample Lagrangian of both orders with
re-optimized powers.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .channel import FadingEnsemble
from .constellation import InputModel
from .errors import InvalidArgument
from .mmse_mi import DEFAULT_QUAD, IntegrationSpec, ScaledInput, mi_joint, mi_single
from .power_alloc import TAG_Z, TAG_ZC, AllocationResult, Problem, Weights, run_algorithm1

log = logging.getLogger(__name__)
LN2 = math.log(2.0)


class BoundaryMultiplicityWarning(UserWarning):
    pass


class PartitionOscillationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DecodingPartition:
    """Per-sample decoding tags plus an optional boundary curve.

    ``boundary`` rows are (z1, z2*, residual in bits); ``method`` records
    how the tags were obtained.
    """

    tags: np.ndarray
    boundary: Optional[np.ndarray] = None
    method: str = "ergodic"

    def __post_init__(self):
        t = np.ascontiguousarray(self.tags, dtype=np.int64)
        if t.ndim != 1 or np.any((t != TAG_Z) & (t != TAG_ZC)):
            raise InvalidArgument("tags must be a 1-D array of 0 (Z) and 1 (Zc)")
        t.flags.writeable = False
        object.__setattr__(self, "tags", t)

    def __len__(self):
        return self.tags.size

    @property
    def orders(self) -> list[tuple[int, int]]:
        """Decoding order (first, second) per sample."""
        return [(2, 1) if t == TAG_Z else (1, 2) for t in self.tags]

    @property
    def fraction_z(self) -> float:
        return float(np.mean(self.tags == TAG_Z))


# ---------------------------------------------------------------- boundary

@dataclass(frozen=True)
class PolicyContext:
    """Fixed power shares and inputs used to evaluate the boundary."""

    input1: InputModel
    input2: InputModel
    alpha1: float
    alpha2: float
    pbar: float
    n_phase: int = 8
    quad: IntegrationSpec = DEFAULT_QUAD

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0 or self.pbar <= 0:
            raise InvalidArgument("alphas must be >= 0 and pbar > 0")
        if self.n_phase < 1:
            raise InvalidArgument("n_phase must be >= 1")


def boundary_residual(z1: float, z2: float, ctx: PolicyContext) -> float:
    """I(x;y) - I(x1;y1) - I(x2;y2) in bits, averaged over relative phase."""
    if z1 < 0 or z2 < 0:
        raise InvalidArgument("channel gains must be nonnegative")
    u1 = ScaledInput.from_policy(ctx.input1, ctx.alpha1, ctx.pbar, math.sqrt(z1))
    u2 = ScaledInput.from_policy(ctx.input2, ctx.alpha2, ctx.pbar, math.sqrt(z2))
    singles = mi_single(u1, ctx.quad).nats + mi_single(u2, ctx.quad).nats
    phases = 2.0 * np.pi * np.arange(ctx.n_phase) / ctx.n_phase
    joint = 0.0
    for p in phases:
        v1 = ScaledInput.from_policy(ctx.input1, ctx.alpha1, ctx.pbar, math.sqrt(z1) * np.exp(1j * p))
        joint += mi_joint(v1, u2, ctx.quad).nats
    return (joint / ctx.n_phase - singles) / LN2


def solve_boundary(z1: float, ctx: PolicyContext, tol: float = 1e-4, z2_max: float = 10.0,
                   n_scan: int = 96) -> Optional[float]:
    """Smallest z2 from which the equality I12 = I1 + I2 holds within tol.

    The residual is never positive, so the equality is met only at z2 = 0
    (degenerate) and, to any finite tolerance, once both inputs saturate.
    The returned z2* is the upward crossing of residual + tol/2, found by
    scanning [0, z2_max] and refining with Brent's method; it satisfies
    |residual(z2*)| = tol/2.  None means the residual never re-enters the
    band (Gaussian inputs, or no saturation below z2_max).  With several
    upward crossings the largest is returned with a warning.
    """
    if z1 < 0:
        raise InvalidArgument("z1 must be nonnegative")
    if z1 == 0:
        return 0.0
    if z2_max <= 0:
        raise InvalidArgument("z2_max must be positive")
    f = lambda z2: boundary_residual(z1, z2, ctx) + 0.5 * tol
    grid = np.concatenate([[0.0], z2_max * np.geomspace(1e-4, 1.0, n_scan - 1)])
    vals = np.array([f(z) for z in grid])
    up = np.flatnonzero((vals[:-1] < 0) & (vals[1:] >= 0))
    if up.size == 0:
        return None
    if up.size > 1:
        warnings.warn(f"{up.size} boundary crossings at z1={z1:g}; returning the largest",
                      BoundaryMultiplicityWarning, stacklevel=2)
    k = up[-1]
    if vals[k + 1] == 0:
        return float(grid[k + 1])
    return float(brentq(f, grid[k], grid[k + 1], xtol=1e-12 * (1 + grid[k + 1]), rtol=1e-12))


def boundary_curve(z1_values, ctx: PolicyContext, tol: float = 1e-4, z2_max: float = 10.0) -> np.ndarray:
    """Rows (z1, z2*, residual); z2* and residual are NaN where none exists."""
    rows = []
    for z1 in z1_values:
        z2 = solve_boundary(float(z1), ctx, tol, z2_max)
        if z2 is None:
            rows.append((z1, np.nan, np.nan))
        else:
            rows.append((z1, z2, boundary_residual(float(z1), z2, ctx)))
    return np.array(rows, dtype=float).reshape(-1, 3)


def export_boundary(curve: np.ndarray, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["z1", "z2_star", "residual_bits"])
        for z1, z2, r in curve:
            wr.writerow([repr(float(z1)), "" if math.isnan(z2) else repr(float(z2)),
                         "" if math.isnan(r) else repr(float(r))])


def z2_ceiling(ensemble: FadingEnsemble) -> float:
    return float(np.percentile(ensemble.z2, 99.9))


# ---------------------------------------------------------------- partitions

def partition_ergodic(ensemble: FadingEnsemble) -> DecodingPartition:
    """Strongest channel decoded first; ties decode user 1 first."""
    z1, z2 = np.asarray(ensemble.z1), np.asarray(ensemble.z2)
    return DecodingPartition(np.where(z2 > z1, TAG_Z, TAG_ZC), None, "ergodic")


@dataclass
class FixedPointResult:
    partition: DecodingPartition
    allocation: AllocationResult
    rounds: int
    objectives: list = field(default_factory=list)
    moved: list = field(default_factory=list)
    converged: bool = True
    heuristic: bool = False
    warnings: list = field(default_factory=list)

    def __iter__(self):
        a = self.allocation
        return iter((self.partition, a.policy, a.state, a.rates))


def partition_fixed_point(prob: Problem, weights: Weights, max_rounds: int = 10,
                          initial: Optional[DecodingPartition] = None,
                          warm: Optional[AllocationResult] = None) -> FixedPointResult:
    """Alternate power allocation and decoding-order updates.

    A round runs the power optimization with the decoding order left free
    per sample (each inner solve keeps the order whose per-sample
    Lagrangian is larger), seeded with the previous round's tags.  Rounds
    repeat until the tags come back unchanged.  With unequal QoS exponents
    the tags stay at the strongest-first rule and the result is flagged as
    heuristic.
    """
    q = prob.qos
    part = initial if initial is not None else partition_ergodic(prob.ensemble)
    if len(part) != prob.n:
        raise InvalidArgument("initial partition does not match the ensemble")
    free = q.equal
    tags = part.tags
    best = None
    objectives, moved_hist, notes = [], [], []
    converged = False
    res = warm
    for rnd in range(1, max_rounds + 1):
        res = run_algorithm1(prob, tags, weights, warm=res, free_tags=free)
        moved = int(np.count_nonzero(res.tags != tags))
        objectives.append(res.objective)
        if best is None or res.objective > best[1].objective:
            best = (rnd, res)
        moved_hist.append(moved)
        log.debug("round %d: objective %.10g, %d samples moved", rnd, res.objective, moved)
        if moved == 0:
            converged = True
            break
        tags = res.tags
    if not converged:
        msg = f"partition still changing after {max_rounds} rounds; keeping round {best[0]}"
        warnings.warn(msg, PartitionOscillationWarning, stacklevel=2)
        notes.append(msg)
        res = best[1]
    method = "lagrangian" if free else "heuristic"
    if not free:
        notes.insert(0, "unequal QoS exponents: decoding order from the strongest-first heuristic")
    return FixedPointResult(DecodingPartition(res.tags, None, method), res, len(objectives),
                            objectives, moved_hist, converged, not free, notes)
