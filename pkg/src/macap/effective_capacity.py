"""Effective capacity of a rate process and the two-user region trace.

For i.i.d. per-frame rates r (bits/s/Hz) and n = T B symbols per frame,

    C(theta) = -1/(theta n) log E exp(-theta n r),

which decreases from E r (theta -> 0) toward ess inf r.  The region
boundary is traced by maximizing lambda1 C1 + (1 - lambda1) C2 over a
grid of lambda1.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .channel import FadingEnsemble, SystemParams
from .constellation import InputModel
from .errors import ConvergenceError, InvalidArgument, NumericError
from .power_alloc import (TAG_Z, TAG_ZC, AllocationResult, Problem, QosSpec, SolverTolerances,
                          Weights, run_algorithm1)
from .surface import RateModel, SurfaceGrid

log = logging.getLogger(__name__)


def _weights_for(rates, weights):
    r = np.asarray(rates, dtype=float)
    w = np.ones(r.shape) if weights is None else np.asarray(weights, dtype=float)
    if r.ndim != 1 or w.shape != r.shape or r.size == 0:
        raise InvalidArgument("rates and weights must be nonempty 1-D arrays of equal length")
    if not np.all(np.isfinite(r)):
        raise NumericError(f"non-finite rate at sample {int(np.flatnonzero(~np.isfinite(r))[0])}")
    return r, w / w.sum()


def ergodic_limit(rates, weights=None) -> float:
    """Weighted mean rate."""
    r, w = _weights_for(rates, weights)
    return float(np.dot(w, r))


def effective_capacity(rates, weights=None, theta: float = 0.01, n: float = 100.0) -> float:
    """-(1/(theta n)) log E exp(-theta n r) in the units of ``rates``.

    theta <= 0 returns the ergodic mean.  The log-sum-exp keeps large
    theta n r finite.
    """
    if n <= 0:
        raise InvalidArgument("n must be positive")
    r, w = _weights_for(rates, weights)
    if theta <= 0:
        return ergodic_limit(r, w)
    if not np.any(r):
        return 0.0
    tn = theta * n
    val = -logsumexp(-tn * r, b=w) / tn
    # clip rounding below min(r) or above the mean
    return float(min(max(val, r.min()), np.dot(w, r)))


# ---------------------------------------------------------------- region

@dataclass(frozen=True)
class CapacityPoint:
    lambda1: float
    c1: float
    c2: float
    converged: bool = True
    rounds: int = 0
    seconds: float = 0.0
    note: str = ""

    @property
    def lambda2(self) -> float:
        return 1.0 - self.lambda1

    @property
    def objective(self) -> float:
        return self.lambda1 * self.c1 + self.lambda2 * self.c2


@dataclass
class RegionTrace:
    points: list
    fingerprint: str = ""
    labels: tuple = ("", "")

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.lambda1)

    def __len__(self):
        return len(self.points)

    def arrays(self):
        """(lambda1, c1, c2, objective) arrays, NaN at failed points."""
        lam = np.array([p.lambda1 for p in self.points])
        c1 = np.array([p.c1 if p.converged else np.nan for p in self.points])
        c2 = np.array([p.c2 if p.converged else np.nan for p in self.points])
        return lam, c1, c2, lam * c1 + (1 - lam) * c2

    @property
    def failed(self) -> list:
        return [p for p in self.points if not p.converged]

    def objective_at(self, lambda1: float) -> float:
        for p in self.points:
            if abs(p.lambda1 - lambda1) < 1e-12:
                return p.objective
        raise KeyError(lambda1)

    def to_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(header)
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["lambda1", "c1", "c2", "objective", "converged"])
            for p in self.points:
                wr.writerow([repr(p.lambda1), repr(float(p.c1)), repr(float(p.c2)),
                             repr(float(p.objective)), int(p.converged)])


def support_violations(trace: RegionTrace, rtol: float = 1e-6) -> list:
    """Points whose own weight is beaten by another traced point.

    Every traced point should maximize its own weighted sum among all
    traced points; a violation means a solver returned a non-optimal
    point there.  Returns (lambda1, shortfall) pairs.
    """
    pts = [p for p in trace.points if p.converged]
    out = []
    for p in pts:
        best = max(p.lambda1 * q.c1 + p.lambda2 * q.c2 for q in pts)
        short = best - p.objective
        if short > rtol * max(best, 1e-12):
            out.append((p.lambda1, short))
    return out


def interior_points(trace: RegionTrace, rtol: float = 1e-6) -> list:
    """Points strictly below the upper-right convex frontier of the others."""
    pts = [p for p in trace.points if p.converged]
    out = []
    angles = np.linspace(0.0, 1.0, 201)
    for i, p in enumerate(pts):
        others = [q for j, q in enumerate(pts) if j != i]
        if not others:
            continue
        inside = True
        for lam in angles:
            v = lam * p.c1 + (1 - lam) * p.c2
            if v >= max(lam * q.c1 + (1 - lam) * q.c2 for q in others) * (1 - rtol):
                inside = False
                break
        if inside:
            out.append(p.lambda1)
    return out


def _endpoint(prob: Problem, lambda1: float) -> AllocationResult:
    # with one weight zero the silent user takes no power; decoding it
    # first (lambda1 = 1) or last (lambda1 = 0) leaves the active user clean
    tag = TAG_Z if lambda1 == 1.0 else TAG_ZC
    return run_algorithm1(prob, np.full(prob.n, tag), Weights.of(lambda1))


def solve_point(prob: Problem, lambda1: float, max_rounds: int = 10, initial=None, warm=None):
    """Optimal allocation at one weight: (result, rounds, converged, notes, partition)."""
    from .decoding import partition_fixed_point

    if lambda1 in (0.0, 1.0):
        return _endpoint(prob, lambda1), 1, True, [], None
    fp = partition_fixed_point(prob, Weights.of(lambda1), max_rounds, initial=initial, warm=warm)
    return fp.allocation, fp.rounds, fp.converged, fp.warnings, fp.partition


def trace_region(ensemble: FadingEnsemble, qos: QosSpec, params: SystemParams,
                 inputs: tuple[InputModel, InputModel], n_lambda: int = 21,
                 tols: Optional[SolverTolerances] = None, grid: Optional[SurfaceGrid] = None,
                 max_rounds: int = 10, fingerprint: str = "", model: Optional[RateModel] = None,
                 progress=None) -> RegionTrace:
    """Sweep lambda1 over a uniform grid on [0, 1].

    Endpoints are single-user problems; interior points run the
    partition/power alternation, warm-started from the previous point.
    A point whose solver fails is kept and marked unconverged.
    """
    if int(n_lambda) != n_lambda or n_lambda < 2:
        raise InvalidArgument("n_lambda must be an integer >= 2")
    model = model or RateModel(inputs[0], inputs[1], grid)
    prob = Problem(ensemble, model, params, qos, tols or SolverTolerances())
    lams = np.linspace(0.0, 1.0, int(n_lambda))
    points = []
    prev = None
    init = None
    for lam in lams:
        lam = float(lam)
        t0 = time.perf_counter()
        try:
            res, rounds, ok, notes, part = solve_point(prob, lam, max_rounds, init, prev)
            if part is not None:
                prev, init = res, part
            point = CapacityPoint(lam, res.c1, res.c2, ok, rounds, time.perf_counter() - t0,
                                  "; ".join(notes))
        except (ConvergenceError, NumericError) as exc:
            log.warning("lambda1=%g failed: %s", lam, exc)
            point = CapacityPoint(lam, math.nan, math.nan, False, 0, time.perf_counter() - t0,
                                  f"{exc.category}: {exc}")
            prev = init = None
        points.append(point)
        if progress is not None:
            progress(point)
    return RegionTrace(points, fingerprint, (getattr(inputs[0], "label", ""),
                                             getattr(inputs[1], "label", "")))
