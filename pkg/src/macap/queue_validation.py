"""Queue simulation that checks the meaning of the QoS exponent.

A buffer receives a*n bits per frame and drains r(t)*n bits, with r(t)
redrawn i.i.d. from a rate table.  If a equals the effective capacity at
theta, the stationary tail Pr(Q >= q) decays like exp(-theta q).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, InvalidArgument


class UnstableQueueWarning(UserWarning):
    pass


@dataclass(frozen=True)
class QueueTrace:
    occupancy: np.ndarray   # bits, after burn-in
    arrival: float          # bits/s/Hz
    frames: int
    n: float
    unstable: bool = False

    def tail(self, thresholds) -> np.ndarray:
        """Empirical Pr(Q >= q) at each threshold."""
        q = np.sort(self.occupancy)
        t = np.asarray(thresholds, dtype=float)
        return 1.0 - np.searchsorted(q, t, side="left") / q.size


@dataclass(frozen=True)
class DecayEstimate:
    theta: float
    stderr: float
    thresholds: np.ndarray
    log_tail: np.ndarray
    n_positive: int


def lindley(increments: np.ndarray, q0: float = 0.0) -> np.ndarray:
    """Q_t = max(Q_{t-1} + x_t, 0) for t = 1.., vectorized via running minima."""
    s = q0 + np.cumsum(np.asarray(increments, dtype=float))
    floor = np.minimum.accumulate(np.minimum(s, 0.0))
    return s - floor


def simulate_queue(rates, weights, arrival: float, frames: int, n: float, seed: int,
                   burn_in: float = 0.1) -> QueueTrace:
    """Lindley recursion with service rates drawn i.i.d. from (rates, weights)."""
    r = np.asarray(rates, dtype=float)
    w = np.full(r.size, 1.0 / r.size) if weights is None else np.asarray(weights, dtype=float)
    if arrival <= 0 or not math.isfinite(arrival):
        raise InvalidArgument("arrival rate must be positive and finite")
    if int(frames) != frames or frames < 10_000:
        raise InvalidArgument("frames must be an integer >= 10^4")
    if not 0 <= burn_in < 1:
        raise InvalidArgument("burn_in must lie in [0, 1)")
    if r.ndim != 1 or w.shape != r.shape or np.any(w < 0):
        raise InvalidArgument("rates and weights must be 1-D arrays of equal length")
    w = w / w.sum()
    mean = float(np.dot(w, r))
    unstable = arrival >= mean
    if unstable:
        warnings.warn(f"arrival {arrival:g} >= mean service {mean:g}: the queue diverges",
                      UnstableQueueWarning, stacklevel=2)
    rng = np.random.Generator(np.random.PCG64(seed))
    draw = rng.choice(r.size, size=int(frames), p=w)
    q = lindley(n * (arrival - r[draw]))
    start = int(burn_in * frames)
    return QueueTrace(q[start:], float(arrival), int(frames), float(n), unstable)


def _slope(thresholds, tail):
    keep = tail > 0
    x, y = thresholds[keep], np.log(tail[keep])
    if x.size < 3:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


def estimate_decay(trace: QueueTrace, lo: float = 50.0, hi: float = 99.0, n_thresholds: int = 40,
                   n_batches: int = 20, min_positive: int = 100) -> DecayEstimate:
    """Least-squares slope of log Pr(Q >= q) over a percentile window.

    The window spans the lo..hi percentiles of the positive occupancy.
    The standard error comes from the spread of the same fit over
    contiguous batches of the trace.
    """
    if trace.unstable:
        raise EstimationError("trace is unstable; no stationary tail")
    q = trace.occupancy
    pos = q[q > 0]
    if pos.size < min_positive:
        raise EstimationError(f"only {pos.size} positive occupancy samples (need {min_positive})")
    a, b = np.percentile(pos, [lo, hi])
    if not b > a:
        raise EstimationError("degenerate occupancy tail")
    thr = np.linspace(a, b, n_thresholds)
    tail = trace.tail(thr)
    theta = -_slope(thr, tail)
    if not math.isfinite(theta):
        raise EstimationError("tail fit failed")
    slopes = []
    for chunk in np.array_split(q, n_batches):
        c = np.sort(chunk)
        s = _slope(thr, 1.0 - np.searchsorted(c, thr, side="left") / c.size)
        if math.isfinite(s):
            slopes.append(-s)
    se = float(np.std(slopes, ddof=1) / math.sqrt(len(slopes))) if len(slopes) > 1 else math.nan
    return DecayEstimate(theta, se, thr, np.log(np.where(tail > 0, tail, np.nan)), int(pos.size))


def export_tail(est: DecayEstimate, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["q_bits", "log_tail"])
        for x, y in zip(est.thresholds, est.log_tail):
            wr.writerow([repr(float(x)), repr(float(y))])
