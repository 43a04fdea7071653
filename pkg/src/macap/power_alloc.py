"""Power allocation for a fixed decoding partition and weight pair.

Three nested loops:

* inner: per fading sample, the two stationarity equations are solved by
  alternating one-dimensional root finds (each residual decreases in its
  own alpha); a negative solution is clamped to zero;
* middle: the multiplier eps is searched (in log scale) until the average
  power E{alpha1 + alpha2} meets the budget;
* outer: psi_j = E{exp(-theta_j n r_j)} is iterated to a fixed point.

The outer iteration is a minorize-maximize scheme: with psi frozen the
weighted utilities are a tangent lower bound of the objective.  Rates are
in bits/s/Hz, with n = T*B symbols per frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import _solver
from .channel import ChannelSample, FadingEnsemble, SystemParams
from .errors import ConvergenceError, InvalidArgument, NumericError
from .surface import KIND_FF, RateModel

log = logging.getLogger(__name__)
LN2 = math.log(2.0)
TAG_Z, TAG_ZC = 0, 1


@dataclass(frozen=True)
class QosSpec:
    theta1: float = 0.01
    theta2: float = 0.01
    n: float = 100.0

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0 or self.n <= 0:
            raise InvalidArgument("theta must be >= 0 and n > 0")

    @classmethod
    def for_params(cls, theta1: float, theta2: float, params: SystemParams) -> "QosSpec":
        return cls(theta1, theta2, params.tb)

    def c(self, j: int) -> float:
        """Exponent per nat: theta_j n / ln 2."""
        return (self.theta1 if j == 1 else self.theta2) * self.n / LN2

    @property
    def equal(self) -> bool:
        return self.theta1 == self.theta2


@dataclass(frozen=True)
class Weights:
    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0 or abs(self.lambda1 + self.lambda2 - 1) > 1e-12:
            raise InvalidArgument(f"weights must be nonnegative and sum to 1, got {self}")

    @classmethod
    def of(cls, lambda1: float) -> "Weights":
        return cls(float(lambda1), 1.0 - float(lambda1))


@dataclass(frozen=True)
class SolverTolerances:
    inner_tol: float = 1e-12
    inner_cap: int = 200
    residual_tol: float = 1e-10
    budget_tol: float = 1e-4
    middle_cap: int = 100
    psi_tol: float = 1e-9
    outer_cap: int = 50
    psi_update: str = "secant"
    psi_damping: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.psi_damping < 1.0:
            raise InvalidArgument("psi_damping must lie in [0, 1)")
        if self.psi_update not in ("secant", "damped"):
            raise InvalidArgument(f"psi_update must be 'secant' or 'damped', got {self.psi_update!r}")
        if min(self.inner_cap, self.middle_cap, self.outer_cap) < 1:
            raise InvalidArgument("iteration caps must be >= 1")


@dataclass(frozen=True)
class PowerPolicy:
    alpha1: np.ndarray
    alpha2: np.ndarray

    def budget(self, ensemble: FadingEnsemble) -> float:
        return float(np.dot(ensemble.weights, self.alpha1 + self.alpha2))


@dataclass(frozen=True)
class LagrangeState:
    epsilon: float
    psi1: float
    psi2: float


@dataclass(frozen=True)
class RateTable:
    """Per-sample service rates in bits/s/Hz."""

    r1: np.ndarray
    r2: np.ndarray


@dataclass
class AllocationResult:
    policy: PowerPolicy
    state: LagrangeState
    rates: RateTable
    tags: np.ndarray
    c1: float
    c2: float
    objective: float
    outer_iterations: int
    history: list = field(default_factory=list)
    slack_budget: bool = False

    def __iter__(self):
        return iter((self.policy, self.state, self.rates))


@dataclass
class Problem:
    """Everything fixed during one optimization: samples, inputs, system."""

    ensemble: FadingEnsemble
    model: RateModel
    params: SystemParams
    qos: QosSpec
    tols: SolverTolerances = field(default_factory=SolverTolerances)

    def __post_init__(self):
        e = self.ensemble
        self.z1 = np.ascontiguousarray(e.z1, dtype=float)
        self.z2 = np.ascontiguousarray(e.z2, dtype=float)
        self.phi = np.ascontiguousarray(e.phase, dtype=float)
        self.w = e.weights
        self.s_cap = self.model.grid.s_max if self.model.kind == KIND_FF else 1e9

    @property
    def n(self) -> int:
        return self.z1.size


def effective_capacity_bits(r_bits: np.ndarray, w: np.ndarray, theta: float, n: float) -> float:
    """-(1/(theta n)) log E exp(-theta n r), or E r at theta = 0."""
    if theta <= 0:
        return float(np.dot(w, r_bits))
    r = np.asarray(r_bits)
    lse = logsumexp(-theta * n * r, b=w)
    # C lies in [min r, E r]; clip rounding from weights not summing to 1
    return float(min(max(-lse / (theta * n), r.min()), np.dot(w, r)))


def _tags_of(partition, n: int) -> np.ndarray:
    tags = np.ascontiguousarray(getattr(partition, "tags", partition), dtype=np.int64)
    if tags.shape != (n,) or np.any((tags != TAG_Z) & (tags != TAG_ZC)):
        raise InvalidArgument("partition must tag every sample with 0 (Z) or 1 (Zc)")
    return tags


def _kappas(weights: Weights, psi1: float, psi2: float):
    return weights.lambda1 / psi1, weights.lambda2 / psi2


# ---------------------------------------------------------------- single sample

def _sample_arrays(sample: ChannelSample):
    return sample.z1, sample.z2, sample.phase


def _kkt(tag, sample, alpha1, alpha2, state, weights, qos, params, model):
    z1, z2, phi = _sample_arrays(sample)
    k1, k2 = _kappas(weights, state.psi1, state.psi2)
    res = _solver.residuals(model.args, tag, params.pbar, z1, z2, phi, float(alpha1), float(alpha2),
                            k1, k2, qos.c(1), qos.c(2), state.epsilon)
    if not all(math.isfinite(r) for r in res):
        raise NumericError(f"non-finite KKT residual at sample {sample}")
    return res


def kkt_residual_Z(sample, alpha1, alpha2, state, weights, qos, params, model):
    """Stationarity residuals when user 2 is decoded first (user 1 clean)."""
    return _kkt(TAG_Z, sample, alpha1, alpha2, state, weights, qos, params, model)


def kkt_residual_Zc(sample, alpha1, alpha2, state, weights, qos, params, model):
    """Stationarity residuals when user 1 is decoded first (user 2 clean)."""
    return _kkt(TAG_ZC, sample, alpha1, alpha2, state, weights, qos, params, model)


def solve_alpha_pair(sample, tag, state, weights, qos, params, model,
                     tols: SolverTolerances = SolverTolerances(), start=(0.0, 0.0)):
    """Optimal (alpha1, alpha2) of one sample at fixed eps and psi."""
    z1, z2, phi = _sample_arrays(sample)
    k1, k2 = _kappas(weights, state.psi1, state.psi2)
    s_cap = model.grid.s_max if model.kind == KIND_FF else 1e9
    a1, a2, it, st = _solver.solve_pair(model.args, int(tag), params.pbar, z1, z2, phi, k1, k2,
                                        qos.c(1), qos.c(2), state.epsilon, float(start[0]),
                                        float(start[1]), tols.inner_tol, tols.inner_cap,
                                        tols.residual_tol, s_cap)
    if st != _solver.ST_OK:
        res = _kkt(tag, sample, a1, a2, state, weights, qos, params, model)
        raise ConvergenceError(f"inner loop hit its cap ({tols.inner_cap}); residuals {res}",
                               loop="inner", history=[res])
    return a1, a2


# ---------------------------------------------------------------- bulk pieces

class _Workspace:
    def __init__(self, prob: Problem, tags, a1=None, a2=None):
        n = prob.n
        self.prob = prob
        self.tags = np.array(tags, dtype=np.int64)
        self.a1 = np.zeros(n) if a1 is None else np.array(a1, dtype=float)
        self.a2 = np.zeros(n) if a2 is None else np.array(a2, dtype=float)
        self.iters = np.zeros(n, dtype=np.int64)
        self.status = np.zeros(n, dtype=np.int64)
        self.evals = 0
        self.free = False
        self.tie_rtol = 1e-9

    def solve(self, k1, k2, eps) -> int:
        p = self.prob
        t = p.tols
        self.evals += 1
        if self.free:
            return _solver.solve_all_free(p.model.args, p.params.pbar, p.z1, p.z2, p.phi, self.tags,
                                          k1, k2, p.qos.c(1), p.qos.c(2), eps, self.a1, self.a2,
                                          t.inner_tol, t.inner_cap, t.residual_tol, p.s_cap,
                                          self.tie_rtol, self.iters, self.status)
        return _solver.solve_all(p.model.args, p.params.pbar, p.z1, p.z2, p.phi, self.tags, k1, k2,
                                 p.qos.c(1), p.qos.c(2), eps, self.a1, self.a2, t.inner_tol,
                                 t.inner_cap, t.residual_tol, p.s_cap, self.iters, self.status)

    def budget(self) -> float:
        return float(np.dot(self.prob.w, self.a1 + self.a2))

    def rates_nats(self):
        p = self.prob
        r1 = np.empty(p.n)
        r2 = np.empty(p.n)
        _solver.rates_all(p.model.args, p.params.pbar, p.z1, p.z2, p.phi, self.tags,
                          self.a1, self.a2, r1, r2)
        return r1, r2


def rates_for_policy(prob: Problem, tags, alpha1, alpha2) -> RateTable:
    ws = _Workspace(prob, _tags_of(tags, prob.n), alpha1, alpha2)
    r1, r2 = ws.rates_nats()
    return RateTable(r1 / LN2, r2 / LN2)


def objective_of(prob: Problem, weights: Weights, rates: RateTable):
    q = prob.qos
    c1 = effective_capacity_bits(rates.r1, prob.w, q.theta1, q.n)
    c2 = effective_capacity_bits(rates.r2, prob.w, q.theta2, q.n)
    return c1, c2, weights.lambda1 * c1 + weights.lambda2 * c2


def _psi(prob: Problem, r1n, r2n):
    q = prob.qos
    out = []
    for c, r in ((q.c(1), r1n), (q.c(2), r2n)):
        out.append(1.0 if c == 0 else float(np.exp(logsumexp(-c * r, b=prob.w))))
    return out


def _search_eps(ws: _Workspace, k1, k2, eps_guess, history):
    """Find eps with |E{alpha1+alpha2} - 1| <= budget_tol.

    Returns (eps, slack) where slack means the budget is not binding.
    """
    p = ws.prob
    t = p.tols
    top = _solver.max_marginal(p.model.args, p.params.pbar, p.z1, p.z2, p.phi, ws.tags,
                               k1, k2, p.qos.c(1), p.qos.c(2))
    if not top > 0:
        ws.a1[:] = 0
        ws.a2[:] = 0
        return 0.0, True
    x_top = math.log(top) + 1e-9
    x_floor = x_top - math.log(1e14)

    def f(x):
        ws.solve(k1, k2, math.exp(x))
        return ws.budget() - 1.0

    x = min(math.log(eps_guess), x_top - 1e-3) if eps_guess and eps_guess > 0 else x_top - math.log(10.0)
    fx = f(x)
    evals = 1
    if abs(fx) <= t.budget_tol:
        return math.exp(x), False
    step = math.log(4.0)
    if fx > 0:
        lo, flo = x, fx
        hi, fhi = None, None
        while hi is None:
            x = min(x + step, x_top)
            fx = -1.0 if x >= x_top else f(x)
            evals += 1
            if abs(fx) <= t.budget_tol:
                return math.exp(x), False
            if fx < 0:
                hi, fhi = x, fx
            else:
                lo, flo = x, fx
            step *= 2
    else:
        hi, fhi = x, fx
        lo = None
        while lo is None:
            x = x - step
            if x < x_floor:
                # the budget is not binding: eps -> 0+
                f(x_floor)
                return math.exp(x_floor), True
            fx = f(x)
            evals += 1
            if abs(fx) <= t.budget_tol:
                return math.exp(x), False
            if fx > 0:
                lo, flo = x, fx
            else:
                hi, fhi = x, fx
            step *= 2
    side = 0
    for _ in range(t.middle_cap):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        fx = f(x)
        evals += 1
        if abs(fx) <= t.budget_tol:
            return math.exp(x), False
        if fx > 0:
            lo, flo = x, fx
            if side == 1:
                fhi *= 0.5
            side = 1
        else:
            hi, fhi = x, fx
            if side == -1:
                flo *= 0.5
            side = -1
        if hi - lo < 1e-13:
            # the budget map jumps across 1 here; keep the feasible side
            f(hi)
            history.append(("middle-jump", evals, float(fhi)))
            return math.exp(hi), False
    raise ConvergenceError(f"eps search hit its cap ({t.middle_cap}); budget residual {fx:.3g}",
                           loop="middle", history=[("middle", evals, fx)])


def run_algorithm1(prob: Problem, partition, weights: Weights, warm: Optional[AllocationResult] = None,
                   check: bool = True, free_tags: bool = False) -> AllocationResult:
    """Optimal power policy for a fixed decoding partition and weights.

    The psi update is either the damped fixed point
    psi <- d psi + (1 - d) psi*, or (default) a secant iteration on
    x = log(psi2/psi1): the allocation depends on psi only through the
    ratio kappa1/kappa2, so the outer problem is one-dimensional.  With the
    secant update the returned state carries psi* recomputed from the final
    rates, and eps is rescaled to the same normalization.
    """
    tags = _tags_of(partition, prob.n)
    t = prob.tols
    q = prob.qos
    lam1, lam2 = weights.lambda1, weights.lambda2
    if warm is not None:
        ws = _Workspace(prob, tags, warm.policy.alpha1, warm.policy.alpha2)
        psi1, psi2 = warm.state.psi1, warm.state.psi2
        eps = warm.state.epsilon
    else:
        ws = _Workspace(prob, tags)
        psi1 = psi2 = 1.0
        eps = None
    ws.free = free_tags
    k_prev = _kappas(weights, psi1, psi2) if eps is not None else None
    one_dim = lam1 == 0 or lam2 == 0 or (q.theta1 == 0 and q.theta2 == 0)
    secant = t.psi_update == "secant"
    history = []
    converged = False
    slack = False
    xs, gs = [], []
    for it in range(1, t.outer_cap + 1):
        k1, k2 = _kappas(weights, psi1, psi2)
        if eps is not None and k_prev is not None and max(k_prev) > 0:
            eps *= max(k1, k2) / max(k_prev)
        k_prev = (k1, k2)
        eps, slack = _search_eps(ws, k1, k2, eps, history)
        r1n, r2n = ws.rates_nats()
        p1, p2 = _psi(prob, r1n, r2n)
        delta = max(abs(p1 / psi1 - 1.0), abs(p2 / psi2 - 1.0))
        history.append(("outer", it, delta, eps, ws.budget(), ws.evals))
        log.debug("outer %d: psi=(%.9g, %.9g) delta=%.3g eps=%.6g", it, p1, p2, delta, eps)
        if one_dim:
            psi1, psi2 = p1, p2
            converged = True
            break
        x = math.log(psi2 / psi1)
        g = math.log(p2 / p1) - x
        if abs(g) <= t.psi_tol or (not secant and delta <= t.psi_tol):
            if secant:
                # report psi* and eps in the matching normalization
                scale = (lam1 / p1) / k1 if lam1 > 0 else (lam2 / p2) / k2
                eps *= scale
                psi1, psi2 = p1, p2
            converged = True
            break
        if secant:
            xs.append(x)
            gs.append(g)
            x_new = x + g
            if len(xs) >= 2 and gs[-1] != gs[-2]:
                cand = x - g * (xs[-1] - xs[-2]) / (gs[-1] - gs[-2])
                # slow contraction (rate near 1) needs steps well beyond g;
                # cap them so noise in g cannot throw the iterate far
                if math.isfinite(cand) and (cand - x) * g > 0:
                    x_new = x + math.copysign(min(abs(cand - x), 20.0 * abs(g)), g)
                elif math.isfinite(cand) and abs(cand - x) <= 4.0 * abs(g):
                    x_new = cand
            psi1 = p1
            psi2 = p1 * math.exp(x_new)
        else:
            d = t.psi_damping
            psi1 = d * psi1 + (1 - d) * p1
            psi2 = d * psi2 + (1 - d) * p2
    if not converged:
        raise ConvergenceError(f"psi iteration hit its cap ({t.outer_cap}); last change {delta:.3g}",
                               loop="outer", history=history)
    if check and np.any(ws.status != _solver.ST_OK):
        bad = int(np.flatnonzero(ws.status != _solver.ST_OK)[0])
        raise ConvergenceError(f"inner loop failed at sample {bad}", loop="inner", history=history)
    rates = RateTable(r1n / LN2, r2n / LN2)
    c1, c2, obj = objective_of(prob, weights, rates)
    return AllocationResult(PowerPolicy(ws.a1.copy(), ws.a2.copy()), LagrangeState(eps, psi1, psi2),
                            rates, ws.tags.copy(), c1, c2, obj, it, history, slack)


def kkt_report(prob: Problem, res: AllocationResult, weights: Weights):
    """Per-sample residuals of both equations at the returned solution.

    Returns (res1, res2) arrays; entries where alpha_j = 0 hold the
    residual at zero, which must be <= 0 (complementary slackness).
    """
    st = res.state
    k1, k2 = _kappas(weights, st.psi1, st.psi2)
    q = prob.qos
    out = np.empty((2, prob.n))
    for i in range(prob.n):
        out[:, i] = _solver.residuals(prob.model.args, int(res.tags[i]), prob.params.pbar,
                                      prob.z1[i], prob.z2[i], prob.phi[i], res.policy.alpha1[i],
                                      res.policy.alpha2[i], k1, k2, q.c(1), q.c(2), st.epsilon)
    return out[0], out[1]


def uniform_policy(prob: Problem, share1: float = 0.5) -> PowerPolicy:
    n = prob.n
    return PowerPolicy(np.full(n, share1), np.full(n, 1.0 - share1))


def with_tols(prob: Problem, **kw) -> Problem:
    return Problem(prob.ensemble, prob.model, prob.params, prob.qos, replace(prob.tols, **kw))
