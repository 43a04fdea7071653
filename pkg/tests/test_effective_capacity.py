import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from macap.channel import FadingEnsemble, RicianSpec, SystemParams, rician_pdf, sample_ensemble
from macap.constellation import GAUSSIAN, make_psk
from macap.effective_capacity import (CapacityPoint, RegionTrace, effective_capacity, ergodic_limit,
                                      interior_points, support_violations, trace_region)
from macap.errors import InvalidArgument, NumericError
from macap.power_alloc import QosSpec, SolverTolerances
from oracles import effective_capacity_mp

BPSK = make_psk(2)
P0 = SystemParams.from_db(0.0)
rates_st = st.lists(st.floats(0.0, 3.0), min_size=1, max_size=30)


# ---------------------------------------------------------------- scalar

@pytest.mark.parametrize("theta", [1e-6, 0.01, 1.0, 50.0])
def test_constant_rate(theta):
    assert effective_capacity(np.full(10, 0.7), theta=theta) == pytest.approx(0.7, rel=1e-12)


def test_two_point_example():
    val = effective_capacity([0.0, 2.0], theta=1.0, n=1.0)
    assert val == pytest.approx(-math.log((1 + math.exp(-2)) / 2), abs=1e-14)
    assert val == pytest.approx(0.566, abs=5e-4)
    assert val == pytest.approx(effective_capacity_mp([0, 2], [0.5, 0.5], 1.0, 1.0), abs=1e-14)


def test_large_exponent_stays_finite():
    r = np.array([0.0, 0.5, 3.0])
    w = np.array([1e-3, 0.5, 0.499])
    for theta in (10.0, 1e3):
        val = effective_capacity(r, w, theta, 100.0)
        assert math.isfinite(val)
        assert val == pytest.approx(effective_capacity_mp(r, w / w.sum(), theta, 100.0), abs=1e-12)


def test_small_theta_limits():
    rng = np.random.default_rng(0)
    r = rng.uniform(0, 2, 500)
    assert abs(effective_capacity(r, theta=1e-6) - r.mean()) < 1e-3
    assert abs(effective_capacity(r, theta=1e-8) - ergodic_limit(r)) < 1e-6
    assert effective_capacity(r, theta=0.0) == pytest.approx(ergodic_limit(r), rel=1e-15)


def test_zero_rates_and_errors():
    assert effective_capacity(np.zeros(5), theta=0.1) == 0.0
    with pytest.raises(NumericError, match="sample 2"):
        effective_capacity([0.1, 0.2, np.nan])
    with pytest.raises(InvalidArgument):
        effective_capacity([], theta=0.1)
    with pytest.raises(InvalidArgument):
        effective_capacity([1.0], theta=0.1, n=0.0)


@given(rates_st, st.floats(1e-4, 10.0))
def test_jensen_bounds(rates, theta):
    r = np.array(rates)
    c = effective_capacity(r, theta=theta, n=10.0)
    assert r.min() - 1e-12 <= c <= r.mean() + 1e-12
    assert c >= 0


@given(rates_st, st.lists(st.floats(1e-4, 5.0), min_size=2, max_size=8))
def test_nonincreasing_in_theta(rates, thetas):
    r = np.array(rates)
    vals = [effective_capacity(r, theta=t, n=10.0) for t in sorted(thetas)]
    assert all(b <= a + 1e-12 * (1 + abs(a)) for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("k_db", [-6.88, 8.61])
def test_gaussian_single_user_against_quadrature(k_db):
    spec = RicianSpec(k_db)
    n = 400_000
    ens = sample_ensemble(spec, spec, n, 21)
    r = np.log2(1 + P0.pbar * ens.z1)
    pdf = lambda z: rician_pdf(z, spec)
    erg, _ = integrate.quad(lambda z: math.log2(1 + P0.pbar * z) * pdf(z), 0, np.inf, limit=200)
    se = r.std() / math.sqrt(n)
    assert abs(ergodic_limit(r) - erg) < 4 * se
    th, tn = 0.01, P0.tb
    mgf, _ = integrate.quad(lambda z: (1 + P0.pbar * z) ** (-th * tn / math.log(2)) * pdf(z),
                            0, np.inf, limit=200)
    ec = -math.log(mgf) / (th * tn)
    x = np.exp(-th * tn * r)
    se_ec = x.std() / math.sqrt(n) / (x.mean() * th * tn)
    assert abs(effective_capacity(r, theta=th, n=tn) - ec) < 4 * se_ec
    assert ec < erg


# ---------------------------------------------------------------- region

def test_capacity_point_fields():
    p = CapacityPoint(0.3, 1.0, 2.0)
    assert p.lambda2 == pytest.approx(0.7)
    assert p.objective == pytest.approx(0.3 + 1.4, abs=1e-12)


def test_trace_sorted_and_csv(tmp_path):
    tr = RegionTrace([CapacityPoint(1.0, 1.0, 0.0), CapacityPoint(0.0, 0.0, 1.0),
                      CapacityPoint(0.5, math.nan, math.nan, converged=False)])
    lam, c1, c2, obj = tr.arrays()
    assert list(lam) == [0.0, 0.5, 1.0] and math.isnan(c1[1])
    assert len(tr.failed) == 1
    p = tmp_path / "r.csv"
    tr.to_csv(p, "# fingerprint: abc\n")
    lines = p.read_text().splitlines()
    assert lines[1] == "lambda1,c1,c2,objective,converged"
    assert lines[3].endswith(",0")


def test_frontier_checks():
    good = RegionTrace([CapacityPoint(0.0, 0.0, 1.0), CapacityPoint(0.5, 0.8, 0.8),
                        CapacityPoint(1.0, 1.0, 0.0)])
    assert support_violations(good) == [] and interior_points(good) == []
    bad = RegionTrace(good.points + [CapacityPoint(0.25, 0.3, 0.3)])
    assert interior_points(bad) == [0.25]
    assert support_violations(bad)


@pytest.fixture(scope="module")
def mirrored():
    # exchange-symmetric ensemble: every pair also appears swapped
    e = sample_ensemble(RicianSpec(-6.88), RicianSpec(-6.88), 100, 4)
    h1 = np.concatenate([e.h1, e.h2])
    h2 = np.concatenate([e.h2, e.h1])
    return FadingEnsemble(h1, h2, np.full(200, 1 / 200), 4, e.spec1, e.spec2)


@pytest.fixture(scope="module")
def sym_trace(mirrored):
    q = QosSpec.for_params(0.01, 0.01, P0)
    return trace_region(mirrored, q, P0, (BPSK, BPSK), 5)


def test_endpoints_are_single_user(sym_trace, mirrored, bpsk_model):
    from macap.power_alloc import Problem, TAG_Z, Weights, run_algorithm1
    first, last = sym_trace.points[0], sym_trace.points[-1]
    assert first.c1 == 0.0 and last.c2 == 0.0
    q = QosSpec.for_params(0.01, 0.01, P0)
    prob = Problem(mirrored, bpsk_model, P0, q)
    single = run_algorithm1(prob, np.full(prob.n, TAG_Z), Weights.of(1.0))
    assert last.c1 == pytest.approx(single.c1, rel=1e-12)


def test_exchange_symmetry(sym_trace):
    pts = sym_trace.points
    for a, b in zip(pts, reversed(pts)):
        assert a.c1 == pytest.approx(b.c2, rel=2e-2)
    mid = pts[len(pts) // 2]
    assert mid.c1 == pytest.approx(mid.c2, rel=2e-2)


def test_trace_is_convex_frontier(sym_trace):
    assert sym_trace.failed == []
    assert interior_points(sym_trace) == []
    assert support_violations(sym_trace, rtol=1e-4) == []


def test_stricter_qos_shrinks_trace(small_ensemble):
    objs = []
    for th in (0.001, 0.1):
        q = QosSpec.for_params(th, th, P0)
        objs.append(trace_region(small_ensemble, q, P0, (BPSK, BPSK), 3).arrays()[3])
    assert np.all(objs[1] < objs[0])


def test_grid_of_two_gives_endpoints(small_ensemble):
    q = QosSpec.for_params(0.01, 0.01, P0)
    tr = trace_region(small_ensemble, q, P0, (GAUSSIAN, GAUSSIAN), 2)
    assert [p.lambda1 for p in tr.points] == [0.0, 1.0]
    with pytest.raises(InvalidArgument):
        trace_region(small_ensemble, q, P0, (BPSK, BPSK), 1)


def test_failed_points_are_marked(small_ensemble):
    q = QosSpec.for_params(0.01, 0.01, P0)
    tr = trace_region(small_ensemble, q, P0, (BPSK, BPSK), 3, tols=SolverTolerances(outer_cap=1))
    mid = tr.points[1]
    assert not mid.converged and mid.note.startswith("convergence")
    assert math.isnan(tr.arrays()[1][1])
    assert tr.points[0].converged and tr.points[2].converged
