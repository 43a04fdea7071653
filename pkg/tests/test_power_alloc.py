import math

import numpy as np
import pytest

from macap.channel import ChannelSample, RicianSpec, SystemParams, sample_ensemble
from macap.constellation import GAUSSIAN, make_psk
from macap.decoding import partition_ergodic
from macap.errors import ConvergenceError, InvalidArgument
from macap.power_alloc import (LagrangeState, Problem, QosSpec, SolverTolerances, TAG_Z, TAG_ZC,
                               Weights, kkt_report, kkt_residual_Z, kkt_residual_Zc, objective_of,
                               rates_for_policy, run_algorithm1, solve_alpha_pair, uniform_policy,
                               with_tols)
from macap.surface import RateModel
from oracles import waterfill

P0 = SystemParams.from_db(0.0)
Q = QosSpec.for_params(0.01, 0.01, P0)


@pytest.fixture(scope="module")
def prob(bpsk_model, small_ensemble):
    return Problem(small_ensemble, bpsk_model, P0, Q)


@pytest.fixture(scope="module")
def solved(prob):
    return run_algorithm1(prob, partition_ergodic(prob.ensemble), Weights.of(0.5))


def test_kkt_and_slackness(prob, solved):
    eps = solved.state.epsilon
    r1, r2 = kkt_report(prob, solved, Weights.of(0.5))
    a1, a2 = solved.policy.alpha1, solved.policy.alpha2
    for r, a in ((r1, a1), (r2, a2)):
        assert np.all(np.abs(r[a > 0]) < 1e-6 * eps)
        assert np.all(r[a == 0] <= 1e-6 * eps)


def test_budget_and_nonnegative(prob, solved):
    assert abs(solved.policy.budget(prob.ensemble) - 1.0) <= 1e-3
    assert np.all(solved.policy.alpha1 >= 0) and np.all(solved.policy.alpha2 >= 0)
    assert solved.state.epsilon > 0 and not solved.slack_budget


def test_psi_consistent_with_rates(prob, solved):
    n = prob.qos.n
    for th, r, psi in ((Q.theta1, solved.rates.r1, solved.state.psi1),
                       (Q.theta2, solved.rates.r2, solved.state.psi2)):
        direct = float(np.dot(prob.w, np.exp(-th * n * r)))
        assert direct == pytest.approx(psi, abs=1e-6)
        assert 0 < psi <= 1


def test_rates_within_joint_information(prob, solved):
    t = prob.model.terms(solved.policy.alpha1 * P0.pbar * prob.z1,
                         solved.policy.alpha2 * P0.pbar * prob.z2, prob.phi)
    i12_bits = t[0] / math.log(2)
    r1, r2 = solved.rates.r1, solved.rates.r2
    assert np.all(r1 >= 0) and np.all(r2 >= 0)
    assert np.all(r1 + r2 <= i12_bits + 1e-9)


def _scan(f, s, st, prob, j, other, grid):
    args = [(a, other) if j == 0 else (other, a) for a in grid]
    return np.array([f(s, *x, st, Weights.of(0.5), Q, P0, prob.model)[j] for x in args])


def test_residuals_single_crossing(prob, solved):
    # what the bracketed root search needs: one sign change in own alpha
    st = solved.state
    grid = np.linspace(0.0, 3.0, 60)
    for i in range(100):
        s = prob.ensemble[i]
        for f in (kkt_residual_Z, kkt_residual_Zc):
            for j in (0, 1):
                r = _scan(f, s, st, prob, j, 0.4, grid)
                assert np.count_nonzero(np.diff(np.sign(r)) != 0) <= 1


def test_gaussian_residuals_single_crossing(gauss_model, small_ensemble):
    prob = Problem(small_ensemble, gauss_model, P0, Q)
    st = LagrangeState(0.2, 0.8, 0.7)
    grid = np.linspace(0.0, 3.0, 40)
    for i in range(100):
        s = prob.ensemble[i]
        for f in (kkt_residual_Z, kkt_residual_Zc):
            for j in (0, 1):
                r = _scan(f, s, st, prob, j, 0.4, grid)
                assert np.count_nonzero(np.diff(np.sign(r)) != 0) <= 1


def test_bpsk_cross_residual_can_increase(prob, solved):
    """The interference term d(I12 - I1)/ds1 rises toward (and for finite
    inputs past) zero, so the two-term residual is not monotone in its own
    alpha."""
    st = solved.state
    s = prob.ensemble[14]
    r = _scan(kkt_residual_Z, s, st, prob, 0, 0.4, np.linspace(0.6, 1.0, 9))
    assert np.any(np.diff(r) > 1e-3)


def test_dominates_uniform_and_random(prob, solved):
    w = Weights.of(0.5)
    tags = solved.tags
    u = uniform_policy(prob)
    assert solved.objective >= objective_of(prob, w, rates_for_policy(prob, tags, u.alpha1, u.alpha2))[2]
    rng = np.random.default_rng(4)
    for _ in range(20):
        a1 = rng.exponential(1.0, prob.n)
        a2 = rng.exponential(1.0, prob.n)
        scale = float(np.dot(prob.w, a1 + a2))
        rand_tags = rng.integers(0, 2, prob.n)
        for t in (tags, rand_tags):
            obj = objective_of(prob, w, rates_for_policy(prob, t, a1 / scale, a2 / scale))[2]
            assert solved.objective >= obj


def test_single_weight_silences_other_user(prob):
    for lam, quiet in ((1.0, 2), (0.0, 1)):
        res = run_algorithm1(prob, np.full(prob.n, TAG_Z if lam == 1.0 else TAG_ZC), Weights.of(lam))
        a_quiet = res.policy.alpha2 if quiet == 2 else res.policy.alpha1
        assert np.all(a_quiet == 0)
        assert res.policy.budget(prob.ensemble) == pytest.approx(1.0, abs=1e-3)


def test_pair_trivial_cases(prob):
    st = LagrangeState(1e6, 1.0, 1.0)
    s = prob.ensemble[0]
    assert solve_alpha_pair(s, TAG_Z, st, Weights.of(0.5), Q, P0, prob.model) == (0.0, 0.0)
    zero = ChannelSample(0j, 0j, 1.0)
    st = LagrangeState(0.1, 1.0, 1.0)
    for tag in (TAG_Z, TAG_ZC):
        assert solve_alpha_pair(zero, tag, st, Weights.of(0.5), Q, P0, prob.model) == (0.0, 0.0)


def test_pair_solution_zeroes_residuals(prob):
    st = LagrangeState(0.2, 0.9, 0.8)
    s = prob.ensemble[3]
    for tag, f in ((TAG_Z, kkt_residual_Z), (TAG_ZC, kkt_residual_Zc)):
        a1, a2 = solve_alpha_pair(s, tag, st, Weights.of(0.4), Q, P0, prob.model)
        r = f(s, a1, a2, st, Weights.of(0.4), Q, P0, prob.model)
        for a, x in zip((a1, a2), r):
            assert (abs(x) < 1e-6 * st.epsilon) if a > 0 else (x <= 1e-6 * st.epsilon)


def test_zero_weight_residual_is_cross_term_only(prob):
    st = LagrangeState(0.3, 1.0, 1.0)
    s = prob.ensemble[5]
    r = kkt_residual_Z(s, 0.5, 0.5, st, Weights.of(0.0), Q, P0, prob.model)
    t = prob.model.terms(0.5 * P0.pbar * s.z1, 0.5 * P0.pbar * s.z2, s.phase)[:, 0]
    i12, g1, _, i1, m1, _, _ = t
    r2n = i12 - i1
    cross = math.exp(-Q.c(2) * r2n) * P0.pbar * s.z1 * (g1 - m1) / math.log(2)
    assert r[0] == pytest.approx(cross - st.epsilon, rel=1e-12)


def test_gaussian_single_user_waterfilling(gauss_model, small_ensemble):
    q0 = QosSpec.for_params(0.0, 0.0, P0)
    prob = Problem(small_ensemble, gauss_model, P0, q0)
    res = run_algorithm1(prob, np.full(prob.n, TAG_Z), Weights.of(1.0))
    ref = waterfill(prob.z1, prob.w, P0.pbar)
    assert np.allclose(res.policy.alpha1, ref, atol=2e-3)
    ec = float(np.dot(prob.w, np.log2(1 + ref * P0.pbar * prob.z1)))
    assert res.c1 == pytest.approx(ec, rel=1e-5)


def test_secant_and_damped_agree(prob, solved):
    tight = with_tols(prob, budget_tol=1e-7)
    sec = run_algorithm1(tight, solved.tags, Weights.of(0.5))
    damped = run_algorithm1(with_tols(tight, psi_update="damped"), solved.tags, Weights.of(0.5))
    assert damped.objective == pytest.approx(sec.objective, rel=1e-7)
    assert damped.state.psi1 == pytest.approx(sec.state.psi1, rel=1e-6)
    assert damped.outer_iterations >= sec.outer_iterations


def test_outer_cap_raises(prob):
    tight = with_tols(prob, outer_cap=1)
    with pytest.raises(ConvergenceError) as ei:
        run_algorithm1(tight, partition_ergodic(prob.ensemble), Weights.of(0.3))
    assert ei.value.loop == "outer" and ei.value.history


def test_free_tags_never_worse(prob, solved):
    tight = with_tols(prob, budget_tol=1e-7)
    fixed = run_algorithm1(tight, solved.tags, Weights.of(0.5))
    free = run_algorithm1(tight, solved.tags, Weights.of(0.5), free_tags=True)
    assert free.objective >= fixed.objective * (1 - 1e-9)


def test_bad_arguments():
    with pytest.raises(InvalidArgument):
        Weights(0.7, 0.7)
    with pytest.raises(InvalidArgument):
        QosSpec(-1.0, 0.0)
    with pytest.raises(InvalidArgument):
        SolverTolerances(psi_damping=1.0)


def test_higher_qos_lowers_capacity(bpsk_model):
    ens = sample_ensemble(RicianSpec(-6.88), RicianSpec(-6.88), 150, 2)
    objs = []
    for th in (0.001, 0.01, 0.1):
        prob = Problem(ens, bpsk_model, P0, QosSpec.for_params(th, th, P0))
        objs.append(run_algorithm1(prob, partition_ergodic(ens), Weights.of(0.5)).objective)
    assert objs[0] > objs[1] > objs[2] > 0


def test_psi_secant_handles_slow_contraction(gauss_model):
    # at theta*n = 10 the plain psi map contracts at about 0.8 per step
    p = SystemParams.from_db(5.0)
    ens = sample_ensemble(RicianSpec(-6.88), RicianSpec(-6.88), 400, 1)
    prob = Problem(ens, gauss_model, p, QosSpec.for_params(0.1, 0.1, p), SolverTolerances(outer_cap=15))
    res = run_algorithm1(prob, partition_ergodic(ens), Weights.of(0.5), free_tags=True)
    damped = run_algorithm1(with_tols(prob, psi_update="damped", outer_cap=400), partition_ergodic(ens),
                            Weights.of(0.5), free_tags=True)
    assert res.outer_iterations <= 15
    assert res.objective == pytest.approx(damped.objective, rel=1e-4)
