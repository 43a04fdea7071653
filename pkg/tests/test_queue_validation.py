import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from macap.effective_capacity import effective_capacity
from macap.errors import EstimationError, InvalidArgument
from macap.queue_validation import (QueueTrace, UnstableQueueWarning, estimate_decay, export_tail,
                                    lindley, simulate_queue)
from oracles import lindley_loop

# two-point service process: 0 or 2 bits/s/Hz, n = 100 symbols per frame
R2 = np.array([0.0, 2.0])
N = 100.0


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=200), st.floats(0, 20))
def test_lindley_matches_loop(x, q0):
    x = np.array(x)
    ref = lindley_loop(np.concatenate([[q0], x]))[1:]
    got = lindley(x, q0)
    assert np.all(got >= 0)
    assert np.allclose(got, ref, atol=1e-9 * (1 + np.abs(ref).max()))


def test_underloaded_queue_is_empty():
    r = np.array([0.5, 0.8, 1.2])
    tr = simulate_queue(r, None, 0.4, 20_000, N, 1)
    assert np.all(tr.occupancy == 0) and not tr.unstable
    with pytest.raises(EstimationError):
        estimate_decay(tr)


def test_overloaded_queue_flagged():
    with pytest.warns(UnstableQueueWarning):
        tr = simulate_queue(R2, None, 1.1, 20_000, N, 1)
    assert tr.unstable
    q = tr.occupancy
    assert q[-1] > q[len(q) // 2] > 0
    with pytest.raises(EstimationError):
        estimate_decay(tr)


def test_arguments_checked():
    with pytest.raises(InvalidArgument):
        simulate_queue(R2, None, 0.5, 100, N, 1)
    with pytest.raises(InvalidArgument):
        simulate_queue(R2, None, -1.0, 20_000, N, 1)


def test_synthetic_exponential_tail():
    rng = np.random.default_rng(5)
    q = rng.exponential(1 / 0.05, 1_000_000)
    est = estimate_decay(QueueTrace(q, 1.0, q.size, N))
    assert est.theta == pytest.approx(0.05, rel=0.05)
    assert est.stderr > 0 and est.n_positive == q.size


@pytest.mark.parametrize("theta", [0.005, 0.01, 0.05])
def test_decay_matches_qos_exponent(theta):
    a = effective_capacity(R2, None, theta, N)
    # closed form for the two-point process
    assert a == pytest.approx(-math.log((1 + math.exp(-2 * theta * N)) / 2) / (theta * N), rel=1e-12)
    est = estimate_decay(simulate_queue(R2, None, a, 400_000, N, 3))
    assert est.theta == pytest.approx(theta, rel=0.15)


def test_slack_arrivals_decay_faster():
    theta = 0.01
    a = effective_capacity(R2, None, theta, N)
    est = estimate_decay(simulate_queue(R2, None, 0.9 * a, 400_000, N, 3))
    assert est.theta > theta


def test_stderr_scales_with_inverse_sqrt_frames():
    a = effective_capacity(R2, None, 0.01, N)
    small, large = [], []
    for seed in range(6):
        small.append(estimate_decay(simulate_queue(R2, None, a, 100_000, N, seed)).stderr)
        large.append(estimate_decay(simulate_queue(R2, None, a, 400_000, N, seed)).stderr)
    ratio = np.mean(large) / np.mean(small)
    assert 0.35 < ratio < 0.7


def test_seeded_and_tail_export(tmp_path):
    a = effective_capacity(R2, None, 0.01, N)
    t1 = simulate_queue(R2, None, a, 20_000, N, 9)
    t2 = simulate_queue(R2, None, a, 20_000, N, 9)
    assert np.array_equal(t1.occupancy, t2.occupancy)
    assert t1.occupancy.size == 18_000
    est = estimate_decay(t1)
    p = tmp_path / "tail.csv"
    export_tail(est, p, "# fingerprint: f\n")
    lines = p.read_text().splitlines()
    assert lines[1] == "q_bits,log_tail" and len(lines) == 2 + est.thresholds.size


def test_tail_probabilities():
    tr = QueueTrace(np.array([0.0, 1.0, 2.0, 3.0]), 1.0, 4, N)
    assert np.allclose(tr.tail([0.0, 1.5, 3.0, 4.0]), [1.0, 0.5, 0.25, 0.0])
