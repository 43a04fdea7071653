"""Queue-level check that the effective capacity sets the tail decay.

For each QoS exponent the optimal equal-weight allocation is computed,
a queue fed at a = C(theta) is simulated, and the fitted decay rate of
Pr(Q >= q) is compared with theta.

    python scripts/queue_check.py [--thetas 0.005 0.01 0.05] [--frames 1000000]
"""

import argparse
import time

from macap.channel import RicianSpec, SystemParams, sample_ensemble
from macap.constellation import preset
from macap.effective_capacity import effective_capacity, solve_point
from macap.power_alloc import Problem, QosSpec
from macap.queue_validation import estimate_decay, simulate_queue
from macap.surface import RateModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--thetas", type=float, nargs="+", default=[0.005, 0.01, 0.05])
    ap.add_argument("--input", default="bpsk")
    ap.add_argument("--pbar-db", type=float, default=0.0)
    ap.add_argument("--k-db", type=float, default=-6.88)
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--frames", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    p = SystemParams.from_db(args.pbar_db)
    spec = RicianSpec(args.k_db)
    ens = sample_ensemble(spec, spec, args.samples, args.seed)
    model = RateModel(preset(args.input), preset(args.input))
    print(f"{'theta':>8s} {'C(theta)':>10s} {'theta_hat':>10s} {'stderr':>9s} {'rel err':>8s} {'s':>5s}")
    for theta in args.thetas:
        t0 = time.perf_counter()
        prob = Problem(ens, model, p, QosSpec.for_params(theta, theta, p))
        res = solve_point(prob, 0.5)[0]
        cap = effective_capacity(res.rates.r1, ens.weights, theta, p.tb)
        est = estimate_decay(simulate_queue(res.rates.r1, ens.weights, cap, args.frames, p.tb, 7))
        print(f"{theta:8.4g} {cap:10.5f} {est.theta:10.5g} {est.stderr:9.2g} "
              f"{est.theta / theta - 1:8.1%} {time.perf_counter() - t0:5.0f}")


if __name__ == "__main__":
    main()
