"""Command-line front end.

    macap <region|boundary|validate|policy> --scenario FILE [--out DIR]
          [--seed N] [--lambda-points K]

Each command writes CSV files, each starting with a ``# fingerprint:``
comment, plus a key=value ``report`` holding timings, iteration counts
and warnings.  Failures print one ``error category=... module=...`` line
to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
import traceback
import warnings
from pathlib import Path

import numpy as np

from .channel import sample_ensemble
from .decoding import PolicyContext, boundary_curve, export_boundary, z2_ceiling
from .effective_capacity import effective_capacity, solve_point, trace_region
from .errors import MacapError
from .power_alloc import Problem
from .queue_validation import estimate_decay, export_tail, simulate_queue
from .scenario import Case, Scenario, load_scenario
from .surface import RateModel

COMMANDS = ("region", "boundary", "validate", "policy")
EXIT_CODES = {"parse": 2, "invalid-argument": 2, "convergence": 3, "numeric": 4, "estimation": 5}
log = logging.getLogger("macap")


class Report:
    """Ordered key=value lines."""

    def __init__(self):
        self.items = []

    def add(self, key, value):
        if isinstance(value, float):
            value = repr(value)
        self.items.append((key, str(value).replace("\n", " ")))

    def write(self, path):
        with open(path, "w") as fh:
            for k, v in self.items:
                fh.write(f"{k}={v}\n")


def _header(sc: Scenario, case: Case | None, what: str) -> str:
    lines = [f"# fingerprint: {sc.fingerprint()}", f"# content: {what}"]
    if case is not None:
        lines.append(f"# case: {case.name}")
    lines.append(f"# samples: {sc.samples} seed: {sc.seed}")
    return "\n".join(lines) + "\n"


def _ensemble(sc: Scenario, case: Case):
    return sample_ensemble(case.spec1, case.spec2, sc.samples, sc.seed)


def _problem(sc: Scenario, case: Case) -> Problem:
    return Problem(_ensemble(sc, case), RateModel(*case.inputs), case.params, case.qos, sc.tols)


def cmd_region(sc: Scenario, out: Path, rep: Report):
    for case in sc.cases:
        t0 = time.perf_counter()
        ens = _ensemble(sc, case)
        trace = trace_region(ens, case.qos, case.params, case.inputs, sc.lambda_points, sc.tols,
                             max_rounds=sc.max_rounds, fingerprint=sc.fingerprint())
        path = out / f"region_{case.name}.csv"
        trace.to_csv(path, _header(sc, case, "region trace"))
        rep.add(f"{case.name}.file", path.name)
        rep.add(f"{case.name}.seconds", round(time.perf_counter() - t0, 3))
        rep.add(f"{case.name}.rounds", sum(p.rounds for p in trace.points))
        rep.add(f"{case.name}.failed_points", len(trace.failed))
        for p in trace.points:
            if p.note:
                rep.add(f"{case.name}.warning.lambda{p.lambda1:g}", p.note)


def cmd_boundary(sc: Scenario, out: Path, rep: Report):
    for case in sc.cases:
        t0 = time.perf_counter()
        ens = _ensemble(sc, case)
        ctx = PolicyContext(case.inputs[0], case.inputs[1], sc.boundary_alpha[0],
                            sc.boundary_alpha[1], case.params.pbar)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            curve = boundary_curve(sc.boundary_z1, ctx, sc.boundary_tol, z2_ceiling(ens))
        path = out / f"boundary_{case.name}.csv"
        export_boundary(curve, path, _header(sc, case, "decoding-order boundary"))
        rep.add(f"{case.name}.file", path.name)
        rep.add(f"{case.name}.seconds", round(time.perf_counter() - t0, 3))
        rep.add(f"{case.name}.roots", int(np.count_nonzero(~np.isnan(curve[:, 1]))))
        for w in caught:
            rep.add(f"{case.name}.warning", str(w.message))


def cmd_validate(sc: Scenario, out: Path, rep: Report):
    j = sc.queue_user
    for case in sc.cases:
        t0 = time.perf_counter()
        theta = case.qos.theta1 if j == 1 else case.qos.theta2
        if theta <= 0:
            rep.add(f"{case.name}.skipped", "theta is 0; no queue tail to check")
            continue
        prob = _problem(sc, case)
        res, rounds, ok, notes, _ = solve_point(prob, sc.lambda1, sc.max_rounds)
        rates = res.rates.r1 if j == 1 else res.rates.r2
        n = case.params.tb
        cap = effective_capacity(rates, prob.w, theta, n)
        trace = simulate_queue(rates, prob.w, cap, sc.queue_frames, n, sc.queue_seed)
        est = estimate_decay(trace)
        path = out / f"tail_{case.name}.csv"
        export_tail(est, path, _header(sc, case, f"queue tail, user {j}, arrival = C(theta)"))
        rep.add(f"{case.name}.file", path.name)
        rep.add(f"{case.name}.theta", theta)
        rep.add(f"{case.name}.arrival", cap)
        rep.add(f"{case.name}.theta_hat", est.theta)
        rep.add(f"{case.name}.stderr", est.stderr)
        rep.add(f"{case.name}.relative_error", est.theta / theta - 1.0)
        rep.add(f"{case.name}.seconds", round(time.perf_counter() - t0, 3))
        for note in notes:
            rep.add(f"{case.name}.warning", note)


def cmd_policy(sc: Scenario, out: Path, rep: Report):
    for case in sc.cases:
        t0 = time.perf_counter()
        prob = _problem(sc, case)
        res, rounds, ok, notes, _ = solve_point(prob, sc.lambda1, sc.max_rounds)
        path = out / f"policy_{case.name}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(_header(sc, case, f"power policy at lambda1={sc.lambda1:g}"))
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["index", "z1", "z2", "order", "alpha1", "alpha2", "r1", "r2"])
            for i in range(prob.n):
                wr.writerow([i, repr(float(prob.z1[i])), repr(float(prob.z2[i])),
                             "2,1" if res.tags[i] == 0 else "1,2",
                             repr(float(res.policy.alpha1[i])), repr(float(res.policy.alpha2[i])),
                             repr(float(res.rates.r1[i])), repr(float(res.rates.r2[i]))])
        with open(out / f"convergence_{case.name}.log", "w") as fh:
            for row in res.history:
                fh.write(" ".join(repr(x) if isinstance(x, float) else str(x) for x in row) + "\n")
        st = res.state
        rep.add(f"{case.name}.file", path.name)
        rep.add(f"{case.name}.c1", res.c1)
        rep.add(f"{case.name}.c2", res.c2)
        rep.add(f"{case.name}.epsilon", st.epsilon)
        rep.add(f"{case.name}.psi1", st.psi1)
        rep.add(f"{case.name}.psi2", st.psi2)
        rep.add(f"{case.name}.budget", res.policy.budget(prob.ensemble))
        rep.add(f"{case.name}.rounds", rounds)
        rep.add(f"{case.name}.outer_iterations", res.outer_iterations)
        rep.add(f"{case.name}.seconds", round(time.perf_counter() - t0, 3))
        for note in notes:
            rep.add(f"{case.name}.warning", note)


HANDLERS = {"region": cmd_region, "boundary": cmd_boundary, "validate": cmd_validate,
            "policy": cmd_policy}


def run(scenario: Scenario, command: str, out: Path | str | None = None) -> Report:
    """Execute one command; returns the report (also written to out/report)."""
    if command not in HANDLERS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out if out is not None else scenario.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = Report()
    rep.add("command", command)
    rep.add("fingerprint", scenario.fingerprint())
    rep.add("preset", scenario.preset or "")
    rep.add("cases", len(scenario.cases))
    t0 = time.perf_counter()
    HANDLERS[command](scenario, out, rep)
    rep.add("seconds", round(time.perf_counter() - t0, 3))
    rep.add("status", "ok")
    rep.write(out / "report")
    return rep


def _origin(exc: BaseException) -> str:
    mod = "macap"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("macap."):
            mod = name
    return mod.split(".", 1)[-1]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="macap",
                                 description="Effective capacity regions of two-user fading MACs.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario file (YAML key: value lines)")
    ap.add_argument("--out", help="output directory (overrides the scenario's 'out')")
    ap.add_argument("--seed", type=int, help="ensemble seed override")
    ap.add_argument("--lambda-points", type=int, help="number of weights per region trace")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = load_scenario(args.scenario).with_overrides(args.seed, args.lambda_points, args.out)
        run(sc, args.command)
    except MacapError as exc:
        print(f"error category={exc.category} module={_origin(exc)} message={exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error category=io module=cli message={exc}", file=sys.stderr)
        return 1
    print(f"{args.command}: {len(sc.cases)} case(s) written to {sc.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
