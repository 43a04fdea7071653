"""Region traces for the four figure presets.

Runs ``macap region`` for each preset and prints a compact table of the
axis intercepts and the equal-weight objective of every case.

    python scripts/reproduce_figures.py [--presets fig1 fig4] [--samples 2000] [--out results]
"""

import argparse
import csv
import time
from pathlib import Path

from macap.cli import run
from macap.scenario import parse_scenario


def summarize(path):
    rows = [r for r in csv.reader(l for l in path.open() if not l.startswith("#"))][1:]
    lam = [float(r[0]) for r in rows]
    c1 = [float(r[1]) for r in rows]
    c2 = [float(r[2]) for r in rows]
    mid = min(range(len(lam)), key=lambda i: abs(lam[i] - 0.5))
    return c1[-1], c2[0], 0.5 * (c1[mid] + c2[mid])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=["fig1", "fig2", "fig3", "fig4"])
    ap.add_argument("--samples", type=int, default=2000)
    ap.add_argument("--lambda-points", type=int, default=21)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    for name in args.presets:
        sc = parse_scenario(f"preset: {name}\nsamples: {args.samples}\nseed: {args.seed}\n"
                            f"lambda_points: {args.lambda_points}\n")
        out = Path(args.out) / name
        t0 = time.perf_counter()
        run(sc, "region", out)
        print(f"{name}: {len(sc.cases)} cases in {time.perf_counter() - t0:.0f}s -> {out}")
        print(f"  {'case':48s} {'C1 axis':>9s} {'C2 axis':>9s} {'obj@0.5':>9s}")
        for case in sc.cases:
            a1, a2, mid = summarize(out / f"region_{case.name}.csv")
            print(f"  {case.name:48s} {a1:9.4f} {a2:9.4f} {mid:9.4f}")


if __name__ == "__main__":
    main()
