#!/usr/bin/env python3
"""Minimum SNR versus array size for several phase-variation bounds.

Runs the sweep in ``configs/fig3.cfg`` (or another config) and prints the
gaps between alpha values and the array gain per doubling of N.

    python3 scripts/fig3_sweep.py --workers 1
    python3 scripts/fig3_sweep.py --reuse        # summarize an existing CSV
"""

import argparse
import logging
import sys
from math import nan
from collections import defaultdict
from pathlib import Path

from cesim.cli import csv_body, parse_config, resolve_workers, run_sweep

ROOT = Path(__file__).resolve().parents[1]


def load(path):
    table = defaultdict(dict)
    for line in csv_body(path.read_text()).splitlines()[1:]:
        c = line.split(",")
        table[int(c[0])][float(c[4])] = float(c[5])
    return table


def summarize(table):
    alphas = sorted({a for row in table.values() for a in row}, reverse=True)
    print("N    " + "".join(f"alpha={a:<8g}" for a in alphas))
    for n in sorted(table):
        print(f"{n:<5}" + "".join(f"{table[n].get(a, nan):<14.2f}" for a in alphas))
    if 1.0 in alphas:
        for a in alphas[1:]:
            gaps = ", ".join(f"N={n}: {table[n].get(a, nan) - table[n][1.0]:+.2f}" for n in sorted(table))
            print(f"gap alpha={a:g} vs 1 (dB): {gaps}")
        ns = sorted(table)
        for lo, hi in zip(ns, ns[1:]):
            print(f"array gain {lo}->{hi} at alpha=1: {table[lo][1.0] - table[hi][1.0]:.2f} dB")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "fig3.cfg"))
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--reuse", action="store_true", help="skip the run and summarize the existing CSV")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    spec = parse_config(Path(args.config).read_text())
    out = Path(args.out) if args.out else ROOT / spec.out
    if not args.reuse:
        out.parent.mkdir(parents=True, exist_ok=True)
        failures = run_sweep(spec, workers=resolve_workers(args.workers), out=out)
        if failures:
            print(f"{failures} sweep point(s) failed", file=sys.stderr)
    summarize(load(out))


if __name__ == "__main__":
    main()
