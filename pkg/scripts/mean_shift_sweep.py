#!/usr/bin/env python3
"""Delay-vs-alpha study for a single Gaussian mean-shift sequence.

Runs the built-in ``fig4`` preset: sum-over-starts and max-over-starts chart
banks on a coarse and a fine candidate grid, sweeping the false-alarm budget.
Writes results.csv, manifest.json, and config.txt into the output directory.
"""

import argparse
import sys

from chartbank.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out-mean-shift", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--runs", type=int, default=None, help="runs per cell")
    args = parser.parse_args()
    argv = ["preset", "fig4", "--out", args.out, "--seed", str(args.seed)]
    if args.runs is not None:
        argv += ["--runs", str(args.runs)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
