#!/usr/bin/env python3
"""Candidate-grid design study for a mean-shift parameter interval.

Runs the built-in ``example1`` preset: greedy grid construction under an
optimality-loss budget, a verification sweep over a dense parameter mesh, and
Monte Carlo efficiency estimates at the designed candidates and between them.
Writes results.csv, manifest.json, and config.txt into the output directory.
"""

import argparse
import sys

from chartbank.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out-grid-design", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--runs", type=int, default=None, help="runs per cell")
    args = parser.parse_args()
    argv = ["preset", "example1", "--out", args.out, "--seed", str(args.seed)]
    if args.runs is not None:
        argv += ["--runs", str(args.runs)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
