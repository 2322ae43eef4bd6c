#!/usr/bin/env python3
"""Delay-vs-alpha study for three variance-shift sources watched jointly.

Runs the built-in ``fig5`` preset: a window-limited joint detector over three
independent sources with a shared change time, per-source candidate grids,
and a sliding window of 200 slots.  Writes results.csv, manifest.json, and
config.txt into the output directory.
"""

import argparse
import sys

from chartbank.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out-multisource", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--runs", type=int, default=None, help="runs per cell")
    args = parser.parse_args()
    argv = ["preset", "fig5", "--out", args.out, "--seed", str(args.seed)]
    if args.runs is not None:
        argv += ["--runs", str(args.runs)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
