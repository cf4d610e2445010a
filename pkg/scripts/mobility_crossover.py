#!/usr/bin/env python3
"""Mobility comparison: stale-feedback CLSM vs feedback-free transmission.

Sweeps the configured speeds with a 3 ms feedback delay and writes
mobility_runs.csv / fig_mobility.csv into the output directory.

    python3 scripts/mobility_crossover.py [--config configs/mobility.json] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ffmimo.harness.cli import main as cli_main  # noqa: E402

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "mobility.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(DEFAULT))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    argv = ["experiment", "mobility", "--config", args.config]
    if args.seed is not None:
        argv += ["--seed", str(args.seed)]
    if args.out is not None:
        argv += ["--out", args.out]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
