#!/usr/bin/env python3
"""Dataset generation + CSI-map training + prediction-error report.

Generates the labeled dataset (if the output directory has none), trains
the configured predictor, saves checkpoints, and writes per-field
normalized MAE for the test split.  Swap predictor.kind between "lqtn" and
"independent" in the config to reproduce the shared-vs-independent
comparison.

    python3 scripts/train_csi_map.py [--config configs/train_lqtn.json] [--seed 0]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from ffmimo.harness.cli import main as cli_main  # noqa: E402

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "train_lqtn.json"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(DEFAULT))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--skip-train", action="store_true",
                        help="only generate the dataset and evaluate")
    args = parser.parse_args()
    common = ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    if args.out is not None:
        common += ["--out", args.out]
    rc = cli_main(["dataset", "gen", *common])
    if rc != 0:
        return rc
    if not args.skip_train:
        rc = cli_main(["train", *common])
        if rc != 0:
            return rc
    return cli_main(["eval-csi", *common])


if __name__ == "__main__":
    sys.exit(main())
