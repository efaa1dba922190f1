#!/usr/bin/env python3
"""Run every experiment protocol with the default config and collect reports.

Thin convenience wrapper over the `semiwtc` CLI; writes one output directory
per protocol under --out.
"""

import argparse
import os
import tempfile

from semiwtc.cli import main as cli_main

DEFAULT_CONFIG = """
train.cum_enabled = true
experiment.seeds = 0,1,2
"""


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None,
                        help="config file (default: built-in defaults, CUM on)")
    parser.add_argument("--out", default="runs")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--modes", nargs="+",
                        default=["standard", "ratio_sweep", "ablation",
                                 "mislabel", "unseen", "aar"])
    args = parser.parse_args()

    config = args.config
    tmp = None
    if config is None:
        tmp = tempfile.NamedTemporaryFile("w", suffix=".conf", delete=False)
        tmp.write(DEFAULT_CONFIG)
        tmp.close()
        config = tmp.name
    try:
        for mode in args.modes:
            out = os.path.join(args.out, mode)
            print(f"=== {mode} -> {out}")
            cli_main(["experiment", mode, "--config", config, "--out", out,
                      "--threads", str(args.threads)])
    finally:
        if tmp is not None:
            os.unlink(tmp.name)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
