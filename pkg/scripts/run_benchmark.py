#!/usr/bin/env python3
"""Run the full g-and-k / normal benchmark study end to end.

Writes a config file, builds the reference table, runs the coverage harness
in both pseudo-observed modes, and leaves all reports under the output
directory.  With default settings this takes a few minutes; pass --n-table
2000000 to match the original study scale (slower, more memory).

Usage:
    python scripts/run_benchmark.py --out out/benchmark [--n-table 200000]
"""

import argparse
import json
import sys
from pathlib import Path

from abc_calibrate.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="out/benchmark", help="output directory")
    parser.add_argument("--n-table", type=int, default=200_000, help="reference table size")
    parser.add_argument("--n-epsilons", type=int, default=20, help="size of the epsilon grid")
    parser.add_argument("--c", type=int, default=200, help="number of pseudo-observed datasets")
    parser.add_argument("--seed", type=int, default=1, help="master seed")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "model_set": "gk-normal",
        "n_table": args.n_table,
        "n_obs": 100,
        "allocation": "equal",
        "seed": args.seed,
        "out_dir": str(out),
        "observed": {"synthetic": {"model": "gk", "params": [0.2], "seed": args.seed}},
        "harness": {
            "c": args.c,
            "n_epsilons": args.n_epsilons,
            "v_mode": "truncated",
            "adjust": "none",
            "model_prob_mode": "reweighted",
        },
        "mc_replicates": 999,
    }
    cfg_path = out / "benchmark.json"
    cfg_path.write_text(json.dumps(config, indent=1))
    print(f"config -> {cfg_path}")

    code = cli_main(["build", "-c", str(cfg_path)])
    if code != 0:
        return code

    threads = ["--threads", str(args.threads)] if args.threads else []
    for v_mode in ("truncated", "prior"):
        run_out = out / v_mode
        code = cli_main(
            ["diagnose", "-c", str(cfg_path), "--v-mode", v_mode, "--out", str(run_out)]
            + threads
        )
        if code != 0:
            return code
        print(f"{v_mode} reports -> {run_out}")
    print("done; plot with: python scripts/plot_report.py", out / "truncated")
    return 0


if __name__ == "__main__":
    sys.exit(main())
